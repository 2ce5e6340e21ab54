"""
Convergence studies.

An ``ExperimentConfig`` names a problem, a scheme and a ladder of (dt, dx)
resolutions. ``run_convergence`` integrates every ladder row to ``t_end``,
measures the error against the exact (or reference) solution and reports
pairwise convergence rates plus a least-squares order fit.
"""

import asyncio
import csv
import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import scipy

from mpe_split import __version__
from mpe_split.config import MPE_THREADS, REFERENCE_TOL, TABLE1_REFERENCE
from mpe_split.core import SplitSystem, advance, error_norms, reference_flow
from mpe_split.linearize import ZassenhausCorrection, zassenhaus_ab_step
from mpe_split.mpe import KSequence, fit_order, mpe_scheme, mpe_step
from mpe_split.problems import PROBLEM_IDS, build_problem
from mpe_split.splitting import (
    InterpolationPolicy,
    IterativeConfig,
    ab_step,
    burstein_mirin_step,
    dunn_step,
    iterative_split_alternating,
    iterative_split_one,
    strang_step,
    symmetric_sum_step,
)
from mpe_split.utils import EventEmitter, RunTracker

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("dx", "dt", "err_l1", "err_max", "rho_l1", "rho_max", "wall_ms")
MPE_IDS = {"t2": 1, "t4": 2, "t6": 3, "t8": 4, "t10": 5}
SCHEME_IDS = (
    "ab",
    "strang-aba",
    "strang-bab",
    "symmetric-sum",
    "dunn",
    "burstein-mirin",
    "iter-one",
    "iter-alt",
    *MPE_IDS,
)
TABLE1_LABEL = "methodology reproduction, not bit reproduction"

Stepper = Callable[[float, float, np.ndarray], np.ndarray]


class ConfigError(ValueError):
    """Invalid experiment configuration, scheme or problem id."""


class ReportError(OSError):
    """A report could not be written or read."""


# ============================================
# Schemes
# ============================================

def _reject_unknown(scheme_id: str, params: dict):
    if params:
        raise ConfigError(f"unknown parameters for scheme '{scheme_id}': {', '.join(sorted(params))}")


def _is_known_scheme(scheme_id: str) -> bool:
    return scheme_id in SCHEME_IDS or scheme_id.startswith("mpe:k=")


def build_stepper(scheme_id: str, system: SplitSystem, params: Optional[dict] = None) -> Stepper:
    """
    Turn a scheme id and its parameters into a step map ``(t, h, c) -> c``.

    Raises:
        ConfigError: unknown scheme id or parameter
    """
    params = dict(params or {})
    try:
        if scheme_id == "ab":
            order = params.pop("order", "ab")
            zassenhaus = params.pop("zassenhaus", None)
            ztol = params.pop("zassenhaus_tol", 1e-12)
            _reject_unknown(scheme_id, params)
            if zassenhaus:
                return partial(zassenhaus_ab_step, system, corr=ZassenhausCorrection(int(zassenhaus), ztol))
            return partial(ab_step, system, order=order)

        if scheme_id in ("strang-aba", "strang-bab"):
            _reject_unknown(scheme_id, params)
            return partial(strang_step, system, order=scheme_id.split("-")[1])

        fixed = {"symmetric-sum": symmetric_sum_step, "dunn": dunn_step, "burstein-mirin": burstein_mirin_step}
        if scheme_id in fixed:
            _reject_unknown(scheme_id, params)
            return partial(fixed[scheme_id], system)

        if scheme_id in ("iter-one", "iter-alt"):
            cfg = IterativeConfig(
                iterations=int(params.pop("iterations", 2)),
                switch=params.pop("switch", None),
                tol=float(params.pop("tol", 1e-10)),
                policy=InterpolationPolicy(params.pop("policy", "constant")),
                substeps=int(params.pop("substeps", 1)),
                swap=bool(params.pop("swap", False)),
            )
            _reject_unknown(scheme_id, params)
            step = iterative_split_one if scheme_id == "iter-one" else iterative_split_alternating
            return lambda t, h, c: step(system, t, h, c, cfg)

        if scheme_id in MPE_IDS or scheme_id.startswith("mpe:k="):
            k = KSequence.natural(MPE_IDS[scheme_id]) if scheme_id in MPE_IDS else KSequence.parse(scheme_id[6:])
            scheme = mpe_scheme(
                system,
                k,
                order=params.pop("kernel", "aba"),
                mode=params.pop("mode", "closed-form"),
            )
            _reject_unknown(scheme_id, params)
            return partial(mpe_step, scheme)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid parameters for scheme '{scheme_id}': {e}") from e

    raise ConfigError(f"unknown scheme '{scheme_id}' (expected one of {', '.join(SCHEME_IDS)} or mpe:k=...)")


# ============================================
# Configuration
# ============================================

@dataclass(frozen=True)
class LadderEntry:
    dt: float
    dx: Optional[float] = None


def _parse_ladder(raw) -> tuple[LadderEntry, ...]:
    if isinstance(raw, dict):
        if "halvings" not in raw or "dt" not in raw:
            raise ConfigError("a ladder object needs 'dt' and 'halvings'")
        halve = raw.get("halve", "dt")
        if halve not in ("dt", "dx", "both"):
            raise ConfigError(f"'halve' must be dt, dx or both, got {halve!r}")
        dt, dx = float(raw["dt"]), raw.get("dx")
        if halve != "dt" and dx is None:
            raise ConfigError("halving dx needs a starting 'dx'")
        entries = []
        for i in range(int(raw["halvings"]) + 1):
            factor = 0.5 ** i
            entries.append(LadderEntry(
                dt=dt * factor if halve != "dx" else dt,
                dx=None if dx is None else (float(dx) * factor if halve != "dt" else float(dx)),
            ))
        return tuple(entries)

    entries = []
    for item in raw:
        if isinstance(item, dict):
            entries.append(LadderEntry(dt=float(item["dt"]), dx=None if item.get("dx") is None else float(item["dx"])))
        else:
            dt, *rest = item
            entries.append(LadderEntry(dt=float(dt), dx=float(rest[0]) if rest and rest[0] is not None else None))
    return tuple(entries)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A convergence study.

    Consecutive ladder rows either keep dt and refine dx, or refine dt.
    """
    problem: str
    scheme: str
    ladder: tuple[LadderEntry, ...]
    problem_params: dict = field(default_factory=dict)
    scheme_params: dict = field(default_factory=dict)
    norms: tuple[str, ...] = ("l1", "max")
    output: Optional[str] = None
    format: str = "csv"
    seed: int = 0
    rates: bool = True

    def __post_init__(self):
        if self.problem not in PROBLEM_IDS:
            raise ConfigError(f"unknown problem '{self.problem}' (expected one of {', '.join(PROBLEM_IDS)})")
        if not _is_known_scheme(self.scheme):
            raise ConfigError(f"unknown scheme '{self.scheme}'")
        if not self.ladder:
            raise ConfigError("step ladder is empty")
        if self.rates and len(self.ladder) < 2:
            raise ConfigError("rates need at least 2 ladder entries")
        for entry in self.ladder:
            if entry.dt <= 0 or (entry.dx is not None and entry.dx <= 0):
                raise ConfigError(f"ladder steps must be positive, got {entry}")
        for prev, cur in zip(self.ladder, self.ladder[1:]):
            if cur.dt == prev.dt:
                if prev.dx is None or cur.dx is None or not cur.dx < prev.dx:
                    raise ConfigError(f"ladder must decrease: {prev} -> {cur}")
            elif not cur.dt < prev.dt:
                raise ConfigError(f"ladder must decrease: {prev} -> {cur}")
        unknown_norms = set(self.norms) - {"l1", "max"}
        if unknown_norms:
            raise ConfigError(f"unknown norms: {', '.join(sorted(unknown_norms))}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """
        Parse a config document.

        ``problem`` and ``scheme`` are either ids or objects ``{"id": ..., "params": {...}}``;
        ``ladder`` is a list of ``{"dt", "dx"}`` objects / ``[dt, dx]`` pairs, or
        ``{"dt": 0.1, "halvings": 4}`` (optionally with ``dx`` and ``"halve": "dt" | "dx" | "both"``).
        """
        try:
            problem, problem_params = _id_and_params(data["problem"], data.get("problem_params"))
            scheme, scheme_params = _id_and_params(data["scheme"], data.get("scheme_params"))
            return cls(
                problem=problem,
                scheme=scheme,
                ladder=_parse_ladder(data["ladder"]),
                problem_params=problem_params,
                scheme_params=scheme_params,
                norms=tuple(data.get("norms", ("l1", "max"))),
                output=data.get("output"),
                format=data.get("format", "csv"),
                seed=int(data.get("seed", 0)),
                rates=bool(data.get("rates", True)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid experiment config: {e!r}") from e

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "problem": {"id": self.problem, "params": dict(self.problem_params)},
            "scheme": {"id": self.scheme, "params": dict(self.scheme_params)},
            "ladder": [{"dt": e.dt, "dx": e.dx} for e in self.ladder],
            "norms": list(self.norms),
            "output": self.output,
            "format": self.format,
            "seed": self.seed,
            "rates": self.rates,
        }


def _id_and_params(raw, params) -> tuple[str, dict]:
    if isinstance(raw, dict):
        return str(raw["id"]), dict(raw.get("params") or {})
    return str(raw), dict(params or {})


def table1_config(mu: float = 0.05) -> ExperimentConfig:
    """The 3x3 (dx, dt) Burgers ladder with two iterations per step, diffusion solved implicitly."""
    ladder = tuple(LadderEntry(dt=dt, dx=dx) for dt, dx in ((row[1], row[0]) for row in TABLE1_REFERENCE))
    return ExperimentConfig(
        problem="burgers2d",
        scheme="iter-one",
        ladder=ladder,
        problem_params={"mu": mu, "t_end": 1.25},
        scheme_params={"iterations": 2, "swap": True},
    )


def table1_title(cfg: ExperimentConfig) -> str:
    """Table heading naming which Burgers operator is solved implicitly."""
    params = cfg.scheme_params
    implicit, lagged = ("diffusion", "convection") if params.get("swap") else ("convection", "diffusion")
    mu = cfg.problem_params.get("mu", 0.05)
    return (
        f"Burgers, mu={mu}, {cfg.scheme} m={params.get('iterations', 1)}, "
        f"{implicit} implicit, {lagged} from previous iterate ({TABLE1_LABEL})"
    )


# ============================================
# Reports
# ============================================

@dataclass
class ConvergenceRow:
    dx: Optional[float]
    dt: float
    err_l1: Optional[float] = None
    err_max: Optional[float] = None
    rho_l1: Optional[float] = None
    rho_max: Optional[float] = None
    wall_ms: float = 0.0
    error: Optional[str] = None
    row_id: Optional[str] = None


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    fitted_order_l1: Optional[float] = None
    fitted_order_max: Optional[float] = None

    @property
    def failed(self) -> list[ConvergenceRow]:
        return [row for row in self.rows if row.error is not None]

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "fitted_order_l1": self.fitted_order_l1,
            "fitted_order_max": self.fitted_order_max,
            "rows": [asdict(row) for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceReport":
        return cls(
            rows=[ConvergenceRow(**row) for row in data.get("rows", [])],
            metadata=dict(data.get("metadata", {})),
            fitted_order_l1=data.get("fitted_order_l1"),
            fitted_order_max=data.get("fitted_order_max"),
        )


def convergence_rate(err_coarse: float, err_fine: float, ratio: float = 0.5) -> float:
    """
    Observed order log(err_fine / err_coarse) / log(ratio).

    ``ratio`` is fine over coarse resolution, 0.5 for a halved step.
    """
    if err_coarse <= 0 or err_fine <= 0:
        raise ValueError(f"errors must be positive, got {err_coarse} and {err_fine}")
    if ratio <= 0 or ratio == 1:
        raise ValueError(f"resolution ratio must be positive and != 1, got {ratio}")
    return math.log(err_fine / err_coarse) / math.log(ratio)


def _refinement_ratio(prev: ConvergenceRow, cur: ConvergenceRow) -> Optional[float]:
    if cur.dt == prev.dt and prev.dx is not None and cur.dx is not None and cur.dx != prev.dx:
        return cur.dx / prev.dx
    if cur.dx == prev.dx and cur.dt != prev.dt:
        return cur.dt / prev.dt
    return None


def _safe_rate(coarse: Optional[float], fine: Optional[float], ratio: float) -> Optional[float]:
    if coarse is None or fine is None or coarse <= 0 or fine <= 0:
        return None
    return convergence_rate(coarse, fine, ratio)


def fill_rates(rows: list[ConvergenceRow]):
    """Pairwise rates against the previous row when exactly one resolution changed."""
    for prev, cur in zip(rows, rows[1:]):
        ratio = _refinement_ratio(prev, cur)
        if ratio is None:
            continue
        cur.rho_l1 = _safe_rate(prev.err_l1, cur.err_l1, ratio)
        cur.rho_max = _safe_rate(prev.err_max, cur.err_max, ratio)


def _fitted_orders(rows: list[ConvergenceRow]) -> tuple[Optional[float], Optional[float]]:
    good = [row for row in rows if row.error is None]
    if len(good) < 2:
        return None, None
    if len({row.dx for row in good}) == 1:
        steps = [row.dt for row in good]
    elif len({row.dt for row in good}) == 1:
        steps = [row.dx for row in good]
    else:
        return None, None
    return (
        fit_order(steps, [row.err_l1 for row in good]),
        fit_order(steps, [row.err_max for row in good]),
    )


# ============================================
# Runner
# ============================================

def _execute_row(cfg: ExperimentConfig, entry: LadderEntry) -> dict:
    """Integrate one ladder row; failures are returned, not raised."""
    try:
        problem = build_problem(cfg.problem, cfg.problem_params, dx=entry.dx, dt=entry.dt, seed=cfg.seed)
        stepper = build_stepper(cfg.scheme, problem.system, cfg.scheme_params)
        final = advance(stepper, problem.t0, problem.t_end, entry.dt, problem.initial_state)
        if problem.exact is not None:
            expected = problem.exact(problem.t_end)
        else:
            expected = reference_flow(problem.system, problem.t0, problem.t_end - problem.t0, problem.initial_state)
        err_l1, err_max = error_norms(final, expected)
        return {"success": True, "err_l1": err_l1, "err_max": err_max}
    except Exception as e:
        return {"success": False, "error": f"{type(e).__name__}: {e}"}


def _metadata(cfg: ExperimentConfig, study_id: str) -> dict:
    return {
        "study_id": study_id,
        "problem": cfg.problem,
        "problem_params": dict(cfg.problem_params),
        "scheme": cfg.scheme,
        "scheme_params": dict(cfg.scheme_params),
        "ladder": [{"dt": e.dt, "dx": e.dx} for e in cfg.ladder],
        "seed": cfg.seed,
        "reference_tol": REFERENCE_TOL,
        "versions": {
            "mpe_split": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


async def run_convergence_async(
    cfg: ExperimentConfig,
    emitter: Optional[EventEmitter] = None,
    tracker: Optional[RunTracker] = None,
) -> ConvergenceReport:
    """
    Run every ladder row, at most ``MPE_THREADS`` at a time.

    Rows execute in worker threads; the report keeps ladder order. A failing
    row is logged and recorded with its message while the others still run.
    """
    emitter = emitter or EventEmitter()
    tracker = tracker or RunTracker()
    study_id = tracker.start_study(f"{cfg.scheme} on {cfg.problem}")
    await emitter.study_started(study_id, cfg.problem, cfg.scheme, len(cfg.ladder))

    semaphore = asyncio.Semaphore(max(1, MPE_THREADS))
    row_ids = [tracker.register_row(f"dt={e.dt:.6g} dx={e.dx}") for e in cfg.ladder]

    async def run_row(row_id: str, entry: LadderEntry) -> ConvergenceRow:
        async with semaphore:
            await emitter.row_started(row_id, entry.dx, entry.dt)
            tracker.start_row(row_id)
            outcome = await asyncio.to_thread(_execute_row, cfg, entry)
            status = "completed" if outcome["success"] else "failed"
            wall_ms = tracker.complete_row(row_id, status=status, error=outcome.get("error"))

        row = ConvergenceRow(dx=entry.dx, dt=entry.dt, wall_ms=wall_ms, row_id=row_id)
        if outcome["success"]:
            row.err_l1, row.err_max = outcome["err_l1"], outcome["err_max"]
            logger.info(f"[Harness] {row_id} dt={entry.dt:.6g} err_max={row.err_max:.4e}")
            await emitter.row_complete(row_id, row.err_l1, row.err_max, row.wall_ms)
        else:
            row.error = outcome["error"]
            logger.error(f"[Harness] {row_id} failed: {row.error}")
            await emitter.row_failed(row_id, row.error)
        return row

    rows = list(await asyncio.gather(*(run_row(rid, e) for rid, e in zip(row_ids, cfg.ladder))))

    if cfg.rates:
        fill_rates(rows)
    report = ConvergenceReport(rows=rows, metadata=_metadata(cfg, study_id))
    report.fitted_order_l1, report.fitted_order_max = _fitted_orders(rows)

    summary = tracker.end_study("failed" if report.failed else "completed")
    await emitter.study_complete(study_id, summary["duration_ms"], summary["failed_rows"])
    return report


def run_convergence(
    cfg: ExperimentConfig,
    emitter: Optional[EventEmitter] = None,
    tracker: Optional[RunTracker] = None,
) -> ConvergenceReport:
    """Synchronous wrapper around ``run_convergence_async``."""
    return asyncio.run(run_convergence_async(cfg, emitter, tracker))


# ============================================
# Output
# ============================================

def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def emit(report: ConvergenceReport, format: str, path) -> Path:
    """
    Write ``report`` as CSV (columns dx,dt,err_l1,err_max,rho_l1,rho_max,wall_ms)
    or JSON (full report with metadata). Undefined values become empty cells / null.

    Raises:
        ReportError: the file cannot be written
    """
    if format not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {format!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            if format == "json":
                json.dump(report.to_dict(), f, indent=2)
                f.write("\n")
            else:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for row in report.rows:
                    writer.writerow([_cell(getattr(row, column)) for column in CSV_COLUMNS])
    except OSError as e:
        raise ReportError(f"Cannot write report to {path}: {e}") from e
    logger.info(f"[Harness] Report written to {path}")
    return path


def load_report(path) -> ConvergenceReport:
    """Read a report written by ``emit``; the format follows the file suffix."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as f:
            if path.suffix.lower() == ".json":
                return ConvergenceReport.from_dict(json.load(f))
            rows = []
            for record in csv.DictReader(f):
                values = {key: (float(record[key]) if record[key] else None) for key in CSV_COLUMNS}
                values["wall_ms"] = values["wall_ms"] or 0.0
                rows.append(ConvergenceRow(**values))
            return ConvergenceReport(rows=rows)
    except OSError as e:
        raise ReportError(f"Cannot read report {path}: {e}") from e
    except (ValueError, KeyError, TypeError) as e:
        raise ReportError(f"Malformed report {path}: {e}") from e


def _step_label(value: Optional[float]) -> str:
    if value is None:
        return "-"
    inverse = 1.0 / value
    if abs(inverse - round(inverse)) < 1e-9:
        return f"1/{round(inverse)}"
    return f"{value:.4g}"


def _num(value: Optional[float], spec: str) -> str:
    return "" if value is None else format(value, spec)


def format_table(report: ConvergenceReport, title: Optional[str] = None) -> str:
    """Render the rows as a text table, with a rule wherever dt changes."""
    meta = report.metadata
    lines = [title or f"{meta.get('scheme', '?')} on {meta.get('problem', '?')}"]
    header = f"{'dx':>6} {'dt':>6} {'err_L1':>11} {'err_max':>11} {'rho_L1':>8} {'rho_max':>8} {'ms':>9}"
    lines += [header, "-" * len(header)]
    previous_dt = None
    for row in report.rows:
        if previous_dt is not None and row.dt != previous_dt:
            lines.append("-" * len(header))
        previous_dt = row.dt
        if row.error is not None:
            lines.append(f"{_step_label(row.dx):>6} {_step_label(row.dt):>6}  FAILED: {row.error}")
            continue
        lines.append(
            f"{_step_label(row.dx):>6} {_step_label(row.dt):>6} "
            f"{_num(row.err_l1, '.4e'):>11} {_num(row.err_max, '.4e'):>11} "
            f"{_num(row.rho_l1, '.4f'):>8} {_num(row.rho_max, '.4f'):>8} {row.wall_ms:>9.1f}"
        )
    if report.fitted_order_l1 is not None or report.fitted_order_max is not None:
        lines.append(
            f"fitted order: L1 {_num(report.fitted_order_l1, '.3f') or '-'}, "
            f"max {_num(report.fitted_order_max, '.3f') or '-'}"
        )
    return "\n".join(lines)
