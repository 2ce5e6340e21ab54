"""Tests for the convergence-study harness."""

import math
from dataclasses import replace

import pytest

from mpe_split.config import TABLE1_REFERENCE
from mpe_split.harness import (
    CSV_COLUMNS,
    ConfigError,
    ConvergenceReport,
    ConvergenceRow,
    ExperimentConfig,
    ReportError,
    build_stepper,
    convergence_rate,
    emit,
    fill_rates,
    format_table,
    load_report,
    run_convergence,
    table1_config,
    table1_title,
)
from mpe_split.problems import linear_split
from mpe_split.utils import EventEmitter, EventType, RunTracker


def _failing_config() -> ExperimentConfig:
    return ExperimentConfig.from_dict({
        "problem": {"id": "burgers2d", "params": {"nx": 10, "convection_substeps": 1, "t_end": 0.05}},
        "scheme": "strang-aba",
        "ladder": [{"dt": 0.1}, {"dt": 0.01}],
    })


class TestRates:
    def test_halving(self):
        assert convergence_rate(4e-4, 1e-4) == pytest.approx(2.0)

    def test_custom_ratio(self):
        assert convergence_rate(1.0, 1.0 / 27.0, ratio=1.0 / 3.0) == pytest.approx(3.0)

    @pytest.mark.parametrize("coarse,fine,ratio", [(0.0, 1.0, 0.5), (1.0, -1.0, 0.5), (1.0, 0.5, 1.0)])
    def test_rejects_invalid(self, coarse, fine, ratio):
        with pytest.raises(ValueError):
            convergence_rate(coarse, fine, ratio)

    def test_published_burgers_rates(self):
        rows = [ConvergenceRow(dx=dx, dt=dt, err_l1=l1, err_max=mx) for dx, dt, l1, mx in TABLE1_REFERENCE]
        fill_rates(rows)
        expected = [
            (None, None), (0.2303, 0.2234), (0.1630, 0.1608),
            (None, None), (0.4353, 0.4210), (0.3352, 0.3645),
            (None, None), (0.6108, 0.5768), (0.5517, 0.5804),
        ]
        for row, (rho_l1, rho_max) in zip(rows, expected):
            if rho_l1 is None:
                assert row.rho_l1 is None and row.rho_max is None
            else:
                assert row.rho_l1 == pytest.approx(rho_l1, abs=0.01)
                assert row.rho_max == pytest.approx(rho_max, abs=0.01)

    def test_no_rate_when_both_resolutions_change(self):
        rows = [ConvergenceRow(dx=0.1, dt=0.1, err_l1=1.0, err_max=1.0), ConvergenceRow(dx=0.05, dt=0.05, err_l1=0.5, err_max=0.5)]
        fill_rates(rows)
        assert rows[1].rho_l1 is None


class TestExperimentConfig:
    def test_halvings(self):
        cfg = ExperimentConfig.from_dict({"problem": "logistic", "scheme": "t4", "ladder": {"dt": 0.5, "halvings": 3}})
        assert [entry.dt for entry in cfg.ladder] == [0.5, 0.25, 0.125, 0.0625]
        assert all(entry.dx is None for entry in cfg.ladder)

    def test_dx_halvings(self):
        cfg = ExperimentConfig.from_dict({
            "problem": "burgers2d",
            "scheme": "iter-one",
            "ladder": {"dt": 0.1, "dx": 0.1, "halvings": 2, "halve": "dx"},
        })
        assert [(e.dt, e.dx) for e in cfg.ladder] == [(0.1, 0.1), (0.1, 0.05), (0.1, 0.025)]

    def test_pairs(self):
        cfg = ExperimentConfig.from_dict({"problem": "logistic", "scheme": "ab", "ladder": [[0.1], [0.05]]})
        assert len(cfg.ladder) == 2

    @pytest.mark.parametrize(
        "data",
        [
            {"problem": "heat", "scheme": "ab", "ladder": [[0.1], [0.05]]},
            {"problem": "logistic", "scheme": "rk4", "ladder": [[0.1], [0.05]]},
            {"problem": "logistic", "scheme": "ab", "ladder": []},
            {"problem": "logistic", "scheme": "ab", "ladder": [[0.1]]},
            {"problem": "logistic", "scheme": "ab", "ladder": [[0.1], [0.2]]},
            {"problem": "logistic", "scheme": "ab", "ladder": [[0.1], [-0.05]]},
            {"problem": "logistic", "scheme": "ab", "ladder": [[0.1], [0.05]], "norms": ["l2"]},
            {"problem": "logistic", "scheme": "ab", "ladder": [[0.1], [0.05]], "format": "xml"},
            {"problem": "logistic", "scheme": "ab", "ladder": {"dt": 0.1}},
            {"scheme": "ab", "ladder": [[0.1], [0.05]]},
        ],
    )
    def test_rejects_invalid(self, data):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)

    def test_single_row_without_rates(self):
        cfg = ExperimentConfig.from_dict({"problem": "logistic", "scheme": "ab", "ladder": [[0.1]], "rates": False})
        assert len(cfg.ladder) == 1

    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict({
            "problem": {"id": "logistic", "params": {"u0": 0.5}},
            "scheme": {"id": "iter-alt", "params": {"iterations": 3, "switch": 1}},
            "ladder": {"dt": 0.2, "halvings": 2},
        })
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(tmp_path / "missing.json")

    def test_table1_ladder(self):
        cfg = table1_config()
        assert len(cfg.ladder) == 9
        assert cfg.scheme == "iter-one"
        assert cfg.scheme_params == {"iterations": 2, "swap": True}

    def test_table1_title_names_the_implicit_operator(self):
        title = table1_title(table1_config())
        assert "iter-one m=2" in title
        assert "diffusion implicit" in title
        unswapped = replace(table1_config(), scheme_params={"iterations": 2})
        assert "convection implicit" in table1_title(unswapped)


class TestBuildStepper:
    def test_unknown_scheme(self):
        with pytest.raises(ConfigError, match="unknown scheme"):
            build_stepper("rk4", linear_split())

    def test_unknown_parameter(self):
        with pytest.raises(ConfigError, match="unknown parameters"):
            build_stepper("strang-aba", linear_split(), {"iterations": 2})

    def test_invalid_parameter_value(self):
        with pytest.raises(ConfigError):
            build_stepper("iter-alt", linear_split(), {"iterations": 2, "switch": 5})

    def test_explicit_k_list(self):
        step = build_stepper("mpe:k=1,3", linear_split())
        assert callable(step)

    @pytest.mark.parametrize("scheme_id", ["ab", "strang-bab", "symmetric-sum", "dunn", "burstein-mirin", "t6"])
    def test_known_schemes(self, scheme_id):
        out = build_stepper(scheme_id, linear_split())(0.0, 0.1, [1.0, 0.5])
        assert out.shape == (2,)


class TestRunConvergence:
    def test_fourth_order_on_logistic(self):
        cfg = ExperimentConfig.from_dict({
            "problem": {"id": "logistic", "params": {"u0": 0.5}},
            "scheme": "t4",
            "ladder": {"dt": 0.5, "halvings": 4},
        })
        report = run_convergence(cfg)
        assert not report.failed
        assert report.fitted_order_max == pytest.approx(4.0, abs=0.2)
        assert report.rows[0].rho_max is None
        assert all(row.rho_max is not None for row in report.rows[1:])

    def test_zero_problem(self):
        cfg = ExperimentConfig.from_dict({"problem": "zero", "scheme": "strang-aba", "ladder": [[0.1], [0.05]]})
        report = run_convergence(cfg)
        assert [row.err_max for row in report.rows] == [0.0, 0.0]
        assert all(row.rho_l1 is None and row.rho_max is None for row in report.rows)
        assert report.fitted_order_max is None

    def test_failing_row_does_not_stop_the_study(self):
        report = run_convergence(_failing_config())
        first, second = report.rows
        assert first.error is not None and "CFLError" in first.error
        assert first.err_max is None
        assert second.error is None and second.err_max is not None
        assert second.rho_max is None
        assert report.failed == [first]

    def test_events_and_lineage(self):
        emitter, tracker = EventEmitter(), RunTracker()
        seen = []
        emitter.add_listener(lambda event: seen.append(event.type))
        report = run_convergence(_failing_config(), emitter=emitter, tracker=tracker)
        assert seen[0] is EventType.STUDY_STARTED
        assert seen[-1] is EventType.STUDY_COMPLETE
        assert seen.count(EventType.ROW_STARTED) == 2
        assert seen.count(EventType.ROW_FAILED) == 1
        assert seen.count(EventType.ROW_COMPLETE) == 1
        assert [row.row_id for row in report.rows] == ["ROW-001", "ROW-002"]
        assert emitter.get_history()[-1]["failed_rows"] == ["ROW-001"]

    def test_row_time_comes_from_the_tracker(self):
        tracker = RunTracker()
        report = run_convergence(_failing_config(), tracker=tracker)
        nodes = tracker.sessions[report.metadata["study_id"]].nodes
        for row in report.rows:
            assert row.wall_ms == nodes[row.row_id].wall_ms
            assert row.wall_ms >= 0.0
        assert nodes["ROW-001"].status == "failed"
        assert nodes["ROW-002"].status == "completed"

    def test_failing_listener_is_ignored(self):
        emitter = EventEmitter()

        def broken(event):
            raise RuntimeError("listener down")

        emitter.add_listener(broken)
        cfg = ExperimentConfig.from_dict({"problem": "zero", "scheme": "ab", "ladder": [[0.1], [0.05]]})
        assert not run_convergence(cfg, emitter=emitter).failed

    def test_deterministic(self):
        cfg = ExperimentConfig.from_dict({
            "problem": {"id": "linear2x2", "params": {"random": True, "dim": 3}},
            "scheme": "strang-aba",
            "ladder": [[0.2], [0.1]],
            "seed": 11,
        })
        first, second = run_convergence(cfg), run_convergence(cfg)
        assert [(r.err_l1, r.err_max) for r in first.rows] == [(r.err_l1, r.err_max) for r in second.rows]

    def test_metadata(self):
        cfg = ExperimentConfig.from_dict({"problem": "zero", "scheme": "ab", "ladder": [[0.1], [0.05]]})
        meta = run_convergence(cfg).metadata
        assert meta["problem"] == "zero"
        assert meta["study_id"].startswith("STUDY-")
        assert {"mpe_split", "numpy", "scipy", "python"} <= set(meta["versions"])

    @pytest.mark.slow
    def test_burgers_time_ladder(self):
        cfg = ExperimentConfig.from_dict({
            "problem": {"id": "burgers2d", "params": {"mu": 0.05, "t_end": 1.25}},
            "scheme": {"id": "iter-one", "params": {"iterations": 2, "swap": True}},
            "ladder": [{"dt": 0.1, "dx": 0.025}, {"dt": 0.05, "dx": 0.025}, {"dt": 0.025, "dx": 0.025}],
        })
        report = run_convergence(cfg)
        assert not report.failed
        errors = [row.err_max for row in report.rows]
        assert errors[0] > errors[1] > errors[2]
        assert 0.0139 <= errors[-1] <= 0.3475


def _report() -> ConvergenceReport:
    return ConvergenceReport(
        rows=[
            ConvergenceRow(dx=None, dt=0.1, err_l1=1e-3, err_max=2e-3, wall_ms=1.5, row_id="ROW-001"),
            ConvergenceRow(dx=None, dt=0.05, err_l1=2.5e-4, err_max=5e-4, rho_l1=2.0, rho_max=2.0, wall_ms=2.5, row_id="ROW-002"),
        ],
        metadata={"problem": "logistic", "scheme": "strang-aba"},
        fitted_order_l1=2.0,
        fitted_order_max=2.0,
    )


class TestRunTracker:
    def test_registered_row_waits_for_start(self):
        tracker = RunTracker()
        tracker.start_study("zero")
        row_id = tracker.register_row("dt=0.1")
        node = tracker.get_node(row_id)
        assert row_id == "ROW-001"
        assert node.status == "pending" and node.started is None
        with pytest.raises(ValueError, match="never started"):
            tracker.complete_row(row_id)

    def test_clock_runs_from_start_to_completion(self):
        tracker = RunTracker()
        tracker.start_study()
        row_id = tracker.register_row()
        tracker.start_row(row_id)
        elapsed = tracker.complete_row(row_id, status="failed", error="boom")
        node = tracker.get_node(row_id)
        assert node.wall_ms == elapsed >= 0.0
        assert node.error == "boom"
        assert tracker.end_study()["failed_rows"] == [row_id]

    def test_unknown_row(self):
        tracker = RunTracker()
        tracker.start_study()
        with pytest.raises(KeyError):
            tracker.start_row("ROW-404")


class TestEmit:
    def test_csv_layout(self, tmp_path):
        path = emit(_report(), "csv", tmp_path / "out" / "report.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1] == ",0.1,0.001,0.002,,,1.5"
        assert len(lines) == 3

    def test_empty_report(self, tmp_path):
        path = emit(ConvergenceReport(), "csv", tmp_path / "empty.csv")
        assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_csv_floats_round_trip(self, tmp_path):
        report = ConvergenceReport(rows=[ConvergenceRow(dx=None, dt=0.1, err_l1=math.pi / 7, err_max=1 / 3)])
        loaded = load_report(emit(report, "csv", tmp_path / "r.csv"))
        assert loaded.rows[0].err_l1 == math.pi / 7
        assert loaded.rows[0].err_max == 1 / 3
        assert loaded.rows[0].rho_l1 is None

    def test_json_keeps_metadata(self, tmp_path):
        report = _report()
        loaded = load_report(emit(report, "json", tmp_path / "r.json"))
        assert loaded.metadata == report.metadata
        assert loaded.rows == report.rows
        assert loaded.fitted_order_max == 2.0

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(ReportError):
            emit(_report(), "csv", blocker / "report.csv")

    def test_unreadable_report(self, tmp_path):
        with pytest.raises(ReportError):
            load_report(tmp_path / "nothing.csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit(_report(), "xml", tmp_path / "r.xml")


class TestFormatTable:
    def test_contents(self):
        text = format_table(_report())
        assert text.splitlines()[0] == "strang-aba on logistic"
        assert "1/10" in text and "1/20" in text
        assert "fitted order" in text

    def test_failed_row(self):
        report = ConvergenceReport(rows=[ConvergenceRow(dx=None, dt=0.1, error="CFLError: too big")])
        assert "FAILED: CFLError: too big" in format_table(report, title="t")
