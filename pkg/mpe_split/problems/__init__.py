"""
Benchmark problems and the registry the harness builds them from.
"""

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from mpe_split.core import SplitSystem, as_state
from mpe_split.problems.burgers import (
    BurgersConfig,
    BurgersProblem,
    CFLError,
    Grid2D,
    burgers_analytic,
    burgers_build,
)
from mpe_split.problems.hamiltonian import HamiltonianSystem, harmonic_solution, verlet_step
from mpe_split.problems.linear import (
    BATTERY_A,
    BATTERY_B,
    BATTERY_C0,
    linear_solution,
    linear_split,
    zero_split,
)
from mpe_split.problems.logistic import logistic_solution, logistic_split

PROBLEM_IDS = ("burgers2d", "harmonic", "linear2x2", "logistic", "zero")


@dataclass(frozen=True)
class Problem:
    """A split system with its initial value, time span and exact solution."""
    name: str
    system: SplitSystem
    initial_state: np.ndarray
    t0: float
    t_end: float
    exact: Optional[Callable[[float], np.ndarray]]
    dx: Optional[float] = None


def _take(params: dict, defaults: dict, problem_id: str) -> dict:
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameters for problem '{problem_id}': {', '.join(sorted(unknown))}")
    return {**defaults, **params}


def _logistic(p: dict, dx, dt, rng) -> Problem:
    p = _take(p, {"u0": 0.1, "t_end": 1.0}, "logistic")
    if p["u0"] < 0:
        raise ValueError(f"logistic u0 must be >= 0, got {p['u0']}")
    return Problem(
        name="logistic",
        system=logistic_split(),
        initial_state=as_state([p["u0"]]),
        t0=0.0,
        t_end=float(p["t_end"]),
        exact=lambda t: as_state([logistic_solution(p["u0"], t)]),
    )


def _harmonic(p: dict, dx, dt, rng) -> Problem:
    p = _take(p, {"mass": 1.0, "spring": 1.0, "q0": 1.0, "v0": 0.0, "t_end": 1.0}, "harmonic")
    ham = HamiltonianSystem.harmonic(mass=p["mass"], spring=p["spring"])
    q0, v0 = np.atleast_1d(float(p["q0"])), np.atleast_1d(float(p["v0"]))

    def exact(t: float) -> np.ndarray:
        q, v = harmonic_solution(p["mass"], p["spring"], t, q0, v0)
        return np.concatenate([q, v])

    return Problem(
        name="harmonic",
        system=ham.split(),
        initial_state=np.concatenate([q0, v0]),
        t0=0.0,
        t_end=float(p["t_end"]),
        exact=exact,
    )


def _linear(p: dict, dx, dt, rng) -> Problem:
    p = _take(p, {"t_end": 1.0, "random": False, "dim": 2}, "linear2x2")
    if p["random"]:
        dim = int(p["dim"])
        a, b = rng.standard_normal((dim, dim)), rng.standard_normal((dim, dim))
        c0 = rng.standard_normal(dim)
    else:
        a, b, c0 = np.array(BATTERY_A), np.array(BATTERY_B), np.array(BATTERY_C0)
    return Problem(
        name="linear2x2",
        system=linear_split(a, b),
        initial_state=as_state(c0),
        t0=0.0,
        t_end=float(p["t_end"]),
        exact=lambda t: linear_solution(a, b, t, c0),
    )


def _zero(p: dict, dx, dt, rng) -> Problem:
    p = _take(p, {"dim": 2, "t_end": 1.0}, "zero")
    c0 = np.ones(int(p["dim"]))
    return Problem(
        name="zero",
        system=zero_split(),
        initial_state=c0,
        t0=0.0,
        t_end=float(p["t_end"]),
        exact=lambda t: c0.copy(),
    )


def _burgers(p: dict, dx, dt, rng) -> Problem:
    p = _take(
        p,
        {"mu": 0.05, "nx": 40, "t_end": 1.25, "convection_substeps": None, "diffusion_substeps": 1},
        "burgers2d",
    )
    nx = int(round(1.0 / dx)) if dx is not None else int(p["nx"])
    cfg = BurgersConfig(
        mu=float(p["mu"]),
        nx=nx,
        t_end=float(p["t_end"]),
        dt=float(dt) if dt is not None else BurgersConfig.dt,
        convection_substeps=p["convection_substeps"],
        diffusion_substeps=int(p["diffusion_substeps"]),
    )
    problem = BurgersProblem(cfg)
    return Problem(
        name="burgers2d",
        system=problem.system,
        initial_state=problem.initial_state(),
        t0=0.0,
        t_end=cfg.t_end,
        exact=problem.exact,
        dx=cfg.dx,
    )


_BUILDERS = {
    "burgers2d": _burgers,
    "harmonic": _harmonic,
    "linear2x2": _linear,
    "logistic": _logistic,
    "zero": _zero,
}


def build_problem(
    problem_id: str,
    params: Optional[dict[str, Any]] = None,
    dx: Optional[float] = None,
    dt: Optional[float] = None,
    seed: int = 0,
) -> Problem:
    """
    Instantiate a benchmark problem.

    Args:
        problem_id: One of PROBLEM_IDS
        params: Problem parameters (u0, mu, nx, mass, spring, ...)
        dx: Spatial resolution, Burgers only; overrides ``nx``
        dt: Time step the problem will be driven with
        seed: Seed for randomized problem instances

    Raises:
        ValueError: unknown problem id or parameter
    """
    builder = _BUILDERS.get(problem_id)
    if builder is None:
        raise ValueError(f"unknown problem '{problem_id}' (expected one of {', '.join(PROBLEM_IDS)})")
    return builder(dict(params or {}), dx, dt, np.random.default_rng(seed))


__all__ = [
    "BATTERY_A",
    "BATTERY_B",
    "BATTERY_C0",
    "BurgersConfig",
    "BurgersProblem",
    "CFLError",
    "Grid2D",
    "HamiltonianSystem",
    "PROBLEM_IDS",
    "Problem",
    "build_problem",
    "burgers_analytic",
    "burgers_build",
    "harmonic_solution",
    "linear_solution",
    "linear_split",
    "logistic_solution",
    "logistic_split",
    "verlet_step",
    "zero_split",
]
