"""
Single-step splitting schemes.

Fixed products (sequential, Strang, symmetric sum, Dunn, Burstein-Mirin) are
``ProductScheme`` tables evaluated by ``apply_product``. The two iterative
splitting schemes solve the coupled problem by repeated sub-problem solves
with the other operator taken from the previous iterate.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from mpe_split.core import (
    EvaluationError,
    FlowError,
    LinearPart,
    SplitSystem,
    SubFlow,
    VectorField,
    as_state,
    eval_field,
    integrate_field,
)

logger = logging.getLogger(__name__)


class Operator(Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class ProductTerm:
    """One weighted product; ``factors`` are listed in application order."""
    weight: Fraction
    factors: tuple[tuple[Operator, Fraction], ...]

    def fraction_sum(self, op: Operator) -> Fraction:
        return sum((frac for tag, frac in self.factors if tag is op), Fraction(0))

    def describe(self) -> str:
        return " ".join(f"{tag.value}({frac})" for tag, frac in self.factors)


@dataclass(frozen=True)
class ProductScheme:
    """
    Linear combination of products of sub-flows.

    Construction checks consistency: the weights sum to one and, inside every
    term, the A-fractions and the B-fractions each sum to one.
    """
    name: str
    terms: tuple[ProductTerm, ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError(f"[{self.name}] scheme has no terms")
        total = sum((term.weight for term in self.terms), Fraction(0))
        if total != 1:
            raise ValueError(f"[{self.name}] weights sum to {total}, expected 1")
        for index, term in enumerate(self.terms):
            for op in Operator:
                frac = term.fraction_sum(op)
                if frac != 1:
                    raise ValueError(
                        f"[{self.name}] term {index} has {op.value}-fractions summing to {frac}"
                    )

    @classmethod
    def build(cls, name: str, terms) -> "ProductScheme":
        """
        Build a scheme from plain tuples.

        Args:
            name: Scheme identifier
            terms: Iterable of ``(weight, [("A", fraction), ("B", fraction), ...])``
        """
        return cls(
            name=name,
            terms=tuple(
                ProductTerm(
                    weight=Fraction(weight),
                    factors=tuple((Operator(tag), Fraction(frac)) for tag, frac in factors),
                )
                for weight, factors in terms
            ),
        )

    @property
    def evaluations(self) -> int:
        """Number of sub-flow applications per step."""
        return sum(len(term.factors) for term in self.terms)


_HALF = Fraction(1, 2)
_THIRD = Fraction(1, 3)

AB = ProductScheme.build("ab", [(1, [("A", 1), ("B", 1)])])
BA = ProductScheme.build("ba", [(1, [("B", 1), ("A", 1)])])
STRANG_ABA = ProductScheme.build("strang-aba", [(1, [("A", _HALF), ("B", 1), ("A", _HALF)])])
STRANG_BAB = ProductScheme.build("strang-bab", [(1, [("B", _HALF), ("A", 1), ("B", _HALF)])])
SYMMETRIC_SUM = ProductScheme.build(
    "symmetric-sum",
    [(_HALF, [("A", 1), ("B", 1)]), (_HALF, [("B", 1), ("A", 1)])],
)
DUNN = ProductScheme.build(
    "dunn",
    [
        (Fraction(2, 3), [("B", _HALF), ("A", 1), ("B", _HALF)]),
        (Fraction(2, 3), [("A", _HALF), ("B", 1), ("A", _HALF)]),
        (Fraction(-1, 6), [("A", 1), ("B", 1)]),
        (Fraction(-1, 6), [("B", 1), ("A", 1)]),
    ],
)
# 9/8 e^{h/3 A} e^{2h/3 B} e^{2h/3 A} e^{h/3 B} - 1/8 e^{hA} e^{hB}, rightmost factor first
BURSTEIN_MIRIN = ProductScheme.build(
    "burstein-mirin",
    [
        (Fraction(9, 8), [("B", _THIRD), ("A", 2 * _THIRD), ("B", 2 * _THIRD), ("A", _THIRD)]),
        (Fraction(-1, 8), [("B", 1), ("A", 1)]),
    ],
)

PRODUCT_SCHEMES = {
    scheme.name: scheme
    for scheme in (AB, BA, STRANG_ABA, STRANG_BAB, SYMMETRIC_SUM, DUNN, BURSTEIN_MIRIN)
}


def _run_stage(scheme: str, label: str, flow: SubFlow, t0: float, tau: float, state: np.ndarray):
    try:
        return flow(t0, tau, state)
    except (RuntimeError, ArithmeticError) as e:
        raise FlowError(f"[{scheme}] {label} failed: {e}") from e


def apply_product(scheme: ProductScheme, sys: SplitSystem, t: float, h: float, c) -> np.ndarray:
    """
    Evaluate a product scheme over one step of size ``h`` starting at ``t``.

    Every term starts from the same input state. Each operator keeps its own
    clock, advanced by the fraction of ``h`` it has consumed, so the Strang
    A-B-A product runs A over [t, t+h/2], B over [t, t+h] and A over
    [t+h/2, t+h].
    """
    c = as_state(c)
    total = np.zeros_like(c)
    for index, term in enumerate(scheme.terms):
        state = c
        clocks = {Operator.A: t, Operator.B: t}
        for stage, (op, frac) in enumerate(term.factors):
            tau = float(frac) * h
            flow = sys.a_flow if op is Operator.A else sys.b_flow
            state = _run_stage(
                scheme.name, f"term {index} stage {stage} ({op.value})", flow, clocks[op], tau, state
            )
            clocks[op] += tau
        total = total + float(term.weight) * state
    return total


def ab_step(sys: SplitSystem, t: float, h: float, c, order: str = "ab") -> np.ndarray:
    """Sequential splitting. ``order="ab"`` applies A first, ``"ba"`` applies B first."""
    if order not in ("ab", "ba"):
        raise ValueError(f"unknown sequential order '{order}' (expected 'ab' or 'ba')")
    return apply_product(AB if order == "ab" else BA, sys, t, h, c)


def strang_step(sys: SplitSystem, t: float, h: float, c, order: str = "aba") -> np.ndarray:
    """Strang-Marchuk splitting, A-B-A by default or B-A-B."""
    if order not in ("aba", "bab"):
        raise ValueError(f"unknown Strang order '{order}' (expected 'aba' or 'bab')")
    return apply_product(STRANG_ABA if order == "aba" else STRANG_BAB, sys, t, h, c)


def symmetric_sum_step(sys: SplitSystem, t: float, h: float, c) -> np.ndarray:
    return apply_product(SYMMETRIC_SUM, sys, t, h, c)


def dunn_step(sys: SplitSystem, t: float, h: float, c) -> np.ndarray:
    return apply_product(DUNN, sys, t, h, c)


def burstein_mirin_step(sys: SplitSystem, t: float, h: float, c) -> np.ndarray:
    return apply_product(BURSTEIN_MIRIN, sys, t, h, c)


# ============================================
# Iterative splitting
# ============================================

class InterpolationPolicy(Enum):
    """How the zeroth iterate c_0(s) is extended over the step."""
    CONSTANT = "constant"
    LINEAR = "linear"


@dataclass(frozen=True)
class IterativeConfig:
    """
    Settings for iterative splitting.

    Attributes:
        iterations: Number of iterations m per step
        switch: Alternating variant only; iterations 1..j solve for the A
            operator, j+1..m for the B operator. Defaults to m.
        tol: Tolerance of the adaptive inner integrator
        policy: Zeroth iterate, constant or linear in time
        substeps: Backward Euler substeps when the solved operator is linear
        swap: Exchange the roles of A and B before iterating
    """
    iterations: int = 2
    switch: Optional[int] = None
    tol: float = 1e-10
    policy: InterpolationPolicy = InterpolationPolicy.CONSTANT
    substeps: int = 1
    swap: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.switch is not None and not 1 <= self.switch <= self.iterations:
            raise ValueError(
                f"switch index must satisfy 1 <= j <= m={self.iterations}, got {self.switch}"
            )
        if self.tol <= 0:
            raise ValueError(f"inner tolerance must be positive, got {self.tol}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")

    @property
    def switch_index(self) -> int:
        return self.iterations if self.switch is None else self.switch


Path = Callable[[float], np.ndarray]


class _NodePath:
    """Piecewise-linear trajectory through (time, state) nodes."""

    def __init__(self, times: np.ndarray, states: np.ndarray):
        order = np.argsort(times)
        self.times = times[order]
        self.states = states[order]

    def __call__(self, s: float) -> np.ndarray:
        if len(self.times) == 1 or s <= self.times[0]:
            return self.states[0]
        if s >= self.times[-1]:
            return self.states[-1]
        k = int(np.searchsorted(self.times, s, side="right")) - 1
        w = (s - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1.0 - w) * self.states[k] + w * self.states[k + 1]


def initial_path(sys: SplitSystem, t: float, c: np.ndarray, policy: InterpolationPolicy) -> Path:
    """The zeroth iterate c_0(s) on the step."""
    if policy is InterpolationPolicy.LINEAR:
        slope = eval_field(sys.full(), t, c)
        return lambda s: c + (s - t) * slope
    return lambda s: c


def _solve_iteration(
    implicit_field: VectorField,
    implicit_linear: Optional[LinearPart],
    explicit_field: VectorField,
    previous: Path,
    t: float,
    h: float,
    c: np.ndarray,
    cfg: IterativeConfig,
) -> tuple[Path, np.ndarray]:
    """Solve x' = X(x) + Y(prev(s)) on [t, t+h] with x(t) = c."""

    def forcing(s: float) -> np.ndarray:
        return eval_field(explicit_field, s, previous(s))

    if implicit_linear is not None:
        delta = h / cfg.substeps
        times = [t]
        states = [c]
        x = c
        for k in range(cfg.substeps):
            s = t + (k + 1) * delta
            x = implicit_linear.implicit_euler(s - delta, delta, x, forcing=forcing(s))
            if not np.all(np.isfinite(x)):
                raise EvaluationError(f"non-finite backward Euler state at t={s}")
            times.append(s)
            states.append(x)
        return _NodePath(np.array(times), np.array(states)), x

    coupled = VectorField(
        func=lambda s, x: eval_field(implicit_field, s, x) + forcing(s),
        autonomous=False,
        name=f"{implicit_field.name}+prev({explicit_field.name})",
    )
    sol = integrate_field(coupled, t, h, c, tol=cfg.tol, dense_output=True)
    return sol.sol, sol.y[:, -1]


def _iterate(sys: SplitSystem, t: float, h: float, c, cfg: IterativeConfig, switch: int, label: str):
    system = sys.swapped() if cfg.swap else sys
    c = as_state(c)
    if h == 0:
        return c.copy()

    previous = initial_path(system, t, c, cfg.policy)
    state = c
    for i in range(1, cfg.iterations + 1):
        if i <= switch:
            solved, solved_linear, frozen = system.a_field, system.a_linear, system.b_field
        else:
            solved, solved_linear, frozen = system.b_field, system.b_linear, system.a_field
        try:
            previous, state = _solve_iteration(solved, solved_linear, frozen, previous, t, h, c, cfg)
        except (RuntimeError, ArithmeticError) as e:
            raise FlowError(f"[{label}] iteration {i} at t={t} failed: {e}") from e
        logger.debug(f"[{label}] iteration {i}/{cfg.iterations} at t={t:.6g} done")
    return state


def iterative_split_one(sys: SplitSystem, t: float, h: float, c, cfg: IterativeConfig) -> np.ndarray:
    """
    Iterative splitting with respect to one operator.

    For i = 1..m solves c_i' = A(c_i) + B(c_{i-1}) on [t, t+h], c_i(t) = c,
    and returns c_m(t+h).
    """
    return _iterate(sys, t, h, c, cfg, switch=cfg.iterations, label="iter-one")


def iterative_split_alternating(sys: SplitSystem, t: float, h: float, c, cfg: IterativeConfig) -> np.ndarray:
    """
    Iterative splitting with alternating operators.

    Iterations 1..j solve for A with B from the previous iterate, iterations
    j+1..m solve for B with A from the previous iterate. Since j >= 1 the
    conventional c_{-1} = 0 is never read.
    """
    return _iterate(sys, t, h, c, cfg, switch=cfg.switch_index, label="iter-alt")
