"""
Nonlinear analysis toolkit.

Jacobian-vector products by finite differences, commutators of vector
fields, leading splitting-error estimates, Zassenhaus-corrected sequential
splitting, fixed-point and Newton solvers, and the staggered fixed-point
decoupling of Hamiltonian systems.

The commutator of two fields is [F1, F2](c) = F2'(c) F1(c) - F1'(c) F2(c).
For linear fields F1 = A c and F2 = B c it equals (BA - AB) c.
"""

import logging
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from mpe_split.config import REFERENCE_TOL
from mpe_split.core import (
    FlowError,
    SplitSystem,
    VectorField,
    as_state,
    eval_field,
    integrate_field,
)
from mpe_split.splitting import ab_step

logger = logging.getLogger(__name__)

_UNIT_ROUNDOFF = np.finfo(float).eps


class SingularJacobianError(ArithmeticError):
    """Raised when a Newton system has a vanishing pivot."""


class FiniteDifferenceNoiseError(ArithmeticError):
    """Raised when a nested finite-difference estimate is dominated by roundoff."""


# ============================================
# Jacobian probes and commutators
# ============================================

class ProbeMode(Enum):
    FORWARD = "forward"
    CENTRAL = "central"


@dataclass(frozen=True)
class JacobianProbe:
    """
    Finite-difference settings for directional derivatives.

    ``epsilon=None`` picks the roundoff/truncation balance: the square root of
    machine precision for forward differences, the cube root for central ones.
    The increment is scaled by ``1 + ||c||_inf``.
    """
    epsilon: Optional[float] = None
    mode: ProbeMode = ProbeMode.CENTRAL

    def __post_init__(self):
        if self.epsilon is not None and not 1e-10 <= self.epsilon <= 1e-2:
            raise ValueError(f"probe epsilon must lie in [1e-10, 1e-2], got {self.epsilon}")

    @property
    def scale(self) -> float:
        if self.epsilon is not None:
            return self.epsilon
        if self.mode is ProbeMode.CENTRAL:
            return float(np.cbrt(_UNIT_ROUNDOFF))
        return float(np.sqrt(_UNIT_ROUNDOFF))

    def doubled(self) -> "JacobianProbe":
        return replace(self, epsilon=min(2.0 * self.scale, 1e-2))


DEFAULT_PROBE = JacobianProbe()


def _increment(probe: JacobianProbe, c: np.ndarray, v_norm: float = 1.0) -> float:
    return probe.scale * (1.0 + float(np.max(np.abs(c)))) / v_norm


def gradient(f: Callable[[np.ndarray], float], x, probe: JacobianProbe = DEFAULT_PROBE) -> np.ndarray:
    """Gradient of a scalar function, with the same increment rule as ``jvp``."""
    x = as_state(x)
    step = _increment(probe, x)
    out = np.empty_like(x)
    for j, unit in enumerate(np.eye(x.size)):
        if probe.mode is ProbeMode.CENTRAL:
            out[j] = (f(x + step * unit) - f(x - step * unit)) / (2.0 * step)
        else:
            out[j] = (f(x + step * unit) - f(x)) / step
    return out


def jvp(F: VectorField, c, v, probe: JacobianProbe = DEFAULT_PROBE, t: float = 0.0) -> np.ndarray:
    """
    Directional derivative F'(c) v by finite differences.

    The perturbation c + s v has infinity norm ``epsilon * (1 + ||c||_inf)``.
    A zero direction returns zero.
    """
    c = as_state(c)
    v = as_state(v, dim=c.size)
    v_norm = float(np.max(np.abs(v)))
    if v_norm == 0.0:
        return np.zeros_like(c)

    step = _increment(probe, c, v_norm)
    if probe.mode is ProbeMode.CENTRAL:
        return (eval_field(F, t, c + step * v) - eval_field(F, t, c - step * v)) / (2.0 * step)
    return (eval_field(F, t, c + step * v) - eval_field(F, t, c)) / step


def jacobian(F: VectorField, c, probe: JacobianProbe = DEFAULT_PROBE, t: float = 0.0) -> np.ndarray:
    """Dense Jacobian of ``F`` at ``c``, assembled column by column."""
    c = as_state(c)
    columns = [jvp(F, c, unit, probe, t) for unit in np.eye(c.size)]
    return np.column_stack(columns)


def commutator(F1: VectorField, F2: VectorField, c, probe: JacobianProbe = DEFAULT_PROBE, t: float = 0.0) -> np.ndarray:
    """[F1, F2](c) = F2'(c) F1(c) - F1'(c) F2(c)."""
    c = as_state(c)
    return jvp(F2, c, eval_field(F1, t, c), probe, t) - jvp(F1, c, eval_field(F2, t, c), probe, t)


def bracket(F1: VectorField, F2: VectorField, probe: JacobianProbe = DEFAULT_PROBE) -> VectorField:
    """The commutator [F1, F2] as a vector field, for nesting."""
    return VectorField(
        func=lambda t, c: commutator(F1, F2, c, probe, t),
        autonomous=F1.autonomous and F2.autonomous,
        name=f"[{F1.name},{F2.name}]",
    )


def ab_leading_error(F1: VectorField, F2: VectorField, c, tau: float, probe: JacobianProbe = DEFAULT_PROBE) -> np.ndarray:
    """Leading A-B splitting error tau * [F1, F2](c)."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return tau * commutator(F1, F2, c, probe)


def _strang_estimate(F1, F2, c, tau, probe):
    outer_b = commutator(F2, bracket(F2, F1, probe), c, probe)
    outer_a = commutator(F1, bracket(F1, F2, probe), c, probe)
    return tau * tau / 24.0 * (outer_b - 2.0 * outer_a)


def strang_leading_error(
    F1: VectorField,
    F2: VectorField,
    c,
    tau: float,
    probe: JacobianProbe = DEFAULT_PROBE,
    check: bool = True,
) -> np.ndarray:
    """
    Leading Strang splitting error (tau^2/24)([F2,[F2,F1]] - 2[F1,[F1,F2]])(c).

    The nested brackets are formed by differencing a field whose evaluation is
    itself a commutator. With ``check`` the estimate is repeated with a doubled
    increment and rejected when it moves by more than 10%.

    Raises:
        FiniteDifferenceNoiseError: the estimate is not stable under epsilon -> 2 epsilon
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    c = as_state(c)
    estimate = _strang_estimate(F1, F2, c, tau, probe)
    if not check:
        return estimate

    second = _strang_estimate(F1, F2, c, tau, probe.doubled())
    scale = 1.0 + float(np.max(np.abs(F1(0.0, c)))) + float(np.max(np.abs(F2(0.0, c))))
    noise_floor = 1e-4 * tau * tau * scale
    drift = float(np.max(np.abs(estimate - second)))
    if drift > 0.1 * float(np.max(np.abs(estimate))) + noise_floor:
        raise FiniteDifferenceNoiseError(
            f"nested commutator changed by {drift:.3e} when the increment was doubled"
        )
    return estimate


# ============================================
# Zassenhaus-corrected sequential splitting
# ============================================

@dataclass(frozen=True)
class ZassenhausCorrection:
    """Initialization correction of order ``order`` (2 or 3) for A-B splitting."""
    order: int = 2
    tol: float = 1e-12

    def __post_init__(self):
        if self.order not in (2, 3):
            raise ValueError(f"Zassenhaus correction order must be 2 or 3, got {self.order}")
        if self.tol <= 0:
            raise ValueError(f"correction-flow tolerance must be positive, got {self.tol}")

    @property
    def factors(self) -> int:
        return self.order - 1


def _correction_flow(field: VectorField, t: float, tau: float, c: np.ndarray, tol: float, label: str) -> np.ndarray:
    try:
        return integrate_field(field.frozen_at(t), 0.0, tau, c, tol=tol).y[:, -1]
    except (RuntimeError, ArithmeticError) as e:
        raise FlowError(f"[Zassenhaus] {label} correction flow failed: {e}") from e


def zassenhaus_ab_step(
    sys: SplitSystem,
    t: float,
    h: float,
    c,
    corr: ZassenhausCorrection = ZassenhausCorrection(),
    probe: JacobianProbe = DEFAULT_PROBE,
) -> np.ndarray:
    """
    A-B splitting started from a corrected initial value.

    Applied to ``c`` in this order: for order 3 the flow of
    (1/6)[[A,B],B] + (1/3)[[A,B],A] over pseudo-time h^3, then the flow of
    [A,B] over pseudo-time -h^2/2, then A over h and B over h.
    """
    state = as_state(c)
    if h != 0:
        first = bracket(sys.a_field, sys.b_field, probe)
        if corr.order >= 3:
            second = VectorField(
                func=lambda s, x: commutator(first, sys.b_field, x, probe, s) / 6.0
                + commutator(first, sys.a_field, x, probe, s) / 3.0,
                name="Z3",
            )
            state = _correction_flow(second, t, h ** 3, state, corr.tol, "third-order")
        state = _correction_flow(first, t, -0.5 * h * h, state, corr.tol, "second-order")
    return ab_step(sys, t, h, state)


# ============================================
# Solvers
# ============================================

@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 50

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"solver tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class SolverResult:
    """
    Outcome of an iterative solve.

    Unpacks as ``x, iterations, converged``.
    """
    x: np.ndarray
    iterations: int
    converged: bool
    contraction: Optional[float] = None
    history: tuple = ()

    def __iter__(self):
        yield self.x
        yield self.iterations
        yield self.converged


def fixed_point_solve(K: Callable[[np.ndarray], np.ndarray], x0, cfg: SolverConfig = SolverConfig()) -> SolverResult:
    """
    Iterate x_{i+1} = K(x_i) until ||x_{i+1} - x_i||_2 <= tol.

    ``iterations`` counts applications of K. ``contraction`` is the largest
    observed ratio of successive update norms.
    """
    x = as_state(x0)
    history = [x]
    ratios = []
    previous_update = None

    for i in range(1, cfg.max_iter + 1):
        x_new = as_state(K(x), dim=x.size)
        update = float(np.linalg.norm(x_new - x))
        if previous_update:
            ratios.append(update / previous_update)
        x = x_new
        history.append(x)
        if update <= cfg.tol:
            logger.debug(f"[FixedPoint] Converged after {i} iterations")
            return SolverResult(x, i, True, max(ratios) if ratios else None, tuple(history))
        previous_update = update

    logger.warning(f"[FixedPoint] No convergence after {cfg.max_iter} iterations")
    return SolverResult(x, cfg.max_iter, False, max(ratios) if ratios else None, tuple(history))


def _newton_update(J: np.ndarray, residual: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(J))) or 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(J)
    pivot = float(np.min(np.abs(np.diag(lu))))
    if pivot < 1e-14 * scale:
        raise SingularJacobianError(f"Jacobian pivot {pivot:.3e} below 1e-14 * {scale:.3e}")
    return lu_solve((lu, piv), -residual)


def newton_solve(
    F: VectorField,
    x0,
    cfg: SolverConfig = SolverConfig(),
    probe: JacobianProbe = DEFAULT_PROBE,
) -> SolverResult:
    """
    Newton iteration F'(x_i) dx = -F(x_i), x_{i+1} = x_i + dx.

    Stops when ||F(x_i)||_2 <= tol; ``iterations`` counts Newton updates.

    Raises:
        SingularJacobianError: a pivot of the LU factorization vanishes
    """
    x = as_state(x0)
    history = [x]

    for i in range(cfg.max_iter):
        residual = eval_field(F, 0.0, x)
        if float(np.linalg.norm(residual)) <= cfg.tol:
            logger.debug(f"[Newton] Converged after {i} updates")
            return SolverResult(x, i, True, history=tuple(history))
        x = x + _newton_update(jacobian(F, x, probe), residual)
        history.append(x)

    converged = float(np.linalg.norm(eval_field(F, 0.0, x))) <= cfg.tol
    if not converged:
        logger.warning(f"[Newton] No convergence after {cfg.max_iter} updates")
    return SolverResult(x, cfg.max_iter, converged, history=tuple(history))


# ============================================
# Hamiltonian decoupling
# ============================================

@dataclass(frozen=True)
class Hamiltonian:
    """Partial derivatives of H(p, q)."""
    dh_dp: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dh_dq: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @classmethod
    def from_energy(
        cls,
        energy: Callable[[np.ndarray, np.ndarray], float],
        probe: JacobianProbe = DEFAULT_PROBE,
    ) -> "Hamiltonian":
        """Gradients of a scalar energy by finite differences."""
        return cls(
            dh_dp=lambda p, q: gradient(lambda pp: energy(pp, q), p, probe),
            dh_dq=lambda p, q: gradient(lambda qq: energy(p, qq), q, probe),
        )

    @classmethod
    def separable(cls, mass: float, grad_v: Callable[[np.ndarray], np.ndarray]) -> "Hamiltonian":
        """H = |p|^2 / (2 m) + V(q)."""
        return cls(dh_dp=lambda p, q: p / mass, dh_dq=lambda p, q: grad_v(q))


@dataclass(frozen=True)
class HamiltonianStep:
    """Result of a staggered fixed-point step; unpacks as ``p, q``."""
    p: np.ndarray
    q: np.ndarray
    iterations: int
    converged: bool

    def __iter__(self):
        yield self.p
        yield self.q


def hamiltonian_fixed_point_step(
    H: Hamiltonian,
    p,
    q,
    h: float,
    cfg: SolverConfig = SolverConfig(),
    t: float = 0.0,
    tol: Optional[float] = None,
) -> HamiltonianStep:
    """
    Advance (p, q) over [t, t+h] by the staggered iteration

        q_i' = dH/dp(p_i, q_{i-1}),    p_i' = -dH/dq(p_{i-1}, q_i)

    starting from the constant iterate (p, q). Stops once consecutive
    end states differ by at most ``cfg.tol`` in both p and q.
    ``iterations`` does not count the final confirming solve.
    """
    p0 = as_state(p)
    q0 = as_state(q, dim=p0.size)
    d = p0.size
    inner_tol = REFERENCE_TOL if tol is None else tol

    start = np.concatenate([p0, q0])
    previous: Callable[[float], np.ndarray] = lambda s: start
    p_old, q_old = p0, q0

    for i in range(1, cfg.max_iter + 1):
        prev = previous

        def rhs(s: float, y: np.ndarray, prev=prev) -> np.ndarray:
            y_prev = prev(s)
            p_i, q_i = y[:d], y[d:]
            p_prev, q_prev = y_prev[:d], y_prev[d:]
            q_dot = np.asarray(H.dh_dp(p_i, q_prev), dtype=float)
            p_dot = -np.asarray(H.dh_dq(p_prev, q_i), dtype=float)
            return np.concatenate([p_dot, q_dot])

        sol = integrate_field(
            VectorField(rhs, autonomous=False, name="staggered-H"), t, h, start, tol=inner_tol, dense_output=True
        )
        end = sol.y[:, -1]
        p_new, q_new = end[:d], end[d:]
        change = max(float(np.linalg.norm(p_new - p_old)), float(np.linalg.norm(q_new - q_old)))
        p_old, q_old = p_new, q_new
        previous = sol.sol
        if change <= cfg.tol:
            logger.debug(f"[Hamiltonian] Fixed point reached after {i} solves")
            return HamiltonianStep(p_new, q_new, max(1, i - 1), True)

    logger.warning(f"[Hamiltonian] Staggered iteration did not converge in {cfg.max_iter} solves")
    return HamiltonianStep(p_old, q_old, cfg.max_iter, False)
