"""State, vector-field and flow abstractions shared by every splitting scheme."""

import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import expm, lu_factor, lu_solve
from scipy.sparse.linalg import splu

from mpe_split.config import REFERENCE_METHOD, REFERENCE_TOL

logger = logging.getLogger(__name__)

# Factorizations of I - h M kept per linear part (least recently used evicted)
MAX_CACHED_FACTORIZATIONS = 4

# A state is a dense, finite, one-dimensional float array.
StateVec = np.ndarray

FieldFunc = Callable[[float, np.ndarray], np.ndarray]
FlowFunc = Callable[[float, float, np.ndarray], np.ndarray]


class DimensionError(ValueError):
    """Raised when two states (or a state and a field output) disagree in shape."""


class EvaluationError(ArithmeticError):
    """Raised when a vector field or state holds NaN or Inf."""


class FlowError(RuntimeError):
    """Raised when a sub-flow, integrator or scheme stage fails."""


def as_state(c, dim: Optional[int] = None) -> np.ndarray:
    """Coerce ``c`` to a finite 1-D float array, optionally of length ``dim``."""
    arr = np.atleast_1d(np.asarray(c, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"state must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise DimensionError(f"expected state of dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise EvaluationError("state holds non-finite components")
    return arr


@dataclass(frozen=True)
class VectorField:
    """
    A right-hand side F(t, c).

    The callable always receives time and state, autonomous fields simply
    ignore ``t``.
    """
    func: FieldFunc
    autonomous: bool = True
    name: str = "F"

    def __call__(self, t: float, c) -> np.ndarray:
        return eval_field(self, t, c)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(
            func=lambda t, c: np.asarray(self.func(t, c), dtype=float)
            + np.asarray(other.func(t, c), dtype=float),
            autonomous=self.autonomous and other.autonomous,
            name=f"{self.name}+{other.name}",
        )

    def frozen_at(self, t: float) -> "VectorField":
        """Autonomous copy with time pinned to ``t`` (for pseudo-time flows)."""
        return VectorField(func=lambda _s, c: self.func(t, c), autonomous=True, name=self.name)

    @classmethod
    def zero(cls, name: str = "0") -> "VectorField":
        return cls(func=lambda t, c: np.zeros_like(c), name=name)

    @classmethod
    def linear(cls, matrix, name: str = "M") -> "VectorField":
        m = np.asarray(matrix, dtype=float)
        return cls(func=lambda t, c: m @ c, name=name)


def eval_field(field: VectorField, t: float, c) -> np.ndarray:
    """
    Evaluate ``field`` at ``(t, c)``.

    Raises:
        DimensionError: output shape differs from the state shape
        EvaluationError: output is not finite
    """
    c = as_state(c)
    out = np.atleast_1d(np.asarray(field.func(t, c), dtype=float))
    if out.shape != c.shape:
        raise DimensionError(
            f"[{field.name}] output shape {out.shape} does not match state shape {c.shape}"
        )
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"[{field.name}] non-finite output at t={t}")
    return out


class FlowKind(Enum):
    """How a sub-flow is realized."""
    EXACT = "exact-closed-form"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class SubFlow:
    """
    Evolution map of one sub-problem over ``[t0, t0 + h]``.

    ``h == 0`` returns a copy of the input; negative ``h`` runs the flow backwards.
    """
    step: FlowFunc
    kind: FlowKind = FlowKind.EXACT
    tol: Optional[float] = None
    name: str = "flow"

    def __call__(self, t0: float, h: float, c) -> np.ndarray:
        c = as_state(c)
        if h == 0:
            return c.copy()
        out = np.atleast_1d(np.asarray(self.step(t0, h, c), dtype=float))
        if out.shape != c.shape:
            raise DimensionError(f"[{self.name}] flow changed the state shape to {out.shape}")
        if not np.all(np.isfinite(out)):
            raise FlowError(f"[{self.name}] non-finite state after step h={h} from t={t0}")
        return out

    @classmethod
    def exact(cls, step: FlowFunc, name: str = "flow") -> "SubFlow":
        return cls(step=step, kind=FlowKind.EXACT, name=name)

    @classmethod
    def linear(cls, matrix, name: str = "expm") -> "SubFlow":
        """Exact flow c -> exp(h M) c of a constant linear field."""
        m = np.asarray(matrix, dtype=float)
        return cls(step=lambda t0, h, c: expm(h * m) @ c, kind=FlowKind.EXACT, name=name)

    @classmethod
    def numeric(
        cls,
        field: VectorField,
        tol: Optional[float] = None,
        method: Optional[str] = None,
    ) -> "SubFlow":
        """Flow of ``field`` by the adaptive reference integrator."""
        tol = REFERENCE_TOL if tol is None else tol

        def step(t0: float, h: float, c: np.ndarray) -> np.ndarray:
            return integrate_field(field, t0, h, c, tol=tol, method=method).y[:, -1]

        return cls(step=step, kind=FlowKind.NUMERIC, tol=tol, name=f"numeric[{field.name}]")


@dataclass(frozen=True)
class LinearPart:
    """
    Affine structure F(t, c) = M c + s(t) of a field, used for implicit steps.

    ``matrix`` may be a dense array or a scipy sparse matrix. Factorizations of
    ``I - h M`` are cached for the most recently used step sizes.
    """
    matrix: Any
    source: Optional[Callable[[float], np.ndarray]] = None
    _solvers: OrderedDict = field(default_factory=OrderedDict, compare=False, repr=False)
    _lock: Any = field(default_factory=threading.Lock, compare=False, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, t: float, c: np.ndarray) -> np.ndarray:
        out = self.matrix @ c
        if self.source is not None:
            out = out + self.source(t)
        return np.asarray(out, dtype=float)

    def implicit_euler(
        self,
        t0: float,
        h: float,
        c: np.ndarray,
        forcing: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """One backward Euler step: (I - h M) x = c + h (s(t0 + h) + forcing)."""
        rhs = np.array(c, dtype=float)
        if self.source is not None:
            rhs = rhs + h * self.source(t0 + h)
        if forcing is not None:
            rhs = rhs + h * forcing
        return self._solver(h)(rhs)

    def _solver(self, h: float) -> Callable[[np.ndarray], np.ndarray]:
        with self._lock:
            solver = self._solvers.get(h)
            if solver is not None:
                self._solvers.move_to_end(h)
                return solver
            solver = self._factorize(h)
            self._solvers[h] = solver
            if len(self._solvers) > MAX_CACHED_FACTORIZATIONS:
                self._solvers.popitem(last=False)
            return solver

    def _factorize(self, h: float) -> Callable[[np.ndarray], np.ndarray]:
        logger.debug(f"[LinearPart] Factorizing I - h M for h={h}")
        if sp.issparse(self.matrix):
            lhs = (sp.identity(self.size, format="csc") - h * self.matrix).tocsc()
            return splu(lhs).solve
        lhs = np.eye(self.size) - h * np.asarray(self.matrix, dtype=float)
        factors = lu_factor(lhs)
        return lambda rhs: lu_solve(factors, rhs)


@dataclass(frozen=True)
class SplitSystem:
    """The pair of fields (A, B) with a sub-flow realization for each."""
    a_field: VectorField
    b_field: VectorField
    a_flow: SubFlow
    b_flow: SubFlow
    full_field: Optional[VectorField] = None
    a_linear: Optional[LinearPart] = None
    b_linear: Optional[LinearPart] = None
    name: str = "system"

    def full(self) -> VectorField:
        """F = A + B, the explicit full field when one was supplied."""
        if self.full_field is not None:
            return self.full_field
        return self.a_field + self.b_field

    def swapped(self) -> "SplitSystem":
        """The same system with the roles of A and B exchanged."""
        return replace(
            self,
            a_field=self.b_field,
            b_field=self.a_field,
            a_flow=self.b_flow,
            b_flow=self.a_flow,
            a_linear=self.b_linear,
            b_linear=self.a_linear,
            name=f"{self.name}[swapped]",
        )

    def check_consistency(self, states, t: float = 0.0) -> float:
        """
        Check F = A + B on sampled states.

        Returns:
            The largest scaled residual ||F(c) - A(c) - B(c)||_inf / (1 + ||c||_inf)

        Raises:
            ValueError: the residual exceeds 1e-12 on some state
        """
        if self.full_field is None:
            return 0.0
        worst = 0.0
        for c in states:
            c = as_state(c)
            residual = self.full_field(t, c) - self.a_field(t, c) - self.b_field(t, c)
            scaled = float(np.max(np.abs(residual))) / (1.0 + float(np.max(np.abs(c))))
            worst = max(worst, scaled)
        if worst > 1e-12:
            raise ValueError(f"[{self.name}] full field differs from A + B (scaled residual {worst:.3e})")
        return worst


def integrate_field(
    field: VectorField,
    t0: float,
    h: float,
    c,
    tol: Optional[float] = None,
    method: Optional[str] = None,
    dense_output: bool = False,
):
    """
    Integrate ``field`` over ``[t0, t0 + h]`` with scipy's adaptive solvers.

    Returns:
        The ``solve_ivp`` result object

    Raises:
        FlowError: the solver stopped early (e.g. step size underflow)
    """
    tol = REFERENCE_TOL if tol is None else tol
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    c = as_state(c)

    def rhs(t, y):
        return eval_field(field, t, y)

    try:
        sol = solve_ivp(
            rhs,
            (t0, t0 + h),
            c,
            method=method or REFERENCE_METHOD,
            rtol=tol,
            atol=tol,
            dense_output=dense_output,
        )
    except EvaluationError as e:
        raise FlowError(f"[{field.name}] integration over [{t0}, {t0 + h}] failed: {e}") from e

    if not sol.success:
        raise FlowError(f"[{field.name}] integration over [{t0}, {t0 + h}] failed: {sol.message}")
    return sol


def reference_flow(
    sys: SplitSystem,
    t0: float,
    h: float,
    c,
    tol: Optional[float] = None,
    method: Optional[str] = None,
) -> np.ndarray:
    """High-accuracy solution of the full problem over ``[t0, t0 + h]``."""
    c = as_state(c)
    if h == 0:
        return c.copy()
    return integrate_field(sys.full(), t0, h, c, tol=tol, method=method).y[:, -1]


def error_norms(u_num, u_ana) -> tuple[float, float]:
    """
    Grid-averaged L1 and maximum error between two states.

    Returns:
        (l1, max) with l1 = mean |u_num - u_ana| and max = max |u_num - u_ana|
    """
    a = np.atleast_1d(np.asarray(u_num, dtype=float))
    b = np.atleast_1d(np.asarray(u_ana, dtype=float))
    if a.shape != b.shape:
        raise DimensionError(f"cannot compare states of shapes {a.shape} and {b.shape}")
    diff = np.abs(a - b)
    return float(np.mean(diff)), float(np.max(diff))


def advance(
    step: Callable[[float, float, np.ndarray], np.ndarray],
    t0: float,
    t_end: float,
    dt: float,
    c,
) -> np.ndarray:
    """
    Apply ``step(t, h, c)`` from ``t0`` to ``t_end`` with step ``dt``.

    The last step is shortened when ``dt`` does not divide the interval.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    state = as_state(c)
    span = t_end - t0
    if span <= 0:
        return state.copy()
    n_steps = max(1, math.ceil(span / dt - 1e-9))
    for i in range(n_steps):
        t = t0 + i * dt
        h = dt if i < n_steps - 1 else t_end - t
        state = step(t, h, state)
    return state
