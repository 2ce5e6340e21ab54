"""
Multi-product extrapolation of a symmetric second-order kernel.

An MPE step combines kernel powers T2(h/k_i)^{k_i} with weights c_i solving

    sum_i c_i = 1,    sum_i c_i k_i^{-2m} = 0  (m = 1..n-1)

which cancels the even error terms up to order 2n.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from mpe_split.core import FlowError, SplitSystem, as_state
from mpe_split.splitting import strang_step

logger = logging.getLogger(__name__)

# Largest k for which weights are computed in exact rational arithmetic
EXACT_LIMIT = 100

Kernel = Callable[[SplitSystem, float, float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KSequence:
    """Strictly increasing substep counts k_1 < k_2 < ... < k_n."""
    values: tuple[int, ...]

    def __post_init__(self):
        if not self.values:
            raise ValueError("k-sequence must not be empty")
        for k in self.values:
            if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
                raise ValueError(f"k-sequence entries must be positive integers, got {k!r}")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"duplicate entries in {list(self.values)}: the Vandermonde system is singular")
        if list(self.values) != sorted(self.values):
            raise ValueError(f"k-sequence must be strictly increasing, got {list(self.values)}")

    @classmethod
    def natural(cls, n: int) -> "KSequence":
        """The sequence 1, 2, ..., n."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def parse(cls, text: str) -> "KSequence":
        """Parse a comma separated list such as ``"1,2,4"``."""
        try:
            values = tuple(int(part) for part in text.split(",") if part.strip())
        except ValueError as e:
            raise ValueError(f"cannot parse k-sequence '{text}': {e}") from e
        return cls(values)

    @classmethod
    def of(cls, k) -> "KSequence":
        if isinstance(k, KSequence):
            return k
        if isinstance(k, str):
            return cls.parse(k)
        return cls(tuple(int(v) for v in k))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @property
    def order(self) -> int:
        return 2 * len(self.values)

    @property
    def kernel_evaluations(self) -> int:
        """Kernel steps per MPE step, n(n+1)/2 for the natural sequence."""
        return sum(self.values)

    def __str__(self) -> str:
        return ",".join(str(k) for k in self.values)


@dataclass(frozen=True)
class MpeWeights:
    """Extrapolation weights for a k-sequence, exact when available."""
    k: KSequence
    values: tuple[float, ...]
    exact: Optional[tuple[Fraction, ...]] = field(default=None, compare=False)

    def residuals(self) -> np.ndarray:
        """Row residuals of the Vandermonde system, the first row shifted by -1."""
        k = np.array(self.k.values, dtype=float)
        c = np.array(self.values, dtype=float)
        rows = np.array([np.sum(c * k ** (-2 * m)) for m in range(len(k))])
        rows[0] -= 1.0
        return rows

    def verify(self) -> bool:
        """Check the normalization (1e-12) and cancellation rows (1e-10)."""
        res = self.residuals()
        if abs(res[0]) > 1e-12:
            raise ArithmeticError(f"weights for k={self.k} sum to {1.0 + res[0]!r}")
        if res.size > 1 and np.max(np.abs(res[1:])) > 1e-10:
            raise ArithmeticError(f"weights for k={self.k} leave Vandermonde residual {np.max(np.abs(res[1:])):.3e}")
        return True


def _closed_form_exact(k: Sequence[int]) -> list[Fraction]:
    return [
        math.prod((Fraction(ki * ki, ki * ki - kj * kj) for kj in k if kj != ki), start=Fraction(1))
        for ki in k
    ]


def _closed_form_float(k: Sequence[int]) -> list[float]:
    kf = np.array(k, dtype=float)
    return [
        float(np.prod([ki * ki / (ki * ki - kj * kj) for kj in kf if kj != ki]))
        for ki in kf
    ]


def _vandermonde_exact(k: Sequence[int]) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals with row pivoting."""
    n = len(k)
    a = [[Fraction(1, ki ** (2 * m)) for ki in k] for m in range(n)]
    b = [Fraction(1)] + [Fraction(0)] * (n - 1)

    for r in range(n):
        pivot = next((row for row in range(r, n) if a[row][r] != 0), None)
        if pivot is None:
            raise ValueError(f"Vandermonde system for k={list(k)} is singular")
        a[r], a[pivot] = a[pivot], a[r]
        b[r], b[pivot] = b[pivot], b[r]
        for row in range(n):
            if row != r and a[row][r] != 0:
                f = a[row][r] / a[r][r]
                a[row] = [x - f * y for x, y in zip(a[row], a[r])]
                b[row] = b[row] - f * b[r]

    return [b[r] / a[r][r] for r in range(n)]


def _vandermonde_float(k: Sequence[int]) -> list[float]:
    kf = np.array(k, dtype=float)
    matrix = np.array([kf ** (-2 * m) for m in range(len(kf))])
    rhs = np.zeros(len(kf))
    rhs[0] = 1.0
    return [float(x) for x in np.linalg.solve(matrix, rhs)]


def mpe_weights(k, mode: str = "closed-form", exact: Optional[bool] = None) -> MpeWeights:
    """
    Extrapolation weights for the substep counts ``k``.

    Args:
        k: KSequence, iterable of ints or a string like ``"1,2,3"``
        mode: ``"closed-form"`` (c_i = prod_{j != i} k_i^2 / (k_i^2 - k_j^2))
            or ``"solve"`` (Vandermonde system)
        exact: Use rational arithmetic; defaults to ``max(k) <= 100``

    Returns:
        MpeWeights satisfying the Vandermonde rows
    """
    seq = KSequence.of(k)
    if mode not in ("closed-form", "solve"):
        raise ValueError(f"unknown weight mode '{mode}' (expected 'closed-form' or 'solve')")
    use_exact = max(seq.values) <= EXACT_LIMIT if exact is None else exact

    if use_exact:
        fractions = _closed_form_exact(seq.values) if mode == "closed-form" else _vandermonde_exact(seq.values)
        weights = MpeWeights(k=seq, values=tuple(float(f) for f in fractions), exact=tuple(fractions))
    else:
        values = _closed_form_float(seq.values) if mode == "closed-form" else _vandermonde_float(seq.values)
        weights = MpeWeights(k=seq, values=tuple(values))

    logger.debug(f"[MPE] Weights for k={seq} ({mode}, exact={use_exact}): {weights.values}")
    return weights


@dataclass(frozen=True)
class MpeScheme:
    """A symmetric second-order kernel on a split system plus extrapolation weights."""
    system: SplitSystem
    weights: MpeWeights
    kernel: Kernel = partial(strang_step, order="aba")

    @property
    def k(self) -> KSequence:
        return self.weights.k

    @property
    def order(self) -> int:
        return self.k.order


def mpe_scheme(
    system: SplitSystem,
    k,
    order: str = "aba",
    mode: str = "closed-form",
) -> MpeScheme:
    """Build an MPE scheme whose kernel is the Strang step in the given ordering."""
    if order not in ("aba", "bab"):
        raise ValueError(f"unknown kernel ordering '{order}' (expected 'aba' or 'bab')")
    return MpeScheme(system=system, weights=mpe_weights(k, mode=mode), kernel=partial(strang_step, order=order))


def t2_power(scheme: MpeScheme, k: int, t: float, h: float, c) -> np.ndarray:
    """Apply the kernel ``k`` times with step ``h/k``, advancing time as it goes."""
    if k < 1:
        raise ValueError(f"kernel power must be >= 1, got {k}")
    sub = h / k
    state = as_state(c)
    for j in range(k):
        try:
            state = scheme.kernel(scheme.system, t + j * sub, sub, state)
        except (RuntimeError, ArithmeticError) as e:
            raise FlowError(f"[MPE] kernel substep {j + 1}/{k} failed: {e}") from e
    return state


def mpe_step(scheme: MpeScheme, t: float, h: float, c, k=None) -> np.ndarray:
    """
    One extrapolated step: sum_i c_i T2(h/k_i)^{k_i} c.

    The combination is formed in k order. Negative weights are not clipped,
    so intermediate results of positivity-preserving kernels may leave the
    physical range.
    """
    if k is not None and KSequence.of(k) != scheme.k:
        raise ValueError(f"scheme weights were computed for k={scheme.k}, not k={KSequence.of(k)}")
    c = as_state(c)
    total = np.zeros_like(c)
    for ki, ci in zip(scheme.k.values, scheme.weights.values):
        total = total + ci * t2_power(scheme, ki, t, h, c)
    return total


def fit_order(
    steps: Iterable[float],
    errors: Iterable[float],
    window: int = 3,
    floor_ratio: float = 1.5,
) -> Optional[float]:
    """
    Least-squares convergence order of ``errors`` against ``steps``.

    Steps are sorted in descending order and the sequence is cut at the first
    refinement whose error shrinks by less than ``floor_ratio`` (roundoff
    floor). The slope of log(err) vs log(h) is fitted over the last ``window``
    points that remain.

    Returns:
        The fitted order, or None when fewer than two usable points remain
    """
    pairs = sorted(zip(steps, errors), key=lambda pair: -pair[0])
    if not pairs or pairs[0][1] is None or not pairs[0][1] > 0:
        return None

    kept = [pairs[0]]
    for (_, prev_err), (h, err) in zip(pairs, pairs[1:]):
        if err is None or not err > 0 or prev_err / err < floor_ratio:
            break
        kept.append((h, err))

    used = kept[-window:]
    if len(used) < 2:
        return None
    hs = np.log([h for h, _ in used])
    es = np.log([e for _, e in used])
    return float(np.polyfit(hs, es, 1)[0])
