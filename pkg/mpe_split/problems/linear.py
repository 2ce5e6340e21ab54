"""Constant-coefficient linear splits with a matrix-exponential oracle."""

import numpy as np
from scipy.linalg import expm

from mpe_split.core import SplitSystem, SubFlow, VectorField

# Fixed non-commuting pair used by the order battery
BATTERY_A = ((-0.3, 1.0), (-0.8, 0.1))
BATTERY_B = ((0.4, -0.2), (0.6, -0.5))
BATTERY_C0 = (1.0, 0.5)


def linear_split(a=BATTERY_A, b=BATTERY_B) -> SplitSystem:
    """Split c' = (A + B) c with exact sub-flows exp(hA), exp(hB)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square matrices of equal shape, got {a.shape} and {b.shape}")
    full = a + b
    return SplitSystem(
        a_field=VectorField.linear(a, name="A"),
        b_field=VectorField.linear(b, name="B"),
        a_flow=SubFlow.linear(a, name="exp(hA)"),
        b_flow=SubFlow.linear(b, name="exp(hB)"),
        full_field=VectorField.linear(full, name="A+B"),
        name="linear",
    )


def linear_solution(a, b, t: float, c0) -> np.ndarray:
    """exp(t (A + B)) c0."""
    full = np.asarray(a, dtype=float) + np.asarray(b, dtype=float)
    return expm(t * full) @ np.asarray(c0, dtype=float)


def zero_split() -> SplitSystem:
    """Both operators vanish; every scheme must return its input."""
    identity = SubFlow.exact(lambda t0, h, c: c.copy(), name="identity")
    return SplitSystem(
        a_field=VectorField.zero("0_A"),
        b_field=VectorField.zero("0_B"),
        a_flow=identity,
        b_flow=identity,
        full_field=VectorField.zero("0"),
        name="zero",
    )
