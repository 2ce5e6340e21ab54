"""Logistic growth u' = u - u^2 split into linear growth and quadratic decay."""

import numpy as np

from mpe_split.core import SplitSystem, SubFlow, VectorField


def logistic_solution(u0, t):
    """Closed-form solution u0 e^t / (1 + u0 (e^t - 1))."""
    growth = np.exp(t)
    return u0 * growth / (1.0 + u0 * (growth - 1.0))


def logistic_split() -> SplitSystem:
    """
    A(u) = u with exact flow e^h u, B(u) = -u^2 with exact flow u / (1 + h u).

    The B flow blows up for h u <= -1; schemes on this split are meant for
    u >= 0.
    """
    return SplitSystem(
        a_field=VectorField(lambda t, c: c, name="u"),
        b_field=VectorField(lambda t, c: -c * c, name="-u^2"),
        a_flow=SubFlow.exact(lambda t0, h, c: np.exp(h) * c, name="growth"),
        b_flow=SubFlow.exact(lambda t0, h, c: c / (1.0 + h * c), name="decay"),
        full_field=VectorField(lambda t, c: c - c * c, name="u-u^2"),
        name="logistic",
    )
