"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from mpe_split.core import advance
from mpe_split.mpe import fit_order
from mpe_split.problems import BATTERY_A, BATTERY_B, BATTERY_C0, linear_solution, linear_split, logistic_split


@pytest.fixture
def battery():
    """The fixed non-commuting 2x2 pair, its initial value and exact solution at t = 1."""
    system = linear_split(BATTERY_A, BATTERY_B)
    c0 = np.array(BATTERY_C0)
    return system, c0, linear_solution(BATTERY_A, BATTERY_B, 1.0, c0)


@pytest.fixture
def logistic():
    return logistic_split()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def observed_order():
    """Fitted global order of ``step`` over the given step counts on [0, t_end]."""

    def measure(step, c0, t_end, exact, step_counts, window=4):
        steps, errors = [], []
        for n in step_counts:
            dt = t_end / n
            final = advance(step, 0.0, t_end, dt, c0)
            steps.append(dt)
            errors.append(float(np.max(np.abs(final - exact))))
        order = fit_order(steps, errors, window=window)
        assert order is not None, f"no asymptotic range in errors {errors}"
        return order

    return measure
