"""Tests for MPE weights, the extrapolated step and order fitting."""

from fractions import Fraction
from functools import partial

import numpy as np
import pytest

from mpe_split.core import FlowError
from mpe_split.mpe import (
    KSequence,
    MpeScheme,
    MpeWeights,
    fit_order,
    mpe_scheme,
    mpe_step,
    mpe_weights,
    t2_power,
)
from mpe_split.problems import linear_split, logistic_solution, zero_split
from mpe_split.splitting import strang_step


class TestKSequence:
    def test_natural(self):
        seq = KSequence.natural(4)
        assert seq.values == (1, 2, 3, 4)
        assert seq.order == 8
        assert seq.kernel_evaluations == 10

    def test_parse(self):
        assert KSequence.parse("1, 2,4").values == (1, 2, 4)
        assert str(KSequence.of([1, 3])) == "1,3"

    @pytest.mark.parametrize("text", ["1,1", "2,1", "0,1", "a,b", ""])
    def test_rejects_invalid(self, text):
        with pytest.raises(ValueError):
            KSequence.parse(text)

    def test_duplicate_message(self):
        with pytest.raises(ValueError, match="singular"):
            KSequence((1, 2, 2))


class TestWeights:
    def test_single_entry(self):
        w = mpe_weights([1])
        assert w.exact == (Fraction(1),)

    def test_pair(self):
        assert mpe_weights([1, 2]).exact == (Fraction(-1, 3), Fraction(4, 3))

    def test_triple(self):
        assert mpe_weights([1, 2, 3]).exact == (Fraction(1, 24), Fraction(-16, 15), Fraction(81, 40))

    def test_eighth_and_tenth_order(self):
        assert mpe_weights(KSequence.natural(4)).exact == (
            Fraction(-1, 360), Fraction(16, 45), Fraction(-729, 280), Fraction(1024, 315)
        )
        assert mpe_weights(KSequence.natural(5)).exact == (
            Fraction(1, 8640), Fraction(-64, 945), Fraction(6561, 4480), Fraction(-16384, 2835), Fraction(390625, 72576)
        )

    @pytest.mark.parametrize("k", [[1, 2, 3, 4], [1, 3, 5], [2, 3, 7, 11], [1, 2, 4, 8, 16]])
    def test_closed_form_matches_elimination(self, k):
        assert mpe_weights(k).exact == mpe_weights(k, mode="solve").exact

    def test_random_sequences_satisfy_system(self, rng):
        for _ in range(20):
            size = int(rng.integers(1, 7))
            k = sorted(int(v) for v in rng.choice(np.arange(1, 40), size=size, replace=False))
            w = mpe_weights(k)
            assert sum(w.exact) == 1
            for m in range(1, size):
                assert sum(c * Fraction(1, ki ** (2 * m)) for c, ki in zip(w.exact, k)) == 0
            assert w.verify()

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_float_solve_agrees(self, n):
        exact = mpe_weights(KSequence.natural(n))
        floating = mpe_weights(KSequence.natural(n), mode="solve", exact=False)
        assert floating.exact is None
        np.testing.assert_allclose(floating.values, exact.values, atol=1e-9)

    def test_large_k_uses_floats(self):
        w = mpe_weights([1, 150])
        assert w.exact is None
        assert w.values[0] + w.values[1] == pytest.approx(1.0, abs=1e-12)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            mpe_weights([1, 2], mode="guess")

    def test_verify_rejects_bad_weights(self):
        bad = MpeWeights(k=KSequence((1, 2)), values=(0.5, 0.5))
        with pytest.raises(ArithmeticError):
            bad.verify()


class TestMpeStep:
    def test_single_entry_is_the_kernel(self, battery):
        system, c0, _ = battery
        scheme = mpe_scheme(system, [1])
        assert np.array_equal(mpe_step(scheme, 0.0, 0.1, c0), strang_step(system, 0.0, 0.1, c0))

    def test_zero_field_is_identity(self):
        scheme = mpe_scheme(zero_split(), KSequence.natural(3))
        c = np.array([1.0, -2.0])
        np.testing.assert_allclose(mpe_step(scheme, 0.0, 0.5, c), c, atol=1e-14)

    def test_explicit_two_term_combination(self, battery):
        system, c0, _ = battery
        scheme = mpe_scheme(system, [1, 2])
        h = 0.2
        t1 = strang_step(system, 0.0, h, c0)
        t2 = strang_step(system, 0.1, 0.1, strang_step(system, 0.0, 0.1, c0))
        np.testing.assert_allclose(mpe_step(scheme, 0.0, h, c0), -t1 / 3.0 + 4.0 * t2 / 3.0, atol=1e-14)

    def test_kernel_evaluation_count(self, battery):
        system, c0, _ = battery
        calls = []

        def counting_kernel(sys, t, h, c):
            calls.append(t)
            return strang_step(sys, t, h, c)

        scheme = MpeScheme(system=system, weights=mpe_weights(KSequence.natural(4)), kernel=counting_kernel)
        mpe_step(scheme, 0.0, 0.1, c0)
        assert len(calls) == 10

    def test_mismatched_k(self, battery):
        system, c0, _ = battery
        scheme = mpe_scheme(system, [1, 2])
        with pytest.raises(ValueError):
            mpe_step(scheme, 0.0, 0.1, c0, k=[1, 3])

    def test_kernel_failure_is_reported(self, battery):
        system, c0, _ = battery

        def failing(sys, t, h, c):
            raise FlowError("boom")

        scheme = MpeScheme(system=system, weights=mpe_weights([1, 2]), kernel=failing)
        with pytest.raises(FlowError, match="kernel substep 1/1"):
            mpe_step(scheme, 0.0, 0.1, c0)

    def test_t2_power_rejects_zero(self, battery):
        scheme = mpe_scheme(battery[0], [1])
        with pytest.raises(ValueError):
            t2_power(scheme, 0, 0.0, 0.1, battery[1])

    def test_bab_kernel(self, battery):
        system, c0, _ = battery
        scheme = mpe_scheme(system, [1], order="bab")
        assert np.array_equal(mpe_step(scheme, 0.0, 0.1, c0), strang_step(system, 0.0, 0.1, c0, order="bab"))


class TestMpeOrder:
    @pytest.mark.parametrize(
        "k,expected,counts,tol",
        [
            ([1, 2], 4.0, [8, 16, 32, 64], 0.3),
            ([1, 3], 4.0, [8, 16, 32, 64], 0.3),
            ([1, 2, 3], 6.0, [4, 8, 16, 32], 0.4),
            ([1, 2, 3, 4], 8.0, [1, 2, 3, 4, 6], 0.6),
        ],
    )
    def test_linear_battery(self, battery, observed_order, k, expected, counts, tol):
        system, c0, exact = battery
        scheme = mpe_scheme(system, k)
        order = observed_order(partial(mpe_step, scheme), c0, 1.0, exact, counts)
        assert order == pytest.approx(expected, abs=tol)

    @pytest.mark.parametrize(
        "k,u0,expected,counts",
        [
            ([1, 2], 0.5, 4.0, [2, 4, 8, 16]),
            ([1, 2, 3], 0.1, 6.0, [2, 4, 8, 16]),
        ],
    )
    def test_logistic(self, logistic, observed_order, k, u0, expected, counts):
        scheme = mpe_scheme(logistic, k)
        exact = logistic_solution(u0, 1.0)
        order = observed_order(partial(mpe_step, scheme), np.array([u0]), 1.0, exact, counts)
        assert order == pytest.approx(expected, abs=0.4)

    def test_local_error_ratio(self, logistic):
        c = np.array([0.5])
        h = 0.01
        exact = logistic_solution(0.5, h)
        err_1 = abs(mpe_step(mpe_scheme(logistic, [1]), 0.0, h, c)[0] - exact)
        err_2 = abs(t2_power(mpe_scheme(logistic, [2]), 2, 0.0, h, c)[0] - exact)
        assert 3.5 < err_1 / err_2 < 4.5


class TestFitOrder:
    def test_exact_power_law(self):
        steps = [0.1, 0.05, 0.025, 0.0125]
        errors = [3.0 * h ** 2 for h in steps]
        assert fit_order(steps, errors) == pytest.approx(2.0, abs=1e-10)

    def test_stops_at_roundoff_floor(self):
        steps = [0.1, 0.05, 0.025, 0.0125, 0.00625]
        errors = [1e-4, 6.25e-6, 3.9e-7, 3.0e-7, 2.9e-7]
        assert fit_order(steps, errors) == pytest.approx(4.0, abs=0.05)

    def test_order_of_input_does_not_matter(self):
        steps = [0.025, 0.1, 0.05]
        errors = [h ** 3 for h in steps]
        assert fit_order(steps, errors) == pytest.approx(3.0, abs=1e-10)

    def test_zero_errors(self):
        assert fit_order([0.1, 0.05], [0.0, 0.0]) is None

    def test_single_point(self):
        assert fit_order([0.1], [1e-3]) is None
