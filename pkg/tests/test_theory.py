import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from targetrf.simlab import Dgp
from targetrf.theory import (
    ScalarFn1D,
    SplitSequence,
    TheoryParams,
    ceil_pow2,
    cstar_linear,
    cstar_numeric,
    floor_pow2,
    mse_bounds_ordinary,
    mse_targeted,
    pmf_joint,
    population_criterion,
    population_criterion_grid,
    rho,
    sine_bound,
    snr_to_sigma2,
    upper_bound_split_prob,
)

SQRT12 = math.sqrt(12.0)


def enumeration_bound(a, s_a, m):
    """Exact strong-draw probability by enumerating all size-m subsets."""
    strong = set(range(s_a))
    total = hits = 0
    for draw in itertools.combinations(range(a), m):
        total += 1
        hits += bool(strong & set(draw))
    return Fraction(hits, total)


def criterion_by_conditional_variances(fn, tau):
    """Direct quadrature of the variance decomposition (oracle route)."""
    ef = quad(fn, 0, 1, limit=200)[0]
    ef2 = quad(lambda u: fn(u) ** 2, 0, 1, limit=200)[0]
    m1l = quad(fn, 0, tau, limit=200)[0] / tau
    m2l = quad(lambda u: fn(u) ** 2, 0, tau, limit=200)[0] / tau
    m1r = quad(fn, tau, 1, limit=200)[0] / (1 - tau)
    m2r = quad(lambda u: fn(u) ** 2, tau, 1, limit=200)[0] / (1 - tau)
    return (ef2 - ef**2) - tau * (m2l - m1l**2) - (1 - tau) * (m2r - m1r**2)


class TestHypergeometricBound:
    def test_paper_value(self):
        assert upper_bound_split_prob(40, 5, 14) == pytest.approx(0.900, abs=5e-4)

    def test_indicator_vanishes(self):
        for a, s_a in [(5, 2), (9, 4)]:
            m = a - s_a + 1
            assert upper_bound_split_prob(a, s_a, m) == 1.0

    def test_two_predictor_enumeration(self):
        assert upper_bound_split_prob(2, 1, 1) == pytest.approx(0.5)

    def test_matches_exhaustive_enumeration(self):
        for a in range(1, 9):
            for s_a in range(0, a + 1):
                for m in range(1, a + 1):
                    exact = enumeration_bound(a, s_a, m)
                    assert upper_bound_split_prob(a, s_a, m) == pytest.approx(
                        float(exact), abs=1e-15
                    )

    def test_monotonicity_grid(self):
        # non-decreasing in m and s_a, non-increasing in a
        for a in range(2, 31, 4):
            for s_a in range(0, a):
                vals = [upper_bound_split_prob(a, s_a, m) for m in range(1, a + 1)]
                assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))
        for a in range(3, 31, 4):
            for m in range(1, a):
                vals = [upper_bound_split_prob(a, s_a, m) for s_a in range(0, a + 1)]
                assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))
        for s_a in (1, 3):
            for m in (1, 2):
                vals = [
                    upper_bound_split_prob(a, s_a, m) for a in range(s_a + m, 30)
                ]
                assert all(x >= y - 1e-15 for x, y in zip(vals, vals[1:]))

    def test_large_a_uses_log_gamma(self):
        close = upper_bound_split_prob(61, 5, 20)
        exact = float(1 - Fraction(math.comb(56, 20), math.comb(61, 20)))
        assert close == pytest.approx(exact, rel=1e-12)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            upper_bound_split_prob(5, 6, 1)
        with pytest.raises(ValueError):
            upper_bound_split_prob(5, 2, 0)


class TestRho:
    def test_default_mtry_two_predictors(self):
        assert rho(2, 1, math.ceil(2 / 3)) == pytest.approx(0.5)

    def test_three_predictors(self):
        assert rho(3, 1, 1) == pytest.approx(1.0 / 3.0)

    def test_full_mtry(self):
        assert rho(7, 2, 7) == 1.0


class TestCstarLinear:
    def test_unit_interval_linear(self):
        val = cstar_linear([SQRT12], [(0.0, 1.0)], [0])
        assert val == pytest.approx(0.75)

    def test_empty_strong_set(self):
        assert cstar_linear([SQRT12], [(0.0, 1.0)], []) == 0.0

    def test_half_interval_scaling(self):
        val = cstar_linear([SQRT12], [(0.25, 0.75)], [0])
        assert val == pytest.approx(0.75 / 4.0)

    def test_max_over_directions(self):
        val = cstar_linear([1.0, 2.0], [(0, 1), (0, 1)], [0, 1])
        assert val == pytest.approx(4.0 / 16.0)

    def test_interval_validation(self):
        with pytest.raises(ValueError, match="interval"):
            cstar_linear([1.0], [(0.0, 1.5)], [0])


class TestPopulationCriterion:
    def test_linear_at_half(self):
        g = Dgp("linear").scalar_fn()
        assert population_criterion(g, 0.5) == pytest.approx(0.75, abs=1e-9)

    def test_linear_closed_form_any_tau(self):
        # Var-decomposition of the unit-variance linear model: 3 tau (1 - tau)
        g = Dgp("linear").scalar_fn()
        for tau in (0.1, 0.33, 0.5, 0.77, 0.9):
            assert population_criterion(g, tau) == pytest.approx(
                3.0 * tau * (1.0 - tau), abs=1e-9
            )

    def test_constant_function_is_zero(self):
        g = ScalarFn1D(fn=lambda u: np.full_like(np.asarray(u, dtype=float), 2.5))
        for tau in (0.2, 0.5, 0.8):
            assert population_criterion(g, tau) == pytest.approx(0.0, abs=1e-10)

    def test_sine_closed_form(self):
        alpha = 4 * math.pi
        g = Dgp("sine", alpha=alpha).scalar_fn()
        for tau in (0.05, 0.21, 0.4, 0.5, 0.63, 0.95):
            expected = 2 * (1 - math.cos(alpha * tau)) ** 2 / (alpha**2 * tau * (1 - tau))
            assert population_criterion(g, tau) == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("kind", ["linear", "quadratic", "piecewise15", "sine"])
    def test_matches_conditional_variance_oracle(self, kind):
        g = Dgp(kind).scalar_fn()
        for tau in (0.19, 0.5, 0.86):
            oracle = criterion_by_conditional_variances(g.fn, tau)
            assert population_criterion(g, tau) == pytest.approx(oracle, abs=1e-7)

    @pytest.mark.parametrize("kind", ["linear", "quadratic", "piecewise15", "sine"])
    def test_nonnegative_on_grid(self, kind):
        g = Dgp(kind).scalar_fn()
        taus = np.linspace(0.0, 1.0, 1002)[1:-1]
        vals = population_criterion_grid(g, taus)
        assert np.all(vals >= -1e-12)

    def test_grid_matches_pointwise(self):
        g = Dgp("quadratic").scalar_fn()
        taus = np.array([0.11, 0.5, 0.642, 0.93])
        grid_vals = population_criterion_grid(g, taus)
        for t, v in zip(taus, grid_vals):
            assert v == pytest.approx(population_criterion(g, t), abs=1e-9)

    def test_tau_domain(self):
        g = Dgp("linear").scalar_fn()
        with pytest.raises(ValueError):
            population_criterion(g, 0.0)
        with pytest.raises(ValueError):
            population_criterion(g, 1.0)

    def test_integration_failure_reports_tolerance(self):
        from targetrf.theory import IntegrationError

        hopeless = ScalarFn1D(fn=lambda u: np.sin(1e8 * (u + 0.1) ** 3))
        with pytest.raises(IntegrationError, match="reached only"):
            population_criterion(hopeless, 0.5)


class TestCstarNumeric:
    def test_linear(self):
        assert cstar_numeric(Dgp("linear").scalar_fn(), 2000) == pytest.approx(
            0.75, abs=1e-4
        )

    def test_quadratic(self):
        assert cstar_numeric(Dgp("quadratic").scalar_fn(), 2000) == pytest.approx(
            0.3125, abs=2e-3
        )

    def test_piecewise(self):
        assert cstar_numeric(Dgp("piecewise15").scalar_fn(), 2000) == pytest.approx(
            0.2565, abs=2e-3
        )

    def test_grid_size_validated(self):
        with pytest.raises(ValueError, match="1000"):
            cstar_numeric(Dgp("linear").scalar_fn(), 500)


class TestSineBound:
    def test_paper_value_4pi(self):
        assert sine_bound(4 * math.pi) == pytest.approx(0.3786, abs=5e-5)

    def test_direct_substitution_16pi(self):
        assert sine_bound(16 * math.pi) == pytest.approx(4 / (16 * math.pi - 2))

    @pytest.mark.parametrize("mult", [4, 8, 16])
    def test_dominates_numeric_maximum(self, mult):
        alpha = mult * math.pi
        numeric = cstar_numeric(Dgp("sine", alpha=alpha).scalar_fn(), 4000)
        assert sine_bound(alpha) >= numeric

    def test_domain(self):
        with pytest.raises(ValueError):
            sine_bound(2.0)


class TestPow2:
    def test_exact_power(self):
        assert (floor_pow2(8), ceil_pow2(8)) == (8.0, 8.0)

    def test_between_powers(self):
        assert (floor_pow2(6), ceil_pow2(6)) == (4.0, 8.0)

    def test_one(self):
        assert (floor_pow2(1), ceil_pow2(1)) == (1.0, 1.0)

    def test_exact_on_fractions(self):
        assert floor_pow2(Fraction(1023, 256)) == 2.0
        assert ceil_pow2(Fraction(1025, 256)) == 8.0
        assert floor_pow2(Fraction(1024, 256)) == ceil_pow2(Fraction(1024, 256)) == 4.0

    def test_domain(self):
        with pytest.raises(ValueError):
            floor_pow2(0.5)


class TestMseTargeted:
    def test_single_leaf_is_signal_variance(self):
        assert mse_targeted(1, SQRT12) == pytest.approx(1.0)

    def test_two_and_three_leaves(self):
        assert mse_targeted(2, SQRT12) == pytest.approx(0.25)
        assert mse_targeted(3, SQRT12) == pytest.approx(0.15625)

    def test_power_of_two_closed_form(self):
        for k in range(0, 7):
            assert mse_targeted(2**k, SQRT12) == pytest.approx(
                (12.0 / 12.0) * 4.0 ** (-k), rel=1e-12
            )

    def test_monotone_nonincreasing(self):
        vals = [mse_targeted(L, SQRT12) for L in range(1, 65)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_segment_lengths_oracle(self):
        # best-first growth halves a longest leaf each step; the resulting
        # piecewise-mean MSE is sum(len^3) / 12 * beta^2
        for L in range(1, 20):
            lengths = _targeted_leaf_lengths(L)
            oracle = 12.0 * sum(w**3 for w in lengths) / 12.0
            assert mse_targeted(L, SQRT12) == pytest.approx(oracle, rel=1e-12)

    def test_rejects_bad_L(self):
        with pytest.raises(ValueError):
            mse_targeted(0, 1.0)
        with pytest.raises(ValueError):
            mse_targeted(2.5, 1.0)


class TestPmfJoint:
    def test_two_leaves(self):
        for which in ("l0", "l1"):
            table = pmf_joint(2, 0.3, which)
            assert table[(1, 1)] == pytest.approx(0.3)
            assert table[(0, 1)] == pytest.approx(0.7)

    def test_three_leaves_first_weak(self):
        table = pmf_joint(3, 0.5, "l0")
        assert table == pytest.approx(
            {(0, 1): 0.25, (2, 1): 0.25, (1, 1): 0.25, (1, 2): 0.25}
        )

    def test_three_leaves_first_strong_enumeration(self):
        table = pmf_joint(3, 0.4, "l1")
        # sequences: 00, 01, 10, 11 with first-one index (1 by convention if none)
        assert table[(0, 1)] == pytest.approx(0.36)
        assert table[(1, 2)] == pytest.approx(0.24)  # 01
        assert table[(1, 1)] == pytest.approx(0.24)  # 10
        assert table[(2, 1)] == pytest.approx(0.16)  # 11

    @pytest.mark.parametrize("which", ["l0", "l1"])
    def test_total_mass_one(self, which):
        for L in range(2, 13):
            for r in np.linspace(0.0, 1.0, 11):
                total = sum(pmf_joint(L, float(r), which).values())
                assert total == pytest.approx(1.0, abs=1e-12)

    def test_matches_monte_carlo_frequencies(self):
        rng = np.random.default_rng(99)
        L, r = 6, 0.45
        draws = rng.random((20000, L - 1)) < r
        for which in ("l0", "l1"):
            counts: dict[tuple[int, int], int] = {}
            for row in draws:
                n = int(row.sum())
                target = ~row if which == "l0" else row
                k = int(np.argmax(target)) + 1 if target.any() else 1
                counts[(n, k)] = counts.get((n, k), 0) + 1
            table = pmf_joint(L, r, which)
            for key, prob in table.items():
                freq = counts.get(key, 0) / draws.shape[0]
                assert freq == pytest.approx(prob, abs=0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            pmf_joint(1, 0.5, "l0")
        with pytest.raises(ValueError):
            pmf_joint(4, 1.5, "l0")
        with pytest.raises(ValueError):
            pmf_joint(4, 0.5, "lX")


class TestMseBoundsOrdinary:
    def test_rho_zero_collapses_to_constant_tree(self):
        upper, lower = mse_bounds_ordinary(8, 0.0, SQRT12)
        assert upper == pytest.approx(1.0)
        assert lower == pytest.approx(1.0)

    def test_rho_one_collapses_to_targeted(self):
        upper, lower = mse_bounds_ordinary(8, 1.0, SQRT12)
        assert upper == pytest.approx(0.015625)
        assert lower == pytest.approx(0.015625)

    def test_upper_dominates_lower(self):
        for L in range(4, 13):
            for r in np.linspace(0.05, 0.95, 10):
                upper, lower = mse_bounds_ordinary(L, float(r), SQRT12)
                assert upper >= lower - 1e-12

    def test_lower_bound_dominates_targeted_at_powers_of_two(self):
        for k in (2, 3):
            L = 2**k
            for r in np.linspace(0.05, 0.95, 7):
                _, lower = mse_bounds_ordinary(L, float(r), SQRT12)
                assert lower >= mse_targeted(L, SQRT12) - 1e-12

    def test_monte_carlo_bound_ordering(self):
        # simulate split sequences and average the bound functions directly
        rng = np.random.default_rng(5)
        L, r = 8, 0.4
        draws = rng.random((40000, L - 1)) < r
        g0_vals, g1_vals = [], []
        for row in draws:
            n = int(row.sum())
            l0 = int(np.argmax(~row)) + 1 if (~row).any() else 1
            l1 = int(np.argmax(row)) + 1 if row.any() else 1
            arg0 = Fraction(l0) + Fraction(n - l0 + 1, l0 * (L - n))
            g0_vals.append(mse_targeted(int(floor_pow2(arg0)), SQRT12))
            g1_vals.append(mse_targeted(int(ceil_pow2(1 + Fraction(n, l1))), SQRT12))
        upper, lower = mse_bounds_ordinary(L, r, SQRT12)
        assert np.mean(g0_vals) == pytest.approx(upper, abs=0.01)
        assert np.mean(g1_vals) == pytest.approx(lower, abs=0.01)


class TestSnr:
    def test_half(self):
        assert snr_to_sigma2(0.5) == pytest.approx(1.0)

    def test_one_is_noiseless(self):
        assert snr_to_sigma2(1.0) == 0.0

    def test_point_one(self):
        assert snr_to_sigma2(0.1) == pytest.approx(9.0)

    def test_domain(self):
        with pytest.raises(ValueError):
            snr_to_sigma2(0.0)
        with pytest.raises(ValueError):
            snr_to_sigma2(1.2)


class TestSplitSequence:
    def test_conventions(self):
        seq = SplitSequence.from_indicators([0, 1, 1, 0, 1])
        assert seq.n_strong == 3
        assert seq.first_weak == 1
        assert seq.first_strong == 2

    def test_degenerate_all_strong(self):
        seq = SplitSequence.from_indicators([1, 1, 1])
        assert (seq.n_strong, seq.first_weak, seq.first_strong) == (3, 1, 1)

    def test_degenerate_all_weak(self):
        seq = SplitSequence.from_indicators([0, 0])
        assert (seq.n_strong, seq.first_weak, seq.first_strong) == (0, 1, 1)


class TestTheoryParams:
    def test_derived_rho(self):
        params = TheoryParams.with_derived_rho(p=2, s=1, m=1, L=8, beta1=SQRT12)
        assert params.rho == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            TheoryParams(p=2, s=3, m=1, L=4, beta1=1.0, rho=0.5)
        with pytest.raises(ValueError):
            TheoryParams(p=4, s=1, m=5, L=4, beta1=1.0, rho=0.5)


def _targeted_leaf_lengths(L):
    """Leaf interval lengths after L-1 best-first midpoint splits."""
    lengths = [1.0]
    while len(lengths) < L:
        lengths.sort(reverse=True)
        w = lengths.pop(0)
        lengths += [w / 2, w / 2]
    return lengths
