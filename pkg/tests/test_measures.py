import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from oracles import w2_gauss_quad
from strategies import measures
from wmot.errors import DomainError, ValidationError
from wmot.measures import (DiscreteMeasure, ParametricLaw, check_convex_order, format_measure_csv,
                           mean, potential, quantile, quantize, read_measure_csv, w2_to_gaussian,
                           wasserstein_1d)

D = DiscreteMeasure


class TestConstruction:
    def test_sorts_and_merges(self):
        m = D([2.0, 0.0, 2.0], [0.25, 0.5, 0.25])
        assert m.atoms.tolist() == [0.0, 2.0]
        assert m.weights.tolist() == [0.5, 0.5]

    def test_near_duplicates_merge(self):
        m = D([1.0, 1.0 + 1e-14], [0.5, 0.5])
        assert len(m) == 1

    def test_zero_weights_dropped(self):
        assert len(D([0, 1, 2], [0.5, 0.0, 0.5])) == 2

    @pytest.mark.parametrize("atoms,weights", [([0, 1], [0.5, 0.6]), ([0, 1], [1.2, -0.2]),
                                               ([0, np.nan], [0.5, 0.5]), ([], [])])
    def test_rejects_invalid(self, atoms, weights):
        with pytest.raises(ValidationError):
            D(atoms, weights)

    def test_immutable(self):
        m = D.dirac(1.0)
        with pytest.raises(AttributeError):
            m.atoms = np.array([2.0])

    def test_cumulative_ends_at_one(self):
        m = D.uniform(np.arange(7.0))
        assert m.cumulative[-1] == 1.0
        assert np.all(np.diff(m.cumulative) > 0)


class TestMean:
    def test_examples(self):
        assert mean(D.dirac(3.0)) == 3.0
        assert mean(D([-1, 1], [0.5, 0.5])) == 0.0
        assert mean(D([0, 4], [0.25, 0.75])) == 3.0

    @given(measures())
    def test_merge_preserves_mean(self, m):
        doubled = D(np.concatenate([m.atoms, m.atoms]), np.concatenate([m.weights, m.weights]) / 2)
        assert doubled == m
        assert abs(mean(doubled) - mean(m)) <= 1e-12


class TestQuantile:
    def test_examples(self):
        m = D([0, 1], [0.5, 0.5])
        assert quantile(m, 0.5) == 0.0
        assert quantile(m, 0.75) == 1.0
        assert quantile(m, 1.0) == 1.0

    @pytest.mark.parametrize("u", [0.0, -0.1, 1.0000001])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            quantile(D.dirac(0.0), u)

    @given(measures(), st.floats(1e-6, 1.0))
    def test_generalized_inverse(self, m, u):
        q = quantile(m, u)
        assert m.cdf(q) >= u - 1e-12
        below = m.atoms[m.atoms < q]
        if below.size:
            assert m.cdf(below[-1]) < u + 1e-12


class TestWasserstein:
    def test_examples(self):
        assert wasserstein_1d(D.dirac(0), D.dirac(1)) == 1.0
        m = D([0, 1, 3], [0.2, 0.3, 0.5])
        assert wasserstein_1d(m, m, 2) == 0.0
        assert wasserstein_1d(D([0, 2], [0.5, 0.5]), D.dirac(1), 2) == pytest.approx(1.0, abs=1e-15)

    def test_order_below_one(self):
        with pytest.raises(DomainError):
            wasserstein_1d(D.dirac(0), D.dirac(1), 0.5)

    @given(measures(), measures(), measures(), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
    def test_metric(self, a, b, c, r):
        ab = wasserstein_1d(a, b, r)
        assert ab == pytest.approx(wasserstein_1d(b, a, r), abs=1e-12)
        assert ab <= wasserstein_1d(a, c, r) + wasserstein_1d(c, b, r) + 1e-12
        assert wasserstein_1d(a, a, r) <= 1e-12

    @given(measures(max_size=4), measures(max_size=4))
    def test_matches_lp(self, a, b):
        from oracles import brute_force_ot
        cost = np.abs(a.atoms[:, None] - b.atoms[None, :])
        ref = brute_force_ot(a.atoms, a.weights, b.atoms, b.weights, cost)
        assert wasserstein_1d(a, b) == pytest.approx(ref, abs=1e-9)

    @given(measures(), measures())
    def test_merge_invariance(self, a, b):
        split = D(np.concatenate([a.atoms, a.atoms]), np.concatenate([0.3 * a.weights, 0.7 * a.weights]))
        assert abs(wasserstein_1d(split, b, 1) - wasserstein_1d(a, b, 1)) <= 1e-12
        # compare W_2^2: the square root amplifies rounding near zero distance
        assert abs(wasserstein_1d(split, b, 2) ** 2 - wasserstein_1d(a, b, 2) ** 2) <= 1e-12


class TestConvexOrder:
    def test_examples(self):
        assert check_convex_order(D.dirac(0), D([-1, 1], [0.5, 0.5]))
        res = check_convex_order(D([-1, 1], [0.5, 0.5]), D.dirac(0))
        assert not res and res.witness == 0.0
        res = check_convex_order(D.dirac(0), D.dirac(1))
        assert not res and abs(res.mean_gap) == pytest.approx(1)

    def test_potential(self):
        m = D([-1, 1], [0.5, 0.5])
        assert potential(m, 0.0) == 1.0
        assert potential(m, 3.0) == 3.0

    @given(measures(max_size=5), st.integers(0, 2 ** 32 - 1))
    def test_transitive_on_mean_preserving_spreads(self, m, seed):
        rng = np.random.default_rng(seed)

        def spread(p):
            # split every atom into two atoms with the same barycenter
            d = rng.uniform(0.1, 1.0, len(p))
            t = rng.uniform(0.2, 0.8, len(p))
            lo, hi = p.atoms - d * (1 - t) / t, p.atoms + d
            return D(np.concatenate([lo, hi]), np.concatenate([p.weights * t, p.weights * (1 - t)]),
                     mass_tol=1e-9)

        nu = spread(m)
        eta = spread(nu)
        assert check_convex_order(m, nu) and check_convex_order(nu, eta)
        assert check_convex_order(m, eta)


class TestParametric:
    def test_validation(self):
        with pytest.raises(ValidationError):
            ParametricLaw.normal(0, -1)
        with pytest.raises(ValidationError):
            ParametricLaw.uniform(1, 0)
        with pytest.raises(ValidationError):
            ParametricLaw("cauchy", {})

    def test_uniform_examples(self):
        u = ParametricLaw.uniform()
        assert quantize(u, 1) == D.dirac(0.5)
        q = quantize(u, 2)
        assert q.atoms.tolist() == [0.25, 0.75] and q.weights.tolist() == [0.5, 0.5]
        assert quantize(u, 2, scheme="quantile").atoms.tolist() == [0.25, 0.75]

    @pytest.mark.parametrize("law", [ParametricLaw.normal(0.3, 1.7), ParametricLaw.lognormal(1.0, 0.4),
                                     ParametricLaw.uniform(-1, 2),
                                     ParametricLaw("quantile-table", {"levels": [0, 0.5, 1],
                                                                      "values": [0, 1, 3]}),
                                     ParametricLaw("two-point", {"atoms": [-1, 2], "weights": [0.6, 0.4]})])
    @pytest.mark.parametrize("n", [1, 3, 16, 100])
    def test_block_means_match_quadrature(self, law, n):
        exact = quantize(law, n)
        quad = quantize(law, n, method="quad")
        np.testing.assert_allclose(exact.atoms, quad.atoms, rtol=1e-8, atol=1e-9)
        assert mean(exact) == pytest.approx(law.mean(), abs=1e-10)

    def test_random_u_reproducible(self):
        law = ParametricLaw.normal()
        a = quantize(law, 8, "quantile", U=None, seed=3)
        b = quantize(law, 8, "quantile", U=None, seed=3)
        assert a == b

    @given(st.floats(0.05, 0.6), st.floats(0.01, 0.5), st.integers(1, 300))
    def test_paired_block_means_keep_convex_order(self, s, ds, n):
        mu = quantize(ParametricLaw.lognormal(1.0, s), n)
        nu = quantize(ParametricLaw.lognormal(1.0, s + ds), n)
        assert check_convex_order(mu, nu, tol=1e-10)

    def test_csv_round_trip(self, tmp_path):
        m = D([0.1, 1 / 3, 2.5], [0.2, 0.3, 0.5])
        p = tmp_path / "m.csv"
        p.write_text(format_measure_csv(m))
        assert read_measure_csv(p) == m

    def test_csv_rejects_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("x,w\n0,1\n")
        with pytest.raises(ValidationError):
            read_measure_csv(p)


class TestGaussianDistance:
    def test_examples(self):
        assert w2_to_gaussian(D.dirac(0.0)) == pytest.approx(1.0, abs=1e-15)
        assert w2_to_gaussian(D.dirac(1.5)) == pytest.approx(1 + 1.5 ** 2, abs=1e-14)
        a = 0.8
        assert w2_to_gaussian(D([-a, a], [0.5, 0.5])) == pytest.approx(1 + a * a - 2 * a * math.sqrt(2 / math.pi),
                                                                       abs=1e-14)

    @given(measures(max_size=6), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
    def test_matches_quadrature(self, p, rho):
        assert w2_to_gaussian(p, rho) == pytest.approx(w2_gauss_quad(p, rho), rel=1e-9, abs=1e-10)

    def test_monte_carlo(self):
        p = D([-1.0, 0.2, 2.0], [0.3, 0.5, 0.2])
        rng = np.random.default_rng(7)
        z = rng.standard_normal(10 ** 6)
        samples = (quantile(p, np.clip(norm.cdf(z), 1e-300, 1.0)) - z) ** 2
        se = samples.std(ddof=1) / math.sqrt(z.size)
        assert abs(samples.mean() - w2_to_gaussian(p)) <= 3 * se

    @given(measures())
    def test_merge_invariance(self, p):
        split = D(np.concatenate([p.atoms, p.atoms]), np.concatenate([p.weights, p.weights]) / 2)
        assert w2_to_gaussian(split) == pytest.approx(w2_to_gaussian(p), abs=1e-12)
