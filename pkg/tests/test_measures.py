"""Grids, density-defined measures and relative entropy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entlab.measures import (GridError, build_gamma_grid, measure_from_potential,
                             potential_field, relative_entropy,
                             shannon_finiteness_report, validate_inputs)


class TestGammaGrid:
    def test_default_1d_moments(self, grid1d):
        assert abs(grid1d.weights.sum() - 1.0) < 1e-12
        mean = grid1d.weights @ grid1d.nodes[:, 0]
        var = grid1d.weights @ grid1d.nodes[:, 0] ** 2
        assert abs(mean) < 1e-6
        assert abs(var - 1.0) < 1e-3

    def test_mean_exactly_zero_by_symmetry(self):
        # the axis is symmetrized, so the mean cancels to rounding error
        for N in (17, 64, 301):
            g = build_gamma_grid(1, 5.0, N)
            assert abs(g.weights @ g.nodes[:, 0]) < 1e-15

    def test_2d_covariance(self):
        g = build_gamma_grid(2, 5.0, 61)
        mean = g.weights @ g.nodes
        cov = (g.weights[:, None] * g.nodes).T @ g.nodes - np.outer(mean, mean)
        assert np.abs(cov - np.eye(2)).max() < 1e-3

    def test_rejects_bad_parameters(self):
        with pytest.raises(GridError):
            build_gamma_grid(3, 6.0, 100)
        with pytest.raises(GridError):
            build_gamma_grid(1, 3.0, 100)
        with pytest.raises(GridError):
            build_gamma_grid(1, 6.0, 8)

    def test_rejects_too_coarse(self):
        # 16 points out to +-20 cannot resolve the Gaussian moments
        with pytest.raises(GridError, match="moment error"):
            build_gamma_grid(1, 20.0, 16)

    def test_nodes_distinct_and_sorted(self, grid1d):
        x = grid1d.nodes[:, 0]
        assert (np.diff(x) > 0).all()


class TestMeasureFromPotential:
    def test_zero_potential_is_grid_weights_exactly(self, grid1d, zero_potential):
        m = measure_from_potential(grid1d, zero_potential, +1)
        assert np.array_equal(m.weights, grid1d.weights)

    def test_indicator_truncation(self, grid1d, ball_indicator):
        nu = measure_from_potential(grid1d, ball_indicator, -1)
        inside = np.abs(grid1d.nodes[:, 0]) <= 1.0
        assert nu.weights[~inside].sum() == 0.0
        expected = grid1d.weights * inside
        np.testing.assert_allclose(nu.weights, expected / expected.sum(), rtol=1e-12)

    def test_quadratic_density_ratio(self, grid1d):
        # e^{-x^2/4} gamma: check the density ratio at a few nodes
        phi = potential_field(grid1d, grid1d.nodes[:, 0] ** 2 / 4.0)
        nu = measure_from_potential(grid1d, phi, -1)
        x = grid1d.nodes[:, 0]
        ratio = nu.weights / grid1d.weights
        for i in [50, 100, 150, 200, 250]:
            expected = np.exp(-x[i] ** 2 / 4.0) / (grid1d.weights @ np.exp(-x ** 2 / 4.0))
            assert abs(ratio[i] - expected) < 1e-12 * max(1.0, expected)

    def test_empty_support_rejected(self, grid1d):
        phi = potential_field(grid1d, np.full(grid1d.size, np.inf))
        with pytest.raises(ValueError, match="empty support"):
            measure_from_potential(grid1d, phi, -1)


class TestRelativeEntropy:
    def test_identity_is_zero(self, grid1d):
        assert relative_entropy(grid1d.weights, grid1d.weights) == 0.0

    def test_gaussian_kl(self, grid1d):
        # KL(N(0, 0.25) || N(0, 1)) = (sigma^2 - 1 - log sigma^2) / 2
        phi = potential_field(grid1d, 1.5 * grid1d.nodes[:, 0] ** 2)
        nu = measure_from_potential(grid1d, phi, -1)
        expected = 0.5 * (0.25 - 1.0 - np.log(0.25))
        assert abs(relative_entropy(nu.weights, grid1d.weights) - expected) < 1e-3

    def test_single_atom(self, grid1d):
        a = np.zeros(grid1d.size)
        a[150] = 1.0
        assert abs(relative_entropy(a, grid1d.weights)
                   + np.log(grid1d.weights[150])) < 1e-12

    def test_support_mismatch_is_infinite(self):
        assert relative_entropy(np.array([0.5, 0.5]), np.array([1.0, 0.0])) == np.inf

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_nonnegativity(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.dirichlet(np.ones(12))
        b = rng.dirichlet(np.ones(12))
        assert relative_entropy(a, b) >= -1e-14

    @given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.25, 0.5, 0.75]))
    @settings(max_examples=25, deadline=None)
    def test_joint_convexity(self, seed, t):
        rng = np.random.default_rng(seed)
        a1, a2 = rng.dirichlet(np.ones(10)), rng.dirichlet(np.ones(10))
        b1, b2 = rng.dirichlet(np.ones(10)), rng.dirichlet(np.ones(10))
        lhs = relative_entropy(t * a1 + (1 - t) * a2, t * b1 + (1 - t) * b2)
        rhs = t * relative_entropy(a1, b1) + (1 - t) * relative_entropy(a2, b2)
        assert lhs <= rhs + 1e-12


class TestShannonFiniteness:
    def test_zero_potentials(self, grid1d, zero_potential):
        rep = shannon_finiteness_report(zero_potential, zero_potential)
        assert rep.entropy_mu == 0.0 and rep.entropy_nu == 0.0
        assert rep.both_finite and rep.bound_ok

    def test_quarter_quadratic_bound(self, grid1d, zero_potential):
        phi = potential_field(grid1d, grid1d.nodes[:, 0] ** 2 / 4.0)
        rep = shannon_finiteness_report(phi, zero_potential)
        assert rep.bound_ok and rep.both_finite

    def test_indicator_entropy_value(self, grid1d, zero_potential, ball_indicator):
        from scipy.stats import norm
        rep = shannon_finiteness_report(zero_potential, ball_indicator)
        expected = -np.log(2 * norm.cdf(1.0) - 1.0)
        # midpoint-rule truncation at the ball boundary dominates the error
        assert abs(rep.entropy_nu - expected) < 2e-2


class TestValidateInputs:
    def test_indicator_pair_ok(self, grid1d, zero_potential, ball_indicator):
        assert validate_inputs(zero_potential, ball_indicator) == []

    def test_affine_w_unbounded_sublevel(self, grid1d, zero_potential):
        w = potential_field(grid1d, -grid1d.nodes[:, 0])
        bad = validate_inputs(zero_potential, w)
        assert any(v["check"] == "c" for v in bad)

    def test_compactness_waiver(self, grid1d, zero_potential):
        w = potential_field(grid1d, 0.5 * grid1d.nodes[:, 0] ** 2)
        bad = validate_inputs(zero_potential, w)
        assert any(v["check"] == "d" for v in bad)
        assert validate_inputs(zero_potential, w, waive_compactness=True) == []

    def test_nonconvex_v_flagged(self, grid1d, ball_indicator):
        v = potential_field(grid1d, np.sin(3.0 * grid1d.nodes[:, 0]))
        bad = validate_inputs(v, ball_indicator)
        assert any(v_["check"] == "a" for v_ in bad)
