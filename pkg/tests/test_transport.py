"""Exact distances, Brenier maps and the experiment harnesses."""

import numpy as np
import pytest

from entlab.convex_order import AtomicMeasure
from entlab.measures import measure_from_potential, potential_field
from entlab.transport import (brenier_map_1d, gj_criterion_check,
                              monotonicity_experiment, pushforward_error,
                              regrid_nearest, w2_exact_1d, w2_exact_lp,
                              zero_noise_sweep)


def atoms(locs, weights=None):
    locs = np.asarray(locs, dtype=float)[:, None]
    if weights is None:
        weights = np.full(locs.shape[0], 1.0 / locs.shape[0])
    return AtomicMeasure(locs, np.asarray(weights, dtype=float))


@pytest.fixture(scope="module")
def gauss_pair(grid1d, zero_potential):
    """mu = grid Gaussian, nu = the N(0, 0.25)-type target."""
    mu = measure_from_potential(grid1d, zero_potential, +1)
    w = potential_field(grid1d, 1.5 * grid1d.nodes[:, 0] ** 2)
    nu = measure_from_potential(grid1d, w, -1)
    return mu, nu


class TestW2Exact1D:
    def test_deltas(self):
        assert w2_exact_1d(atoms([0.0]), atoms([2.5])) == 2.5

    def test_two_point_spread(self):
        d = w2_exact_1d(atoms([-1.0, 1.0]), atoms([-2.0, 2.0]))
        assert abs(d ** 2 - 1.0) < 1e-15

    def test_gaussian_scaling(self, gauss_pair):
        mu, nu = gauss_pair
        assert abs(w2_exact_1d(mu, nu) - 0.5) < 2e-3

    def test_triangle_inequality(self):
        for t in range(20):
            rng = np.random.default_rng([41, t])
            a = atoms(np.sort(rng.normal(size=5)), rng.dirichlet(np.ones(5)))
            b = atoms(np.sort(rng.normal(size=4)), rng.dirichlet(np.ones(4)))
            c = atoms(np.sort(rng.normal(size=6)), rng.dirichlet(np.ones(6)))
            assert w2_exact_1d(a, c) <= w2_exact_1d(a, b) + w2_exact_1d(b, c) + 1e-9


class TestW2ExactLP:
    def test_agreement_with_quantile_formula(self):
        for t in range(100):
            rng = np.random.default_rng([51, t])
            m, n = rng.integers(2, 9), rng.integers(2, 9)
            a = atoms(np.sort(rng.normal(size=m)), rng.dirichlet(np.ones(m)))
            b = atoms(np.sort(rng.normal(size=n)), rng.dirichlet(np.ones(n)))
            d_lp, _ = w2_exact_lp(a, b)
            assert abs(d_lp - w2_exact_1d(a, b)) < 1e-9

    def test_identity(self):
        a = atoms([-1.0, 0.0, 2.0], [0.3, 0.3, 0.4])
        d, pi = w2_exact_lp(a, a)
        assert d < 1e-9
        np.testing.assert_allclose(pi, np.diag(a.weights), atol=1e-9)

    def test_2d_corners(self):
        center = AtomicMeasure(np.zeros((1, 2)), np.ones(1))
        corners = AtomicMeasure(np.array([[1., 1], [1, -1], [-1, 1], [-1, -1]]),
                                np.full(4, 0.25))
        d, _ = w2_exact_lp(center, corners)
        assert abs(d ** 2 - 2.0) < 1e-9

    def test_size_limit(self):
        big = atoms(np.linspace(-1, 1, 150))
        with pytest.raises(ValueError, match="too large"):
            w2_exact_lp(big, big)


class TestBrenierMap:
    def test_identity_map(self, gauss_pair):
        mu, _ = gauss_pair
        bm = brenier_map_1d(mu, mu)
        assert abs(bm.lipschitz - 1.0) < 1e-9
        np.testing.assert_allclose(bm.values, bm.abscissae, atol=1e-12)

    def test_gaussian_contraction(self, gauss_pair, grid1d):
        mu, nu = gauss_pair
        bm = brenier_map_1d(mu, nu)
        assert abs(bm.lipschitz - 0.5) < 0.05
        assert pushforward_error(bm, nu) < 2 * grid1d.spacing

    def test_bimodal_expansion(self, grid1d, zero_potential):
        from entlab.potentials import evaluate_potential
        mu = measure_from_potential(grid1d, zero_potential, +1)
        w = potential_field(grid1d, evaluate_potential(
            "piecewise-linear(-6:8,-2:-8,0:0,2:-8,6:8)", grid1d.nodes))
        nu = measure_from_potential(grid1d, w, -1)
        assert brenier_map_1d(mu, nu).lipschitz > 1.0

    def test_atomic_target_flagged(self, gauss_pair):
        mu, _ = gauss_pair
        bm = brenier_map_1d(mu, atoms([-1.0, 1.0]))
        assert not bm.strictly_increasing


class TestRegrid:
    def test_mean_exact(self, grid1d):
        for t in range(20):
            rng = np.random.default_rng([61, t])
            k = rng.integers(1, 6)
            eta = atoms(rng.uniform(-4, 4, size=k), rng.dirichlet(np.ones(k)))
            p = regrid_nearest(eta, grid1d)
            assert abs(p @ grid1d.axis - eta.mean()[0]) < 1e-12
            assert abs(p.sum() - 1.0) < 1e-12
            assert (p >= 0).all()


class TestGJCriterion:
    def test_contractive_target(self, gauss_pair):
        mu, nu = gauss_pair
        rep = gj_criterion_check(mu, nu, n_trials=30, seed=1)
        assert rep.lipschitz_ok and rep.criterion_holds and rep.consistent
        assert rep.worst_gap >= -1e-8

    def test_trivial_domination_equality(self, gauss_pair):
        mu, nu = gauss_pair
        # eta = nu itself: the two distances coincide
        assert abs(w2_exact_1d(mu, nu) - w2_exact_1d(mu, nu)) == 0.0

    def test_bimodal_negative_control(self, grid1d, zero_potential):
        from entlab.potentials import evaluate_potential
        mu = measure_from_potential(grid1d, zero_potential, +1)
        w = potential_field(grid1d, evaluate_potential(
            "piecewise-linear(-6:8,-2:-8,0:0,2:-8,6:8)", grid1d.nodes))
        nu = measure_from_potential(grid1d, w, -1)
        rep = gj_criterion_check(mu, nu, n_trials=20, seed=2)
        assert not rep.lipschitz_ok
        assert not rep.criterion_holds  # a violating eta was found
        assert rep.consistent


class TestZeroNoiseSweep:
    def test_identical_marginals_zero_cost(self, grid1d, zero_potential):
        sweep = zero_noise_sweep(zero_potential, zero_potential, [0.5, 0.2])
        assert sweep.half_w2sq < 1e-12
        for row in sweep.rows:
            assert abs(row["eps_cost"]) < 1e-9

    def test_requires_decreasing_eps(self, zero_potential):
        with pytest.raises(ValueError, match="decreasing"):
            zero_noise_sweep(zero_potential, zero_potential, [0.1, 0.2])

    def test_solver_failure_recorded(self, grid1d, zero_potential):
        # 1e-4 is below the kernel bandwidth guard: recorded, not raised
        sweep = zero_noise_sweep(zero_potential, zero_potential, [0.5, 1e-4])
        assert len(sweep.failures) == 1
        assert "coarse" in sweep.failures[0]["error"]


class TestMonotonicityExperiment:
    def test_small_run(self, grid1d, zero_potential):
        w = potential_field(grid1d, 1.5 * grid1d.nodes[:, 0] ** 2)
        rep = monotonicity_experiment(zero_potential, w, [0.3], 5, seed=3)
        assert rep.passed
        assert len(rep.trials) == 5
        assert rep.worst_margin > 0  # strict shrink of the target raises the cost
        assert rep.worst_certificate >= -1e-9
