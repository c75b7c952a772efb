"""Discrete convexity diagnostics."""

import numpy as np
import pytest

from entlab.convexity import (log_convexity_test, prekopa_closure_suite,
                              second_difference_test)
from entlab.measures import build_gamma_grid, potential_field


class Field:
    def __init__(self, values, grid):
        self.values = np.asarray(values, dtype=float)
        self.grid = grid


class TestSecondDifference:
    def test_parabola_convex(self, grid1d):
        rep = second_difference_test(Field(grid1d.nodes[:, 0] ** 2, grid1d))
        assert rep.verdict == "convex"
        assert abs(rep.worst_value - 2.0 * grid1d.spacing ** 2) < 1e-12

    def test_negative_parabola_concave(self, grid1d):
        rep = second_difference_test(Field(-grid1d.nodes[:, 0] ** 2, grid1d))
        assert rep.verdict == "concave"

    def test_sine_neither(self, grid1d):
        rep = second_difference_test(Field(np.sin(3 * grid1d.nodes[:, 0]), grid1d))
        assert rep.verdict == "neither"

    def test_affine_is_both(self, grid1d):
        rep = second_difference_test(Field(2.0 * grid1d.nodes[:, 0] + 1.0, grid1d))
        assert rep.is_convex and rep.is_concave

    def test_affine_invariance(self, grid1d):
        rng = np.random.default_rng(0)
        x = grid1d.nodes[:, 0]
        for _ in range(5):
            v = rng.normal(size=grid1d.size)
            r1 = second_difference_test(Field(v, grid1d))
            r2 = second_difference_test(Field(v + 3.1 * x - 0.4, grid1d))
            assert r1.verdict == r2.verdict
            # second differences of an affine addition are identical
            assert abs(r1.worst_value - r2.worst_value) < 1e-9

    def test_contiguous_inf_ok(self, grid1d):
        x = grid1d.nodes[:, 0]
        v = np.where(np.abs(x) <= 1.0, 0.0, np.inf)
        assert second_difference_test(Field(v, grid1d)).is_convex

    def test_disjoint_support_fails(self, grid1d):
        x = grid1d.nodes[:, 0]
        v = np.where((np.abs(x - 2) <= 0.5) | (np.abs(x + 2) <= 0.5), 0.0, np.inf)
        rep = second_difference_test(Field(v, grid1d))
        assert not rep.is_convex

    def test_neg_inf_breaks_convexity(self, grid1d):
        v = np.zeros(grid1d.size)
        v[150] = -np.inf
        assert not second_difference_test(Field(v, grid1d)).is_convex

    def test_boundary_band_excludes_edges(self, grid1d):
        v = grid1d.nodes[:, 0] ** 2
        v[0] -= 1.0  # a concave kink at the very edge
        assert not second_difference_test(Field(v, grid1d)).is_convex
        assert second_difference_test(Field(v, grid1d), boundary=2).is_convex

    def test_2d_diagonals_checked(self, grid2d):
        # x*y has zero axis second differences but fails on a diagonal
        xy = grid2d.nodes[:, 0] * grid2d.nodes[:, 1]
        rep = second_difference_test(Field(xy, grid2d))
        assert rep.verdict == "neither"

    def test_2d_quadratic(self, grid2d):
        v = (grid2d.nodes ** 2).sum(axis=1)
        assert second_difference_test(Field(v, grid2d)).is_convex

    def test_too_few_nodes(self):
        g = build_gamma_grid(1, 6.0, 16)

        class Tiny:
            shape = (2,)
        f = Field(np.zeros(2), Tiny())
        with pytest.raises(ValueError):
            second_difference_test(f)


class TestLogConvexity:
    def test_exp_square_log_convex(self, grid1d):
        f = np.exp(np.minimum(grid1d.nodes[:, 0] ** 2, 500.0))
        assert log_convexity_test(Field(f, grid1d)).is_convex

    def test_truncated_exponential_log_concave(self, grid1d):
        x = grid1d.nodes[:, 0]
        g = np.where(np.abs(x) <= 1.0, np.exp(-x), 0.0)
        assert log_convexity_test(Field(g, grid1d)).is_concave

    def test_negative_values_rejected(self, grid1d):
        with pytest.raises(ValueError):
            log_convexity_test(Field(-np.ones(grid1d.size), grid1d))


class TestClosureSuite:
    def test_small_1d_suite(self, kernel03):
        res = prekopa_closure_suite(kernel03, 10, seed=0)
        assert res["passed"], res["failures"]

    def test_failures_reproducible(self, kernel03):
        r1 = prekopa_closure_suite(kernel03, 5, seed=42)
        r2 = prekopa_closure_suite(kernel03, 5, seed=42)
        assert r1["worst_convex_margin"] == r2["worst_convex_margin"]
        assert r1["worst_concave_margin"] == r2["worst_concave_margin"]
