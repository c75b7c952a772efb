"""Discrete convexity / log-convexity / log-concavity diagnostics.

Convexity of a function sampled on a uniform grid is tested through second
differences along every grid line: axis directions in 1D/2D plus both
diagonals in 2D.  This is a necessary-condition surrogate for convexity,
cheap enough to run inside every structural check of the library.

``+inf`` values are allowed for convexity provided the finite region is
contiguous along every tested line (indicator-type potentials); ``-inf``
plays the symmetric role for concavity (logs of functions with compact
support).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvexityReport",
    "second_difference_test",
    "log_convexity_test",
    "prekopa_closure_suite",
]


@dataclass(frozen=True)
class ConvexityReport:
    """Outcome of a discrete second-difference test."""

    verdict: str  # "convex" | "concave" | "neither"
    is_convex: bool
    is_concave: bool
    worst_value: float  # most negative second difference seen by the convexity test
    worst_node: int  # flat index of the center node of the worst triple (-1 if none)
    tol: float  # effective (range-scaled) tolerance that was applied

    def __post_init__(self):
        expected = "convex" if self.is_convex else ("concave" if self.is_concave else "neither")
        if self.verdict != expected:
            raise ValueError("inconsistent convexity verdict")


def _grid_lines(shape):
    """Index lines along which second differences are tested.

    1D: the single axis.  2D: rows, columns and both diagonal directions.
    Yields arrays of flat indices, one per line.
    """
    if len(shape) == 1:
        yield np.arange(shape[0])
        return
    n0, n1 = shape
    flat = np.arange(n0 * n1).reshape(n0, n1)
    for i in range(n0):
        yield flat[i, :]
    for j in range(n1):
        yield flat[:, j]
    for off in range(-n0 + 1, n1):
        yield np.diagonal(flat, offset=off)
    fl = flat[:, ::-1]
    for off in range(-n0 + 1, n1):
        yield np.diagonal(fl, offset=off)


def _line_convex(v, line, interior_ok, tol):
    """Convexity along one grid line.

    Returns (ok, worst, worst_idx) with worst the smallest second
    difference over finite triples (or -inf on an infinity-pattern
    violation).  ``interior_ok`` marks center nodes allowed to contribute.
    """
    vals = v[line]
    if np.isneginf(vals).any():
        # a real-valued convex function cannot dip to -inf
        k = int(np.argmax(np.isneginf(vals)))
        return False, -np.inf, int(line[k])
    finite = np.isfinite(vals)
    if finite.any():
        idx = np.flatnonzero(finite)
        lo, hi = idx[0], idx[-1]
        if not finite[lo : hi + 1].all():
            # +inf strictly inside the finite region: midpoint violation
            k = lo + int(np.argmax(~finite[lo : hi + 1]))
            return False, -np.inf, int(line[k])
    ok, worst, worst_idx = True, np.inf, -1
    f = vals[np.isfinite(vals)]
    if f.size >= 3:
        d2 = f[:-2] - 2.0 * f[1:-1] + f[2:]
        centers = line[np.isfinite(vals)][1:-1]
        use = interior_ok[centers]
        if use.any():
            d2 = d2[use]
            centers = centers[use]
            k = int(np.argmin(d2))
            worst, worst_idx = float(d2[k]), int(centers[k])
            if worst < -tol:
                ok = False
    return ok, worst, worst_idx


def _convex_ok(values, shape, tol, boundary):
    interior_ok = np.ones(int(np.prod(shape)), dtype=bool)
    if boundary > 0:
        mask = np.ones(shape, dtype=bool)
        for ax in range(len(shape)):
            sl = [slice(None)] * len(shape)
            sl[ax] = slice(0, boundary)
            mask[tuple(sl)] = False
            sl[ax] = slice(shape[ax] - boundary, shape[ax])
            mask[tuple(sl)] = False
        interior_ok = mask.ravel()
    ok_all, worst_all, node_all = True, np.inf, -1
    for line in _grid_lines(shape):
        ok, worst, node = _line_convex(values, line, interior_ok, tol)
        if worst < worst_all:
            worst_all, node_all = worst, node
        ok_all = ok_all and ok
    return ok_all, worst_all, node_all


def second_difference_test(field, tol: float = 1e-7, boundary: int = 0) -> ConvexityReport:
    """Classify a grid-sampled function as convex, concave or neither.

    ``field`` is a PotentialField (or anything exposing ``values`` and
    ``grid.shape``).  The tolerance is scaled by the finite value range of
    the profile (logsumexp noise grows with the dynamic range).
    ``boundary`` nodes at each edge are excluded as second-difference
    centers (truncation bias concentrates there).
    """
    values = np.asarray(field.values, dtype=float)
    shape = tuple(field.grid.shape)
    if min(shape) < 3:
        raise ValueError("need at least 3 nodes per axis for a second-difference test")
    if np.isnan(values).any():
        raise ValueError("NaN values in convexity test")
    finite = values[np.isfinite(values)]
    vrange = float(finite.max() - finite.min()) if finite.size else 0.0
    tol_eff = tol * max(1.0, vrange)
    cvx, worst_c, node_c = _convex_ok(values, shape, tol_eff, boundary)
    ccv, worst_v, node_v = _convex_ok(-values, shape, tol_eff, boundary)
    if cvx:
        verdict, worst, node = "convex", worst_c, node_c
    elif ccv:
        verdict, worst, node = "concave", worst_c, node_c
    else:
        verdict, worst, node = "neither", worst_c, node_c
    return ConvexityReport(verdict, cvx, ccv, worst, node, tol_eff)


class _Field:
    __slots__ = ("values", "grid")

    def __init__(self, values, grid):
        self.values = values
        self.grid = grid


def log_convexity_test(field, tol: float = 1e-7, boundary: int = 0) -> ConvexityReport:
    """Test log-convexity / log-concavity of nonnegative values on a grid.

    Zeros are permitted (log of -inf) and are acceptable for log-concavity
    when the positive region is contiguous; a log-convex function sampled
    here must be strictly positive.
    """
    values = np.asarray(field.values, dtype=float)
    if np.isnan(values).any():
        raise ValueError("NaN values in log-convexity test")
    if (values < 0).any():
        raise ValueError("log-convexity test requires nonnegative values")
    with np.errstate(divide="ignore"):
        logv = np.log(values)
    return second_difference_test(_Field(logv, field.grid), tol=tol, boundary=boundary)


def _random_convex_pl(rng, nodes, n_pieces, scale, soften: float = 0.0):
    """Random convex piecewise-linear profile: max of random affine maps.

    ``soften`` > 0 replaces the max by a logsumexp at that temperature
    (smooth, still convex, uniformly within ``soften * log(n_pieces)`` of
    the max); used in 2D where quadrature error at the kinks would exceed
    the test tolerance.
    """
    d = nodes.shape[1]
    slopes = rng.uniform(-scale, scale, size=(n_pieces, d))
    offs = rng.uniform(-1.0, 1.0, size=n_pieces)
    vals = nodes @ slopes.T + offs
    if soften > 0.0:
        from scipy.special import logsumexp
        return soften * logsumexp(vals / soften, axis=1)
    return vals.max(axis=1)


def prekopa_closure_suite(kernel, n_cases: int, seed: int, tol: float = 1e-7,
                          boundary: int | None = None, scale: float = 2.0):
    """Closure of log-convex / log-concave profiles under the OU semigroup.

    Generates ``n_cases`` random convex piecewise-linear exponents ``c``
    (slopes within ``+-scale``), pushes ``e^c`` (log-convex) and ``e^{-c}``
    (log-concave) through the kernel and re-tests the output class.
    Returns a summary dict with the worst margins and the seeds of any
    failures.  The excluded boundary band defaults to the kernel's
    truncation-bias band.
    """
    from .ou import apply_semigroup, convexity_band

    if boundary is None:
        boundary = convexity_band(kernel, slope=scale)
    grid = kernel.grid
    results = {"n_cases": n_cases, "failures": [], "worst_convex_margin": np.inf,
               "worst_concave_margin": np.inf, "passed": True}
    soften = 0.0 if grid.dimension == 1 else 1.5 * grid.spacing
    for case in range(n_cases):
        case_rng = np.random.default_rng([seed, case])
        c = _random_convex_pl(case_rng, grid.nodes, int(case_rng.integers(2, 6)), scale,
                              soften=soften)
        for sign, key, want in ((+1.0, "worst_convex_margin", "is_convex"),
                                (-1.0, "worst_concave_margin", "is_concave")):
            out = apply_semigroup(kernel, sign * c)
            rep = second_difference_test(_Field(sign * out, grid), tol=tol, boundary=boundary)
            # sign*out is log P(e^{sign c}); convexity of that = membership of
            # P(e^{sign c}) in the class matching sign
            margin = rep.worst_value if sign > 0 else rep.worst_value
            ok = rep.is_convex
            if not ok:
                results["failures"].append({"case": case, "seed": [seed, case],
                                            "class": "log-convex" if sign > 0 else "log-concave",
                                            "worst": rep.worst_value, "node": rep.worst_node})
                results["passed"] = False
            results[key] = min(results[key], margin)
    return results
