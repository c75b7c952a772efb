"""Gaussian grids, density-defined measures and relative entropy.

The standard Gaussian in dimension 1 or 2 is discretized on a uniform grid
over ``[-L, L]^d`` with weights proportional to the Gaussian density.
Measures of the form ``e^V dgamma`` and ``e^{-W} dgamma`` are represented
as probability vectors on those nodes; potentials are shifted by an
additive constant at construction so the result is a probability measure.

``+inf`` potential values are represented exactly and propagate as zero
mass (indicator-type targets with compact support).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import convexity

__all__ = [
    "GridError",
    "GammaGrid",
    "DiscreteMeasure",
    "PotentialField",
    "build_gamma_grid",
    "potential_field",
    "measure_from_potential",
    "relative_entropy",
    "shannon_finiteness_report",
    "validate_inputs",
]

WEIGHT_SUM_TOL = 1e-12
MOMENT_TOL_MAX = 1e-3


class GridError(ValueError):
    """Grid construction or compatibility failure."""


@dataclass(frozen=True)
class GammaGrid:
    """Truncated quadrature of the standard Gaussian in dimension 1 or 2.

    ``nodes`` has shape (n, d) in lexicographic order, ``weights`` is a
    probability vector, ``moment_tol`` records the achieved error on the
    mean and covariance of the discretized Gaussian.
    """

    dimension: int
    nodes: np.ndarray
    weights: np.ndarray
    bound: float
    moment_tol: float
    shape: tuple
    spacing: float

    def __post_init__(self):
        w = self.weights
        if (w <= 0).any():
            raise GridError("grid weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise GridError("grid weights must sum to 1")
        if self.nodes.shape != (w.size, self.dimension):
            raise GridError("node array shape mismatch")

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def axis(self) -> np.ndarray:
        """Per-axis node coordinates (axes are identical by construction)."""
        n = self.shape[0]
        return self.nodes[: n, 0] if self.dimension == 1 else self.nodes[:: self.shape[1], 0]

    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability weights on a GammaGrid."""

    grid: GammaGrid
    weights: np.ndarray

    def __post_init__(self):
        p = self.weights
        if (p < 0).any():
            raise ValueError("measure weights must be nonnegative")
        if abs(p.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("measure weights must sum to 1")
        if p.size != self.grid.size:
            raise ValueError("weight vector does not match the grid")

    def mean(self) -> np.ndarray:
        return self.weights @ self.grid.nodes

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ ((self.grid.nodes - m) ** 2).sum(axis=1))


@dataclass(frozen=True)
class PotentialField:
    """Extended-real function values on grid nodes.

    ``shape_hint`` records which of {convex, concave, none} is asserted;
    an asserted shape is verified by the discrete convexity test at
    construction (see :func:`potential_field`).
    """

    grid: GammaGrid
    values: np.ndarray
    shape_hint: str = "none"

    def __post_init__(self):
        v = self.values
        if v.shape != (self.grid.size,):
            raise ValueError("potential values do not match the grid")
        if np.isnan(v).any():
            raise ValueError("potential values must not be NaN")
        if np.isneginf(v).any():
            raise ValueError("potential values must lie in R union {+inf}")

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


def potential_field(grid: GammaGrid, values, shape: str = "none") -> PotentialField:
    """Build a PotentialField, verifying an asserted convexity shape."""
    values = np.asarray(values, dtype=float)
    if np.isscalar(values) or values.ndim == 0:
        values = np.full(grid.size, float(values))
    f = PotentialField(grid, values, shape)
    if shape == "convex":
        rep = convexity.second_difference_test(f)
        if not rep.is_convex:
            raise ValueError(f"potential asserted convex fails the discrete test "
                             f"(worst {rep.worst_value:.3e} at node {rep.worst_node})")
    elif shape == "concave":
        rep = convexity.second_difference_test(f)
        if not rep.is_concave:
            raise ValueError("potential asserted concave fails the discrete test")
    elif shape != "none":
        raise ValueError(f"unknown shape hint {shape!r}")
    return f


def build_gamma_grid(d: int, L: float, N: int) -> GammaGrid:
    """Uniform-node discretization of the standard Gaussian on ``[-L, L]^d``.

    Weights are the Gaussian density at each node, renormalized to sum 1.
    Rejects parameters whose moment error (mean, covariance vs identity)
    exceeds 1e-3.
    """
    if d not in (1, 2):
        raise GridError("dimension must be 1 or 2")
    if L < 4:
        raise GridError("truncation bound must be at least 4")
    if N < 16:
        raise GridError("need at least 16 points per axis")
    axis = np.linspace(-L, L, N)
    axis = 0.5 * (axis - axis[::-1])  # enforce bitwise symmetry under x -> -x
    if d == 1:
        nodes = axis[:, None]
        shape = (N,)
    else:
        g0, g1 = np.meshgrid(axis, axis, indexing="ij")
        nodes = np.column_stack([g0.ravel(), g1.ravel()])
        shape = (N, N)
    logw = -0.5 * (nodes ** 2).sum(axis=1)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    mean = w @ nodes
    cov = (w[:, None] * nodes).T @ nodes - np.outer(mean, mean)
    err = max(float(np.abs(mean).max()), float(np.abs(cov - np.eye(d)).max()))
    if err > MOMENT_TOL_MAX:
        raise GridError(f"grid too coarse: moment error {err:.2e} exceeds {MOMENT_TOL_MAX}")
    return GammaGrid(d, nodes, w, float(L), err, shape, float(axis[1] - axis[0]))


def measure_from_potential(grid: GammaGrid, phi: PotentialField, sign: int) -> DiscreteMeasure:
    """Measure with density ``e^{sign * phi}`` with respect to the grid Gaussian.

    ``sign=+1`` builds ``e^V dgamma``, ``sign=-1`` builds ``e^{-W} dgamma``.
    The potential is implicitly shifted by a constant so the result is a
    probability vector; nodes where the exponent is ``-inf`` get zero mass.
    """
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    expo = sign * phi.values
    if np.isposinf(expo).any():
        raise ValueError("potential gives infinite density at some node")
    finite = np.isfinite(expo)
    if not finite.any():
        raise ValueError("empty support: potential is infinite everywhere")
    if finite.all() and (expo == 0.0).all():
        # identity case: the measure is the grid Gaussian itself, exactly
        return DiscreteMeasure(grid, grid.weights.copy())
    shifted = expo - expo[finite].max()
    p = np.where(finite, grid.weights * np.exp(np.where(finite, shifted, 0.0)), 0.0)
    p /= p.sum()
    return DiscreteMeasure(grid, p)


def relative_entropy(alpha: DiscreteMeasure | np.ndarray, beta: DiscreteMeasure | np.ndarray) -> float:
    """``H(alpha|beta) = sum alpha_i log(alpha_i / beta_i)``.

    Uses the conventions ``0 log(0/.) = 0`` and returns ``+inf`` when alpha
    charges a point outside the support of beta.
    """
    a = alpha.weights if isinstance(alpha, DiscreteMeasure) else np.asarray(alpha, dtype=float)
    b = beta.weights if isinstance(beta, DiscreteMeasure) else np.asarray(beta, dtype=float)
    if a.shape != b.shape:
        raise ValueError("measures must live on the same support index set")
    pos = a > 0
    if (b[pos] == 0).any():
        return np.inf
    av, bv = a[pos], b[pos]
    return float(np.sum(av * (np.log(av) - np.log(bv))))


def _normalized_exponent(phi: PotentialField, sign: int) -> np.ndarray:
    """Exponent of the normalized density ``e^{sign*phi}/Z`` w.r.t. gamma."""
    from scipy.special import logsumexp

    expo = sign * phi.values
    finite = np.isfinite(expo)
    logz = logsumexp(np.log(phi.grid.weights[finite]) + expo[finite])
    return expo - logz


@dataclass(frozen=True)
class FinitenessReport:
    entropy_mu: float
    entropy_nu: float
    both_finite: bool
    bound_ok: bool
    bound_violations: list = field(default_factory=list)


def shannon_finiteness_report(phi_V: PotentialField, phi_W: PotentialField) -> FinitenessReport:
    """Entropies of ``e^V dgamma`` and ``e^{-W} dgamma`` relative to gamma.

    Also asserts the pointwise bound ``[V]_+ <= |x|^2 / 2`` (for the
    normalized V) which controls Gaussian normalizability.
    """
    grid = phi_V.grid
    mu = measure_from_potential(grid, phi_V, +1)
    nu = measure_from_potential(phi_W.grid, phi_W, -1)
    h_mu = relative_entropy(mu.weights, grid.weights)
    h_nu = relative_entropy(nu.weights, phi_W.grid.weights)
    vn = _normalized_exponent(phi_V, +1)
    half_sq = 0.5 * (grid.nodes ** 2).sum(axis=1)
    bad = np.flatnonzero(np.maximum(vn, 0.0) > half_sq + 1e-12)
    return FinitenessReport(
        entropy_mu=h_mu,
        entropy_nu=h_nu,
        both_finite=bool(np.isfinite(h_mu) and np.isfinite(h_nu)),
        bound_ok=bad.size == 0,
        bound_violations=[{"node": int(i), "message": "V not gamma-normalizable"} for i in bad],
    )


def validate_inputs(phi_V: PotentialField, phi_W: PotentialField,
                    waive_compactness: bool = False) -> list:
    """Check the standing hypotheses on the potential pair (V, W).

    Returns a list of violation dicts (empty when all checks pass):
    (a) V finite, convex, bounded below on the grid; (b) W convex with
    values in R union {+inf}; (c) the sublevel set {W < -min V} lies
    strictly inside the truncation box; (d) the target has compact support
    (W = +inf outside a bounded set) unless explicitly waived.
    """
    violations = []
    grid = phi_V.grid
    v = phi_V.values
    w = phi_W.values
    if not np.isfinite(v).all():
        violations.append({"check": "a", "node": int(np.flatnonzero(~np.isfinite(v))[0]),
                           "message": "V must be finite on the grid"})
    else:
        rep = convexity.second_difference_test(phi_V)
        if not rep.is_convex:
            violations.append({"check": "a", "node": rep.worst_node,
                               "message": f"V fails the discrete convexity test ({rep.worst_value:.3e})"})
    rep_w = convexity.second_difference_test(phi_W)
    if not rep_w.is_convex:
        violations.append({"check": "b", "node": rep_w.worst_node,
                           "message": f"W fails the discrete convexity test ({rep_w.worst_value:.3e})"})
    if np.isfinite(v).all():
        m = float(v.min())
        low = np.flatnonzero(w < -m)
        if low.size:
            # nodes with W < -m must sit strictly inside the box; a sublevel
            # set reaching the boundary layer is read as unbounded
            edge = np.abs(phi_W.grid.nodes[low]).max(axis=1) >= grid.bound - phi_W.grid.spacing / 2
            if edge.any():
                violations.append({"check": "c", "node": int(low[np.flatnonzero(edge)[0]]),
                                   "message": "sublevel set {W < -inf V} reaches the truncation boundary"})
    if not waive_compactness and np.isfinite(w).all():
        violations.append({"check": "d", "node": -1,
                           "message": "support of the target is not compact "
                                      "(W finite everywhere); pass waive_compactness=True to accept"})
    return violations
