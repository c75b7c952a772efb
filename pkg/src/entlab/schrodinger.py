"""Entropic transport cost, dual fixed-point map and the two solvers.

The dual object is ``h = log f`` for the product-form optimal coupling
``pi_ij = f_i g_j R_ij``.  The fixed-point map is

    Phi(h) = V - log P(e^{-W} / P(e^h)),

iterated either by the clamped monotone scheme ``h_{n+1} = [Phi(h_n)]_+ ^ n``
(the verification path: every iterate is provably below the next) or by
standard log-domain Sinkhorn alternation (the production path).  Both
converge to the same unique coupling; the clamped scheme additionally
exposes the convexity structure of the limit.

All computation is in the log domain; potentials are normalized at entry
so that ``e^V dgamma`` and ``e^{-W} dgamma`` are probability vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .measures import DiscreteMeasure, PotentialField, relative_entropy
from .ou import OUKernel, apply_semigroup

__all__ = [
    "PhiResult",
    "SchrodingerSolution",
    "DegenerateFixedPoint",
    "phi_map",
    "gauge_integral",
    "fortet_solve",
    "sinkhorn_solve",
    "entropic_cost",
    "duality_certificate",
    "solution_to_csv",
    "convex_envelope",
]

COUPLING_SIZE_LIMIT = 4_000_000


class DegenerateFixedPoint(RuntimeError):
    """The iteration hit the infinite branch (P(e^h) identically infinite)."""


@dataclass(frozen=True)
class PhiResult:
    """Value of the dual map, with the degenerate branch flagged rather
    than raised (it mirrors a contradiction branch of the existence
    argument, not a programming error)."""

    values: np.ndarray
    degenerate: bool


def _as_values(h):
    if isinstance(h, PotentialField):
        return h.values
    return np.asarray(h, dtype=float)


def _normalize_potentials(V, W, grid):
    """Shift V and W so the associated measures are probability vectors.

    Returns (Vn, Wn, mu, nu) with mu_i = w_i e^{Vn_i}, nu_j = w_j e^{-Wn_j}.
    V may contain -inf (restricted support), W may contain +inf.
    """
    v = _as_values(V)
    w = _as_values(W)
    logw = np.log(grid.weights)
    vfin = v > -np.inf
    if not vfin.any():
        raise ValueError("empty support for the source measure")
    vz = logsumexp(logw[vfin] + v[vfin])
    vn = v - vz
    wfin = w < np.inf
    if not wfin.any():
        raise ValueError("empty support for the target measure")
    wz = logsumexp(logw[wfin] - w[wfin])
    wn = w + wz
    mu = np.where(vfin, np.exp(logw + np.where(vfin, vn, 0.0)), 0.0)
    nu = np.where(wfin, np.exp(logw - np.where(wfin, wn, 0.0)), 0.0)
    mu /= mu.sum()
    nu /= nu.sum()
    return vn, wn, mu, nu


def phi_map(h, V, W, kernel: OUKernel) -> PhiResult:
    """Dual map ``Phi(h) = V - log P(e^{-W} / P(e^h))`` in the log domain.

    Monotone in ``h`` and convexity-preserving.  The degenerate branch
    (``P(e^h)`` infinite everywhere) is reported via the result flag.
    """
    hv = _as_values(h)
    v = _as_values(V)
    w = _as_values(W)
    if np.isposinf(hv).all():
        return PhiResult(np.full(hv.size, np.inf), True)
    log_pe_h = apply_semigroup(kernel, hv)
    if np.isposinf(log_pe_h).all():
        return PhiResult(np.full(hv.size, np.inf), True)
    with np.errstate(invalid="ignore"):
        inner = -w - log_pe_h
    inner = np.where(np.isnan(inner), -np.inf, inner)  # inf - inf: zero mass wins
    outer = apply_semigroup(kernel, inner)
    return PhiResult(v - outer, False)


def gauge_integral(h, V, W, kernel: OUKernel, mu=None) -> float:
    """``sum_i mu_i exp(h_i - Phi(h)_i)``; equals 1 for bounded ``h``.

    The identity is exact in the continuum for any bounded measurable h;
    discretely it holds to the detailed-balance residual of the kernel.
    """
    vn, wn, mu_w, _ = _normalize_potentials(V, W, kernel.grid)
    if mu is None:
        mu_vec = mu_w
    else:
        mu_vec = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, dtype=float)
    hv = _as_values(h)
    phi = phi_map(hv, vn, wn, kernel)
    if phi.degenerate:
        return 0.0
    pos = mu_vec > 0
    expo = hv[pos] - phi.values[pos]
    if np.isneginf(expo).all():
        return 0.0
    return float(np.exp(logsumexp(np.log(mu_vec[pos]) + expo)))


@dataclass(frozen=True)
class SchrodingerSolution:
    """Converged dual pair, coupling and diagnostics of one solve."""

    epsilon: float
    grid: object
    h: np.ndarray  # log f, gauge-fixed to min 0 on supp(mu)
    log_g: np.ndarray
    coupling: np.ndarray
    cost: float
    cost_direct: float  # H(pi | R) recomputed from the coupling
    marginal_error: float  # TV error of the worse marginal
    fixed_point_residual: float  # sup |h - Phi(h)| on supp(mu)
    iterations: int
    scheme: str
    converged: bool
    mu: np.ndarray
    nu: np.ndarray
    kernel: OUKernel = None
    convexification_changed: bool = False

    @property
    def residuals(self):
        return {"marginal_tv": self.marginal_error,
                "fixed_point_sup": self.fixed_point_residual}


def _build_solution(kernel, vn, wn, mu, nu, h, iterations, scheme, converged,
                    convexification_changed=False):
    with np.errstate(invalid="ignore"):
        log_g = -wn - apply_semigroup(kernel, h)
    log_g = np.where(np.isnan(log_g), -np.inf, log_g)
    logr = kernel.log_joint()
    with np.errstate(invalid="ignore"):
        logpi = h[:, None] + log_g[None, :] + logr
    logpi = np.where(np.isnan(logpi), -np.inf, logpi)
    pi = np.exp(logpi)
    row = pi.sum(axis=1)
    col = pi.sum(axis=0)
    marg_err = max(0.5 * np.abs(row - mu).sum(), 0.5 * np.abs(col - nu).sum())
    cost = _dual_cost(mu, nu, h, log_g)
    pos = pi > 0
    cost_direct = float(np.sum(pi[pos] * (logpi[pos] - logr[pos])))
    phi = phi_map(h, vn, wn, kernel)
    supp = mu > 0
    if phi.degenerate:
        fp_res = np.inf
    else:
        fp_res = float(np.abs(h[supp] - phi.values[supp]).max())
    return SchrodingerSolution(
        epsilon=kernel.epsilon, grid=kernel.grid, h=h, log_g=log_g, coupling=pi,
        cost=cost, cost_direct=cost_direct, marginal_error=float(marg_err),
        fixed_point_residual=fp_res, iterations=iterations, scheme=scheme,
        converged=converged, mu=mu, nu=nu, kernel=kernel,
        convexification_changed=convexification_changed)


def _dual_cost(mu, nu, h, log_g):
    """``sum mu h + sum nu log g`` with the 0 * (-inf) = 0 convention."""
    a = float(np.sum(mu[mu > 0] * h[mu > 0]))
    pos = nu > 0
    b = float(np.sum(nu[pos] * log_g[pos])) if np.isfinite(log_g[pos]).all() \
        else -np.inf
    return a + b


def convex_envelope(grid, values: np.ndarray) -> np.ndarray:
    """Greatest convex minorant of node values (lower convex hull).

    1D: monotone-chain lower hull over the axis.  2D: lower facets of the
    lifted point cloud, evaluated as the max of their supporting planes.
    """
    v = np.asarray(values, dtype=float)
    if np.ptp(v) < 1e-14:
        return v.copy()
    if grid.dimension == 1:
        x = grid.nodes[:, 0]
        hull_i = []
        for i in range(x.size):
            while len(hull_i) >= 2:
                i0, i1 = hull_i[-2], hull_i[-1]
                # pop while the middle point lies on or above the chord
                if (v[i1] - v[i0]) * (x[i] - x[i1]) >= (v[i] - v[i1]) * (x[i1] - x[i0]):
                    hull_i.pop()
                else:
                    break
            hull_i.append(i)
        hx, hv = x[hull_i], v[hull_i]
        return np.interp(x, hx, hv)
    from scipy.spatial import ConvexHull
    pts = np.column_stack([grid.nodes, v])
    hull = ConvexHull(pts)
    env = np.full(v.size, -np.inf)
    for eq in hull.equations:
        *n_xy, n_z, off = eq
        if n_z >= -1e-12:
            continue  # not a lower facet
        plane = -(grid.nodes @ np.asarray(n_xy) + off) / n_z
        env = np.maximum(env, plane)
    return np.minimum(env, v)


def _tail_below(delta, delta_prev, tol):
    """Whether the geometric tail ``delta * rho / (1 - rho)`` is below tol.

    The monotone iteration converges geometrically with some ratio
    ``rho < 1``; the remaining distance to the fixed point is then about
    ``delta * rho / (1 - rho)``, which dominates the raw increment when
    rho is close to 1.  The ratio is estimated from consecutive sup-norm
    increments and capped so a single noisy pair of deltas cannot stall
    the stop forever.
    """
    if delta < 1e-2 * np.finfo(float).eps:
        return True
    if not np.isfinite(delta_prev) or delta_prev <= 0.0:
        return False
    # the cap keeps a rounding-level plateau (ratio 1 at ~1e-16) from
    # stalling the stop; genuine slow contractions sit well below it
    rho = min(delta / delta_prev, 1.0 - 1e-4)
    return delta * rho / (1.0 - rho) < tol


def fortet_solve(V, W, kernel: OUKernel, tol: float = 1e-10,
                 max_iter: int = 100_000, convexify: bool = True) -> SchrodingerSolution:
    """Clamped monotone dual iteration ``h_{n+1} = [Phi(h_n)]_+ ^ n``.

    Starts from ``h_0 = 0`` and runs until the sup-norm dual increment
    drops below ``tol``; then (by default) re-runs the iteration
    ``k_{n+1} = max(Phi(k_n), k_0)`` seeded with the convex envelope of the
    limit, which certifies a convex representative of the fixed point.
    Iterates are checked nondecreasing and bounded by ``n - 1`` at step n.
    """
    vn, wn, mu, nu = _normalize_potentials(V, W, kernel.grid)
    supp = mu > 0
    h = np.where(supp, 0.0, -np.inf)
    converged = False
    it = 0
    delta_prev = np.inf
    for n in range(max_iter):
        phi = phi_map(h, vn, wn, kernel)
        if phi.degenerate:
            raise DegenerateFixedPoint("infinite fixed point")
        h_next = np.where(supp, np.minimum(np.maximum(phi.values, 0.0), float(n)), -np.inf)
        if (h_next[supp] < h[supp] - 1e-12).any():
            raise AssertionError("clamped iterates failed to be nondecreasing")
        if h_next[supp].max() > n + 1e-12:
            raise AssertionError("clamped iterate escaped its bound")
        delta = float(np.abs(h_next[supp] - h[supp]).max())
        h = h_next
        it = n + 1
        # the clamp level must clear the current sup before increments mean
        # anything; the increment then bounds the residual only through the
        # contraction ratio, so stop on the geometric tail estimate
        if h[supp].max() < n - 0.5 and _tail_below(delta, delta_prev, tol):
            converged = True
            break
        delta_prev = delta
    changed = False
    if converged and convexify and supp.all():
        k0 = convex_envelope(kernel.grid, h)
        k0 = np.maximum(k0, 0.0)
        k = k0.copy()
        delta_prev = np.inf
        for n in range(max_iter):
            phi = phi_map(k, vn, wn, kernel)
            if phi.degenerate:
                raise DegenerateFixedPoint("infinite fixed point")
            k_next = np.maximum(phi.values, k0)
            delta = float(np.abs(k_next - k).max())
            k = k_next
            it += 1
            if _tail_below(delta, delta_prev, tol):
                break
            delta_prev = delta
        changed = bool(np.abs(k - h).max() > 10 * tol)
        h = k
    return _build_solution(kernel, vn, wn, mu, nu, h, it, "fortet", converged,
                           convexification_changed=changed)


def sinkhorn_solve(mu, nu, kernel: OUKernel, tol: float = 1e-10,
                   max_iter: int = 100_000) -> SchrodingerSolution:
    """Standard alternating log-domain updates matching each marginal.

    Stops on the TV error of the unmatched marginal; aborts (flagged) if
    that error grows three sweeps in a row.  The dual pair is gauge-fixed
    afterwards so that ``min h = 0`` on the support of ``mu``.
    """
    grid = kernel.grid
    mu_w = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, dtype=float)
    nu_w = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, dtype=float)
    logw = np.log(grid.weights)
    with np.errstate(divide="ignore"):
        vn = np.log(mu_w) - logw  # -inf off supp(mu)
        wn = -(np.log(nu_w) - logw)  # +inf off supp(nu)
    supp_mu = mu_w > 0
    supp_nu = nu_w > 0
    log_g = np.where(supp_nu, -wn, -np.inf)
    log_f = np.full(grid.size, -np.inf)
    converged = False
    err_prev, rising = np.inf, 0
    it = 0
    for it in range(1, max_iter + 1):
        log_pg = apply_semigroup(kernel, log_g)
        log_f = np.where(supp_mu, vn - log_pg, -np.inf)
        log_pf = apply_semigroup(kernel, log_f)
        log_g = np.where(supp_nu, -wn - log_pf, -np.inf)
        # after the g-update the nu marginal is exact; measure the mu one
        row = np.where(supp_mu,
                       np.exp(logw + log_f + apply_semigroup(kernel, log_g)), 0.0)
        err = 0.5 * float(np.abs(row - mu_w).sum())
        if err < tol:
            converged = True
            break
        # genuine growth only: flat plateaus jitter at rounding level
        rising = rising + 1 if err > err_prev * (1.0 + 1e-9) else 0
        err_prev = err
        if rising >= 3:
            break  # oscillation detected
    shift = float(log_f[supp_mu].min())
    h = np.where(supp_mu, log_f - shift, -np.inf)
    log_g = log_g + shift
    vfull = np.where(supp_mu, vn, -np.inf)
    wfull = np.where(supp_nu, wn, np.inf)
    return _build_solution(kernel, vfull, wfull, mu_w, nu_w, h, it, "sinkhorn", converged)


def entropic_cost(solution: SchrodingerSolution) -> float:
    """Entropic transport cost of a converged solution."""
    return solution.cost


def duality_certificate(solution: SchrodingerSolution, pi_alt: np.ndarray,
                        marginal_tol: float = 1e-8) -> float:
    """Optimality margin ``H(pi_alt|R) - [sum mu h + sum eta log g]``.

    ``pi_alt`` must have first marginal ``mu``; its second marginal
    ``eta`` is arbitrary.  The margin is nonnegative (within 1e-9) by the
    entropy duality inequality; for ``eta = nu`` it equals
    ``H(pi_alt|R) - T(mu, nu)`` and certifies optimality.
    """
    pi_alt = np.asarray(pi_alt, dtype=float)
    mu = solution.mu
    if 0.5 * np.abs(pi_alt.sum(axis=1) - mu).sum() > marginal_tol:
        raise ValueError("alternative coupling does not have first marginal mu")
    eta = pi_alt.sum(axis=0)
    dual = _dual_cost(mu, eta, solution.h, solution.log_g)
    ent = _entropy_vs_reference(pi_alt, solution.kernel)
    return ent - dual


def _entropy_vs_reference(pi, kernel: OUKernel) -> float:
    logr = kernel.log_joint()
    pos = pi > 0
    return float(np.sum(pi[pos] * (np.log(pi[pos]) - logr[pos])))


def solution_to_csv(solution: SchrodingerSolution, out_dir,
                    write_coupling: bool = False) -> list:
    """Write the documented CSV bundle; returns the created paths.

    ``solution.csv`` holds nodes, h, log g and the marginal residuals;
    ``coupling.csv`` (optional) the dense coupling matrix, guarded by the
    size limit of 4e6 entries.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    sol_path = out_dir / "solution.csv"
    d = solution.grid.dimension
    cols = [f"x{k+1}" for k in range(d)]
    with open(sol_path, "w") as fh:
        fh.write(",".join(cols + ["h", "log_g", "mu", "nu"]) + "\n")
        for i in range(solution.grid.size):
            xs = [repr(float(c)) for c in solution.grid.nodes[i]]
            fh.write(",".join(xs + [repr(float(solution.h[i])),
                                    repr(float(solution.log_g[i])),
                                    repr(float(solution.mu[i])),
                                    repr(float(solution.nu[i]))]) + "\n")
    paths.append(sol_path)
    meta_path = out_dir / "solution_meta.csv"
    with open(meta_path, "w") as fh:
        fh.write("epsilon,cost,cost_direct,marginal_tv,fixed_point_sup,iterations,scheme,converged\n")
        fh.write(",".join([repr(float(solution.epsilon)), repr(float(solution.cost)),
                           repr(float(solution.cost_direct)),
                           repr(float(solution.marginal_error)),
                           repr(float(solution.fixed_point_residual)),
                           str(solution.iterations), solution.scheme,
                           str(solution.converged).lower()]) + "\n")
    paths.append(meta_path)
    if write_coupling:
        n = solution.coupling.size
        if n > COUPLING_SIZE_LIMIT:
            raise ValueError(f"coupling too large to serialize ({n} entries)")
        c_path = out_dir / "coupling.csv"
        np.savetxt(c_path, solution.coupling, delimiter=",")
        paths.append(c_path)
    return paths
