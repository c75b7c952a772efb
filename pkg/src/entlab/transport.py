"""Exact Wasserstein distances, 1D Brenier maps, the contraction-criterion
harness and the zero-noise limit of the entropic cost.

Distances are exact at desk scale: the 1D quantile formula is evaluated
piecewise over merged CDF breakpoints (exact for atomic inputs), and the
general case solves the transportation LP.  The criterion harness tests
the equivalence "monotone rearrangement 1-Lipschitz  <=>  W2(mu, .) is
minimized at nu over the convex-order cone below nu", reporting both
sides so that a disagreement is a hard failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex_order import (AtomicMeasure, as_atomic, convex_order_check_1d,
                           dirac_collapse, interval_partition, theta_smooth)
from .measures import DiscreteMeasure, GammaGrid, measure_from_potential, \
    shannon_finiteness_report

__all__ = [
    "BrenierMap1D",
    "w2_exact_1d",
    "w2_exact_lp",
    "brenier_map_1d",
    "pushforward_error",
    "gj_criterion_check",
    "zero_noise_sweep",
    "monotonicity_experiment",
    "regrid_nearest",
    "sweep_to_csv",
    "trials_to_csv",
]

LP_SIZE_LIMIT = 10_000


def _sorted_atoms_1d(measure):
    a = as_atomic(measure)
    if a.dimension != 1:
        raise ValueError("1D measure required")
    x = a.locations[:, 0]
    order = np.argsort(x, kind="stable")
    return x[order], a.weights[order]


def w2_exact_1d(alpha, beta) -> float:
    """Quadratic Wasserstein distance in 1D via the quantile formula.

    ``W2^2 = int_0^1 (F_a^{-1}(u) - F_b^{-1}(u))^2 du`` evaluated exactly:
    both quantile functions are constant between merged CDF breakpoints,
    so the integral is a finite sum.
    """
    xa, wa = _sorted_atoms_1d(alpha)
    xb, wb = _sorted_atoms_1d(beta)
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    us = np.union1d(ca, cb)
    us = np.minimum(us, 1.0)
    prev = 0.0
    total = 0.0
    for u in us:
        du = u - prev
        if du <= 0:
            continue
        qa = xa[min(np.searchsorted(ca, prev, side="right"), xa.size - 1)]
        qb = xb[min(np.searchsorted(cb, prev, side="right"), xb.size - 1)]
        total += du * (qa - qb) ** 2
        prev = u
    return float(np.sqrt(total))


def w2_exact_lp(alpha, beta):
    """Quadratic Wasserstein distance via the transportation LP.

    Returns ``(distance, coupling)``; exact up to LP tolerance, any
    dimension.  Limited to ``m * n <= 10^4`` atom pairs.
    """
    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix

    a, b = as_atomic(alpha), as_atomic(beta)
    if a.dimension != b.dimension:
        raise ValueError("dimension mismatch")
    m, n = a.weights.size, b.weights.size
    if m * n > LP_SIZE_LIMIT:
        raise ValueError(f"instance too large ({m}x{n} atoms)")
    cost = ((a.locations[:, None, :] - b.locations[None, :, :]) ** 2).sum(axis=2)
    idx = np.arange(m * n).reshape(m, n)
    rows, cols, vals = [], [], []
    rhs = []
    r = 0
    for i in range(m):
        rows.extend([r] * n)
        cols.extend(idx[i])
        vals.extend([1.0] * n)
        rhs.append(a.weights[i])
        r += 1
    for j in range(n - 1):  # last column sum is implied
        rows.extend([r] * m)
        cols.extend(idx[:, j])
        vals.extend([1.0] * m)
        rhs.append(b.weights[j])
        r += 1
    A = csr_matrix((vals, (rows, cols)), shape=(r, m * n))
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.asarray(rhs),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    coupling = res.x.reshape(m, n)
    return float(np.sqrt(max(res.fun, 0.0))), coupling


def _quantile_interp(measure):
    """Quantile function: CDF-interpolated for grid measures (treated as
    densities), right-continuous step inverse for atomic measures."""
    x, w = _sorted_atoms_1d(measure)
    c = np.cumsum(w)
    if isinstance(measure, DiscreteMeasure):
        mid = c - 0.5 * w  # midpoint CDF, linear interpolation between nodes

        def q(u):
            return np.interp(np.clip(u, mid[0], mid[-1]), mid, x)
    else:
        def q(u):
            return x[np.minimum(np.searchsorted(c, u, side="left"), x.size - 1)]
    return q, x, w


@dataclass(frozen=True)
class BrenierMap1D:
    """Monotone rearrangement sampled on quantile levels.

    ``values[k] = F_nu^{-1}(F_mu^{-1 applied level}) = T(abscissae[k])``;
    the Lipschitz estimate is the max slope over consecutive samples at
    levels inside [0.01, 0.99] (extreme quantiles are truncation-polluted)
    where the source density clears a floor.
    """

    levels: np.ndarray
    abscissae: np.ndarray
    values: np.ndarray
    lipschitz: float
    strictly_increasing: bool

    def __post_init__(self):
        if (np.diff(self.values) < -1e-12).any():
            raise ValueError("monotone rearrangement must be non-decreasing")


def brenier_map_1d(mu, nu, n_samples: int = 999,
                   density_floor: float = 1e-6) -> BrenierMap1D:
    """1D Brenier map ``T = F_nu^{-1} compose F_mu`` with Lipschitz estimate."""
    q_mu, x_mu, w_mu = _quantile_interp(mu)
    q_nu, _, _ = _quantile_interp(nu)
    u = (np.arange(n_samples) + 0.5) / n_samples
    xs = np.asarray(q_mu(u))
    ts = np.asarray(q_nu(u))
    # mu density (w.r.t. Lebesgue) at the sample abscissae
    if isinstance(mu, DiscreteMeasure):
        dens = np.interp(xs, x_mu, w_mu / mu.grid.spacing)
    else:
        dens = np.full(n_samples, np.inf)  # atomic mu: no floor applies
    core = (u >= 0.01) & (u <= 0.99)
    dx = np.diff(xs)
    dt = np.diff(ts)
    usable = core[:-1] & core[1:] & (dx > 1e-12) \
        & (dens[:-1] >= density_floor) & (dens[1:] >= density_floor)
    lip = float((dt[usable] / dx[usable]).max()) if usable.any() else np.nan
    strict = bool((dt > 1e-12).all())
    return BrenierMap1D(u, xs, ts, lip, strict)


def pushforward_error(bmap: BrenierMap1D, nu) -> float:
    """``W2(T_# mu, nu)`` with ``T_# mu`` the empirical law of the map samples."""
    n = bmap.values.size
    push = AtomicMeasure(bmap.values[:, None], np.full(n, 1.0 / n))
    return w2_exact_1d(push, nu)


@dataclass(frozen=True)
class GJReport:
    """Both sides of the contraction-criterion equivalence on one target."""

    w2_target: float  # W2(mu, nu)
    lipschitz: float
    lipschitz_ok: bool  # side (i): monotone map is 1-Lipschitz
    criterion_holds: bool  # side (ii): no dominated eta beats nu
    consistent: bool  # the two sides agree
    n_effective: int
    violations: list = field(default_factory=list)
    discarded: list = field(default_factory=list)
    trials: list = field(default_factory=list)
    worst_gap: float = np.inf  # min over trials of W2(mu, eta) - W2(mu, nu)


def _random_collapse(nu_atoms: AtomicMeasure, rng) -> AtomicMeasure:
    x = nu_atoms.locations[:, 0]
    n_breaks = int(rng.integers(1, 6))
    breaks = rng.uniform(x.min(), x.max(), size=n_breaks)
    return dirac_collapse(nu_atoms, interval_partition(nu_atoms, breaks))


def gj_criterion_check(mu, nu, n_trials: int = 100, seed: int = 0,
                       tol: float = 1e-8, lip_tol: float = 1e-6,
                       smooth_every: int = 5) -> GJReport:
    """Test the minimality of ``W2(mu, .)`` at ``nu`` over ``eta <=_c nu``.

    Trial 0 is always the single-cell collapse (delta at the mean, the
    most aggressive candidate); the rest are random interval collapses,
    every ``smooth_every``-th one additionally theta-smoothed.  Candidates
    failing the convex-order check against nu are discarded and reported.
    The Lipschitz verdict of the monotone rearrangement is computed
    independently; the report records whether the two sides agree.
    """
    nu_atoms = as_atomic(nu)
    if nu_atoms.dimension != 1:
        raise ValueError("criterion harness is 1D only")
    w2_target = w2_exact_1d(mu, nu)
    bmap = brenier_map_1d(mu, nu)
    lipschitz_ok = bmap.lipschitz <= 1.0 + lip_tol
    violations, discarded, trials = [], [], []
    worst_gap = np.inf
    n_eff = 0
    for t in range(n_trials):
        if t == 0:
            eta = dirac_collapse(nu_atoms, [np.arange(nu_atoms.weights.size)])
            kind = "delta-at-mean"
        else:
            rng = np.random.default_rng([seed, t])
            eta = _random_collapse(nu_atoms, rng)
            kind = "collapse"
            if smooth_every and t % smooth_every == smooth_every - 1:
                eta, _ = theta_smooth(eta, 0.05)
                kind = "collapse+smooth"
        check = convex_order_check_1d(eta, nu_atoms, tol=1e-9)
        if not check.dominated:
            discarded.append({"trial": t, "kind": kind,
                              "margin": check.worst_margin})
            continue
        w2_eta = w2_exact_1d(mu, eta)
        gap = w2_eta - w2_target
        worst_gap = min(worst_gap, gap)
        n_eff += 1
        row = {"trial": t, "kind": kind, "w2_eta": w2_eta, "gap": gap}
        trials.append(row)
        if gap < -tol:
            violations.append(row)
    criterion_holds = not violations
    return GJReport(w2_target, bmap.lipschitz, bool(lipschitz_ok),
                    criterion_holds, bool(lipschitz_ok == criterion_holds),
                    n_eff, violations, discarded, trials, float(worst_gap))


@dataclass(frozen=True)
class ZeroNoiseSweep:
    """Comparison of ``eps * entropic cost`` against ``W2^2 / 2``."""

    half_w2sq: float
    rows: list  # dicts: epsilon, eps_cost, half_w2sq, gap, iterations, residual
    failures: list
    gap_monotone: bool  # non-increasing within 10% slack
    final_gap: float


def zero_noise_sweep(phi_V, phi_W, eps_list, tol: float = 1e-9,
                     monotone_slack: float = 0.10) -> ZeroNoiseSweep:
    """Solve the entropic problem along a decreasing ``eps`` list and
    compare ``eps * cost`` with the exact squared distance.

    Requires finite relative entropies of both marginals (the limit
    statement needs them) and a strictly decreasing eps list.  Per-eps
    solver failures are recorded and the sweep continues.
    """
    from .ou import build_ou_kernel
    from .schrodinger import sinkhorn_solve

    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be strictly decreasing")
    fin = shannon_finiteness_report(phi_V, phi_W)
    if not fin.both_finite:
        raise ValueError("zero-noise limit requires finite-entropy marginals")
    grid = phi_V.grid
    mu = measure_from_potential(grid, phi_V, +1)
    nu = measure_from_potential(grid, phi_W, -1)
    if grid.dimension == 1:
        w2 = w2_exact_1d(mu, nu)
    else:
        w2, _ = w2_exact_lp(mu, nu)
    half = 0.5 * w2 ** 2
    rows, failures = [], []
    for eps in eps_list:
        try:
            kernel = build_ou_kernel(grid, eps)
            sol = sinkhorn_solve(mu, nu, kernel, tol=tol)
            if not sol.converged:
                raise RuntimeError("solver did not converge")
        except Exception as exc:  # per-eps failure: record and continue
            failures.append({"epsilon": eps, "error": str(exc)})
            continue
        eps_cost = eps * sol.cost
        rows.append({"epsilon": eps, "eps_cost": eps_cost, "half_w2sq": half,
                     "gap": abs(eps_cost - half), "iterations": sol.iterations,
                     "residual": sol.marginal_error})
    gaps = [r["gap"] for r in rows]
    monotone = all(b <= a * (1.0 + monotone_slack) for a, b in zip(gaps, gaps[1:]))
    final = gaps[-1] if gaps else np.inf
    return ZeroNoiseSweep(half, rows, failures, bool(monotone), float(final))


def regrid_nearest(eta: AtomicMeasure, grid: GammaGrid) -> np.ndarray:
    """Project atoms to nearest grid nodes, then correct the mean (1D).

    Nearest-node projection shifts the barycenter by up to half a spacing;
    the correction moves the minimal mass between the two nodes bracketing
    the barycenter so the mean is restored exactly (the 1D convex-order
    condition requires exact mean equality).
    """
    if grid.dimension != 1 or eta.dimension != 1:
        raise ValueError("re-gridding is 1D only")
    axis = grid.axis
    x = eta.locations[:, 0]
    idx = np.clip(np.rint((x - axis[0]) / grid.spacing).astype(int), 0, axis.size - 1)
    p = np.bincount(idx, weights=eta.weights, minlength=grid.size)
    target = float(eta.weights @ x)
    step = grid.spacing
    delta = target - float(p @ axis)
    # preferred correction: the two nodes bracketing the barycenter
    j = int(np.clip(np.searchsorted(axis, target), 1, axis.size - 1))
    q = delta / step  # signed mass to move from node j-1 to node j
    if (q >= 0 and q <= p[j - 1]) or (q < 0 and -q <= p[j]):
        p[j - 1] -= q
        p[j] += q
    else:
        # not enough mass at the bracket; drain the heaviest movable node
        # one spacing at a time until the mean is restored
        for _ in range(10 * grid.size):
            delta = target - float(p @ axis)
            if abs(delta) <= 1e-14 * max(1.0, abs(target)):
                break
            if delta > 0:
                cand = np.flatnonzero(p[:-1] > 0)
                i = cand[np.argmax(p[cand])]
                q = min(p[i], delta / step)
                p[i] -= q
                p[i + 1] += q
            else:
                cand = np.flatnonzero(p[1:] > 0) + 1
                i = cand[np.argmax(p[cand])]
                q = min(p[i], -delta / step)
                p[i] -= q
                p[i - 1] += q
        else:
            raise ValueError("mean correction did not converge")
    return p / p.sum()


@dataclass(frozen=True)
class MonotonicityReport:
    """Entropic-cost monotonicity under convex-order shrinking of the target."""

    n_trials: int
    violations: list
    discarded: list
    trials: list  # dicts: trial, epsilon, cost_eta, cost_nu, margin, certificate
    worst_margin: float
    worst_certificate: float
    passed: bool


def monotonicity_experiment(phi_V, phi_W, epsilons, n_trials: int, seed: int,
                            solver_tol: float = 1e-10,
                            tol: float = 1e-8) -> MonotonicityReport:
    """Check ``cost(mu, eta) >= cost(mu, nu)`` for collapsed targets.

    Per trial: a random interval collapse of nu, re-gridded by nearest-node
    projection with mean correction, re-verified ``<=_c nu`` (discarded and
    reported otherwise; generation continues until ``n_trials`` candidates
    survive the re-check), then solved at each eps.  Every kept trial also
    carries a duality certificate: the eta-optimal coupling evaluated in
    the nu-problem's dual must show a nonnegative margin.
    """
    from .measures import validate_inputs
    from .ou import build_ou_kernel
    from .schrodinger import duality_certificate, sinkhorn_solve

    bad = validate_inputs(phi_V, phi_W, waive_compactness=True)
    if bad:
        raise ValueError(f"potentials fail validation: {bad}")
    grid = phi_V.grid
    if grid.dimension != 1:
        raise ValueError("experiment is 1D only")
    mu = measure_from_potential(grid, phi_V, +1)
    nu = measure_from_potential(grid, phi_W, -1)
    nu_atoms = as_atomic(nu)
    base = {}
    for eps in epsilons:
        kernel = build_ou_kernel(grid, float(eps))
        base[eps] = (kernel, sinkhorn_solve(mu, nu, kernel, tol=solver_tol))
    violations, discarded, trials = [], [], []
    worst_margin, worst_cert = np.inf, np.inf
    kept = 0
    for t in range(20 * n_trials):
        if kept >= n_trials:
            break
        rng = np.random.default_rng([seed, t])
        eta_atoms = _random_collapse(nu_atoms, rng)
        try:
            eta_w = regrid_nearest(eta_atoms, grid)
        except ValueError as exc:
            discarded.append({"trial": t, "reason": str(exc)})
            continue
        pos = eta_w > 0
        eta_on_grid = AtomicMeasure(grid.nodes[pos], eta_w[pos])
        check = convex_order_check_1d(eta_on_grid, nu_atoms, tol=1e-9)
        if not check.dominated:
            discarded.append({"trial": t, "reason": "order check failed",
                              "margin": check.worst_margin})
            continue
        kept += 1
        for eps in epsilons:
            kernel, sol_nu = base[eps]
            sol_eta = sinkhorn_solve(mu, eta_w, kernel, tol=solver_tol)
            margin = sol_eta.cost - sol_nu.cost
            cert = duality_certificate(sol_nu, sol_eta.coupling)
            row = {"trial": t, "epsilon": float(eps), "cost_eta": sol_eta.cost,
                   "cost_nu": sol_nu.cost, "margin": margin, "certificate": cert}
            trials.append(row)
            worst_margin = min(worst_margin, margin)
            worst_cert = min(worst_cert, cert)
            if margin < -(tol + solver_tol):
                violations.append(row)
    return MonotonicityReport(n_trials, violations, discarded, trials,
                              float(worst_margin), float(worst_cert),
                              passed=not violations)


def sweep_to_csv(sweep: ZeroNoiseSweep, path) -> None:
    """Sweep table with the documented column set."""
    cols = ["epsilon", "eps_cost", "half_w2sq", "gap", "iterations", "residual"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in sweep.rows:
            fh.write(",".join(repr(float(row[c])) if c != "iterations"
                              else str(row[c]) for c in cols) + "\n")


def trials_to_csv(rows: list, path) -> None:
    """Per-trial CSV for the criterion / monotonicity reports."""
    if not rows:
        with open(path, "w") as fh:
            fh.write("\n")
        return
    cols = list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            out = []
            for c in cols:
                v = row[c]
                out.append(repr(float(v)) if isinstance(v, float) else str(v))
            fh.write(",".join(out) + "\n")
