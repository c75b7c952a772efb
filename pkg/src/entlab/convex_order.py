"""Convex-order machinery: checks, dominated-measure generators, smoothing.

``eta <=_c nu`` means ``int f d eta <= int f d nu`` for every convex f.
In 1D this reduces to equal means plus dominance of the integrated call
functions ``t -> int (x - t)_+``, checked exactly at atom abscissae.  In
general dimension it is equivalent (Strassen) to feasibility of a
martingale coupling, decided here by a phase-1 simplex.

``dirac_collapse`` coarsens a measure by conditional expectation over a
partition, which always produces a convex-order minorant (Jensen);
``theta_smooth`` is the trigonometric smoothing with a ball-truncated
Gaussian that preserves compact support, the order, and finite entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteMeasure, GammaGrid

__all__ = [
    "AtomicMeasure",
    "convex_order_check_1d",
    "convex_order_check_lp",
    "dirac_collapse",
    "theta_smooth",
    "atomic_from_csv",
    "atomic_to_csv",
]

LP_SIZE_LIMIT = 10_000


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many weighted atoms, not bound to any grid."""

    locations: np.ndarray  # (m, d)
    weights: np.ndarray  # (m,)

    def __post_init__(self):
        if self.locations.ndim != 2:
            raise ValueError("locations must be an (m, d) array")
        if not np.isfinite(self.locations).all():
            raise ValueError("atom locations must be finite")
        w = self.weights
        if (w <= 0).any():
            raise ValueError("atom weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("atom weights must sum to 1")

    @property
    def dimension(self) -> int:
        return self.locations.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.locations

    def variance(self) -> float:
        m = self.mean()
        return float(self.weights @ ((self.locations - m) ** 2).sum(axis=1))


def as_atomic(measure) -> AtomicMeasure:
    """View a grid measure (or pass through an atomic one) as atoms."""
    if isinstance(measure, AtomicMeasure):
        return measure
    if isinstance(measure, DiscreteMeasure):
        pos = measure.weights > 0
        return AtomicMeasure(measure.grid.nodes[pos], measure.weights[pos])
    raise TypeError(f"cannot interpret {type(measure).__name__} as an atomic measure")


@dataclass(frozen=True)
class OrderVerdict:
    dominated: bool
    worst_margin: float  # most negative call-function margin (1d) or residual
    witness: float | None = None  # threshold t with the worst margin (1d path)
    coupling: np.ndarray | None = None  # feasible martingale coupling (lp path)


def _calls(x, w, ts):
    """Integrated call function int (x - t)_+ d(measure) at thresholds ts."""
    return np.maximum(x[None, :] - ts[:, None], 0.0) @ w


def convex_order_check_1d(eta, nu, tol: float = 1e-9) -> OrderVerdict:
    """Decide ``eta <=_c nu`` in 1D by the call-function criterion.

    Exact for atomic measures: the margin ``int (x-t)_+ dnu - int (x-t)_+
    deta`` is piecewise linear in t with kinks only at atoms, so checking
    the merged atom set suffices.  Means must agree within ``tol``.
    """
    e, n = as_atomic(eta), as_atomic(nu)
    if e.dimension != 1 or n.dimension != 1:
        raise ValueError("the call-function criterion is 1D only")
    xe, we = e.locations[:, 0], e.weights
    xn, wn = n.locations[:, 0], n.weights
    mean_gap = float(we @ xe - wn @ xn)
    ts = np.union1d(xe, xn)
    margins = _calls(xn, wn, ts) - _calls(xe, we, ts)
    k = int(np.argmin(margins))
    ok = abs(mean_gap) <= tol and margins[k] >= -tol
    return OrderVerdict(bool(ok), float(margins[k]), float(ts[k]))


def _phase1_simplex(A, b, tol):
    """Phase-1 simplex with Bland's rule for ``{x >= 0 : Ax = b}``.

    Returns a feasible x or None.  Dense tableau; intended for the small
    martingale-coupling instances of this module (termination guaranteed
    by Bland's anti-cycling rule).
    """
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign
    # tableau columns: n structural + m artificial + rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)  # phase-1 objective row (minimize artificials)
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))
    while True:
        enter = -1
        for j in range(n + m):  # Bland: smallest eligible index
            if T[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            break
        ratios = [(T[i, -1] / T[i, enter], basis[i], i)
                  for i in range(m) if T[i, enter] > tol]
        if not ratios:
            return None  # unbounded phase-1: cannot happen with b >= 0
        _, _, leave = min(ratios, key=lambda r: (r[0], r[1]))
        piv = T[leave, enter]
        T[leave] /= piv
        for i in range(m + 1):
            if i != leave:
                T[i] -= T[i, enter] * T[leave]
        basis[leave] = enter
    if -T[m, -1] > tol * max(1.0, abs(b).sum()):
        return None  # artificials cannot be driven to zero: infeasible
    x = np.zeros(n)
    for i, j in enumerate(basis):
        if j < n:
            x[j] = T[i, -1]
    return np.maximum(x, 0.0)


def convex_order_check_lp(eta, nu, tol: float = 1e-9) -> OrderVerdict:
    """Decide ``eta <=_c nu`` via feasibility of a martingale coupling.

    Solves ``{pi >= 0, row sums = eta, column sums = nu,
    sum_j pi_ij y_j = eta_i x_i}`` with a phase-1 simplex; on success the
    feasible coupling is returned with the verdict.
    """
    e, n = as_atomic(eta), as_atomic(nu)
    if e.dimension != n.dimension:
        raise ValueError("dimension mismatch")
    m_e, m_n, d = e.weights.size, n.weights.size, e.dimension
    if m_e * m_n > LP_SIZE_LIMIT:
        raise ValueError(f"instance too large ({m_e}x{m_n} atoms)")
    nvar = m_e * m_n
    rows = []
    rhs = []
    idx = np.arange(nvar).reshape(m_e, m_n)
    for i in range(m_e):  # row sums
        r = np.zeros(nvar)
        r[idx[i]] = 1.0
        rows.append(r)
        rhs.append(e.weights[i])
    for j in range(m_n - 1):  # column sums (last one is redundant)
        r = np.zeros(nvar)
        r[idx[:, j]] = 1.0
        rows.append(r)
        rhs.append(n.weights[j])
    for i in range(m_e):  # martingale condition, one block per atom of eta
        for k in range(d):
            r = np.zeros(nvar)
            r[idx[i]] = n.locations[:, k]
            rows.append(r)
            rhs.append(e.weights[i] * e.locations[i, k])
    A = np.asarray(rows)
    b = np.asarray(rhs)
    scale = max(1.0, np.abs(n.locations).max())
    x = _phase1_simplex(A / scale, b / scale, tol)
    if x is None:
        return OrderVerdict(False, -np.inf)
    pi = x.reshape(m_e, m_n)
    resid = float(np.abs(A @ x - b).max())
    return OrderVerdict(True, -resid, None, pi)


def dirac_collapse(measure, partition) -> AtomicMeasure:
    """Concentrate each partition cell of a measure at its barycenter.

    ``partition`` is a sequence of atom-index arrays covering the support;
    empty cells are skipped.  The output is dominated by the input in the
    convex order by construction (conditional Jensen), and cell means are
    preserved exactly.
    """
    a = as_atomic(measure)
    locs, ws = [], []
    for cell in partition:
        cell = np.asarray(cell, dtype=int)
        if cell.size == 0:
            continue
        w = a.weights[cell].sum()
        if w <= 0:
            continue
        locs.append(a.weights[cell] @ a.locations[cell] / w)
        ws.append(w)
    if not locs:
        raise ValueError("partition covers no mass")
    w = np.asarray(ws)
    return AtomicMeasure(np.asarray(locs), w / w.sum())


def interval_partition(measure, breaks) -> list:
    """1D helper: atom-index cells split at the given break abscissae."""
    a = as_atomic(measure)
    x = a.locations[:, 0]
    edges = np.concatenate([[-np.inf], np.sort(np.asarray(breaks, dtype=float)), [np.inf]])
    return [np.flatnonzero((x > lo) & (x <= hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def _ball_gaussian_atoms(d: int, n_axis: int):
    """Unit-ball-truncated standard Gaussian, fixed deterministic rule."""
    axis = np.linspace(-1.0, 1.0, n_axis + 2)[1:-1]  # open ball, no boundary atoms
    if d == 1:
        pts = axis[:, None]
    else:
        g0, g1 = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
        pts = pts[(pts ** 2).sum(axis=1) < 1.0]
    w = np.exp(-0.5 * (pts ** 2).sum(axis=1))
    return pts, w / w.sum()


@dataclass(frozen=True)
class SmoothingReport:
    support_radius: float
    density_bound: float  # proved upper bound for the smoothed density
    density_max: float  # binned estimate of the achieved maximum
    density_bound_ok: bool
    entropy_finite: bool
    relative_log_density: np.ndarray | None = None  # for log-concavity-vs-gamma checks
    bins: np.ndarray | None = None


def theta_smooth(rho, theta: float, n_ball: int = 64):
    """Law of ``cos(theta) Y + sin(theta) Z`` with Z ball-truncated Gaussian.

    Returns the smoothed measure as atoms together with a report checking
    the structural conclusions: compact support, a uniform density bound
    (hence finite entropy), and the binned log-density relative to the
    Gaussian for concavity inspection by the caller.
    """
    if not 0.0 < theta < np.pi / 2:
        raise ValueError("theta must lie in (0, pi/2)")
    a = as_atomic(rho)
    d = a.dimension
    z, zw = _ball_gaussian_atoms(d, n_ball)
    ct, st = np.cos(theta), np.sin(theta)
    locs = (ct * a.locations[:, None, :] + st * z[None, :, :]).reshape(-1, d)
    ws = (a.weights[:, None] * zw[None, :]).ravel()
    out = AtomicMeasure(locs, ws / ws.sum())
    radius = float(np.abs(out.locations).max() if d == 1
                   else np.sqrt((out.locations ** 2).sum(axis=1)).max())
    # density of sin(theta) Z is bounded by 1 / (C sin(theta)^d) with
    # C = int_ball e^{-|z|^2/2} dz, and convolution cannot increase the bound
    from scipy.stats import norm
    gauss_ball_mass = 2.0 * norm.cdf(1.0) - 1.0 if d == 1 else 1.0 - np.exp(-0.5)
    c_ball = (2 * np.pi) ** (d / 2.0) * gauss_ball_mass
    bound = 1.0 / (c_ball * st ** d)
    if d == 1:
        # exact density of the smoothing before Z is discretized: a mixture
        # of ball-truncated Gaussian bumps of width sin(theta)
        y = a.locations[:, 0]
        xs = np.linspace(-radius - 1e-9, radius + 1e-9, 801)
        u = (xs[:, None] - ct * y[None, :]) / st
        bump = np.where(np.abs(u) < 1.0, np.exp(-0.5 * u ** 2), 0.0)
        dens = bump @ a.weights / (c_ball * st)  # bump integral is c_ball
        with np.errstate(divide="ignore"):
            rel = np.log(np.maximum(dens, 0.0)) + 0.5 * xs ** 2
        report = SmoothingReport(radius, bound, float(dens.max()),
                                 bool(dens.max() <= bound * (1 + 1e-12)),
                                 True, rel, xs)
    else:
        report = SmoothingReport(radius, bound, np.nan, True, True)
    return out, report


def atomic_to_csv(measure: AtomicMeasure, path) -> None:
    """Write atoms as CSV with columns ``x0..x{d-1}, weight``.

    Floats are written with ``repr`` so a write/read round trip is exact
    and the byte content is deterministic.
    """
    import csv

    a = as_atomic(measure)
    d = a.dimension
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k}" for k in range(d)] + ["weight"])
        for loc, w in zip(a.locations, a.weights):
            writer.writerow([repr(float(v)) for v in loc] + [repr(float(w))])


def atomic_from_csv(path) -> AtomicMeasure:
    """Read an AtomicMeasure written by :func:`atomic_to_csv`."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "weight":
            raise ValueError(f"{path}: expected a trailing 'weight' column")
        d = len(header) - 1
        locs, ws = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}: row with {len(row)} fields, expected {d + 1}")
            locs.append([float(v) for v in row[:d]])
            ws.append(float(row[d]))
    return AtomicMeasure(np.asarray(locs, dtype=float), np.asarray(ws, dtype=float))
