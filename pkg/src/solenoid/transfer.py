"""Perron-Frobenius operator on gridded densities, Ulam matrices, SBR
density estimation and spectral / correlation diagnostics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .dynamics import SystemParams

log = logging.getLogger(__name__)

Y_MARGIN = 0.01


@dataclass
class DensityField:
    """Cell averages on S^1 x [ylo, yhi]; values[i, j] is cell (x_i, y_j)."""

    values: np.ndarray
    ybounds: tuple[float, float]
    meta: dict = field(default_factory=dict)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dy(self) -> float:
        return (self.ybounds[1] - self.ybounds[0]) / self.ny

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) / self.nx

    @property
    def y_centers(self) -> np.ndarray:
        return self.ybounds[0] + (np.arange(self.ny) + 0.5) * self.dy

    @property
    def y_edges(self) -> np.ndarray:
        return self.ybounds[0] + np.arange(self.ny + 1) * self.dy

    def mass(self) -> float:
        return float(self.values.sum() * self.dx * self.dy)

    def normalized(self) -> DensityField:
        return DensityField(self.values / self.mass(), self.ybounds, dict(self.meta))

    def cell_masses(self) -> np.ndarray:
        return self.values * self.dx * self.dy

    def l1_distance(self, other: DensityField) -> float:
        if self.values.shape != other.values.shape or not np.allclose(self.ybounds, other.ybounds):
            raise ValueError("fields live on different grids")
        return float(np.abs(self.values - other.values).sum() * self.dx * self.dy)

    def like(self, values: np.ndarray, **meta) -> DensityField:
        return DensityField(values, self.ybounds, meta)


def grid_bounds(params: SystemParams, margin: float = Y_MARGIN) -> tuple[float, float]:
    """Fiber window [-(1+margin) Y, (1+margin) Y] around the trapping interval."""
    Y = params.y_extent * (1.0 + margin)
    return (-Y, Y)


def empty_field(params: SystemParams, nx: int, ny: int, ybounds=None) -> DensityField:
    return DensityField(np.zeros((nx, ny)), ybounds or grid_bounds(params))


def from_function(func: Callable, nx: int, ny: int, ybounds) -> DensityField:
    """Sample func(x, y) at cell centers."""
    fld = DensityField(np.zeros((nx, ny)), tuple(ybounds))
    X, Y = np.meshgrid(fld.x_centers, fld.y_centers, indexing="ij")
    fld.values = np.asarray(func(X, Y), dtype=float) * np.ones_like(X)
    return fld


def smooth_bump(params: SystemParams, nx: int, ny: int, ybounds=None) -> DensityField:
    """Normalized nonnegative C^r start density supported in half the trapping window."""
    yb = ybounds or grid_bounds(params)
    half = 0.5 * params.y_extent
    power = 2 * (params.r + 1)

    def bump(x, y):
        u = np.clip(y / half, -1.0, 1.0)
        return (1.0 + 0.5 * np.cos(2 * np.pi * x)) * np.cos(0.5 * np.pi * u) ** power

    return from_function(bump, nx, ny, yb).normalized()


# -- Perron-Frobenius operator -------------------------------------------


def _column_cdfs(h: DensityField) -> np.ndarray:
    cdf = np.zeros((h.nx, h.ny + 1))
    np.cumsum(h.values * h.dy, axis=1, out=cdf[:, 1:])
    return cdf


def apply_P(params: SystemParams, h: DensityField, leak_tol: float = 1e-12) -> DensityField:
    """(Ph)(x, y) = 1/(lam lap) sum_k h(x_k, (y - f(x_k)) / lam), x_k the k-th preimage of x.

    Output values are averages over each y-cell, obtained from the
    cumulative fiber mass of h (piecewise linear in y, so the fiber read is
    exact for the cell-average representation).  Columns are read at x_k by
    linear interpolation, which preserves total mass exactly for any nx.
    Mass of h mapped outside the window is reported as meta['leakage'].
    """
    lap, lam = params.lap, params.lam
    nx, ny, dy = h.nx, h.ny, h.dy
    ylo = h.ybounds[0]
    cdf = _column_cdfs(h)
    total = cdf[:, -1]
    edges = h.y_edges
    out = np.zeros((nx, ny))
    captured = 0.0
    xc = h.x_centers
    for k in range(lap):
        xk = (xc + k) / lap
        s = xk * nx - 0.5
        i0 = np.floor(s).astype(np.int64)
        w = (s - i0)[:, None]
        ia = np.mod(i0, nx)
        ib = np.mod(i0 + 1, nx)
        fk = params.f(xk)[:, None]
        u = (edges[None, :] - fk) / lam  # pulled-back cell edges, shape (nx, ny+1)
        t = (u - ylo) / dy
        j = np.clip(np.floor(t).astype(np.int64), 0, ny - 1)
        frac = np.clip(t - j, 0.0, 1.0)
        below = t <= 0
        above = t >= ny
        vals_a = cdf[ia[:, None], j] + frac * (cdf[ia[:, None], j + 1] - cdf[ia[:, None], j])
        vals_b = cdf[ib[:, None], j] + frac * (cdf[ib[:, None], j + 1] - cdf[ib[:, None], j])
        F = (1.0 - w) * vals_a + w * vals_b
        F = np.where(below, 0.0, F)
        F = np.where(above, ((1.0 - w) * total[ia][:, None] + w * total[ib][:, None]), F)
        out += np.diff(F, axis=1)
        captured += float((F[:, -1] - F[:, 0]).sum())
    out /= lap * dy
    src_mass = float(total.sum()) * h.dx
    leak = src_mass - captured * h.dx / lap
    res = h.like(out, leakage=leak)
    if abs(leak) > leak_tol * max(1.0, abs(src_mass)):
        res.meta["leak_flag"] = True
        log.warning("apply_P leaked mass %.3e outside the fiber window", leak)
    return res


def sbr_density(
    params: SystemParams,
    nx: int,
    ny: int,
    iters: int = 1000,
    tol: float = 1e-8,
    start: DensityField | None = None,
) -> DensityField:
    """Iterate P from a smooth bump until the L1 step falls below tol.

    meta carries 'converged', 'iterations' and the L1 'history'; a run that
    exhausts ``iters`` is returned with converged=False.
    """
    psi = start.normalized() if start is not None else smooth_bump(params, nx, ny)
    history = []
    converged = False
    n = 0
    for n in range(1, iters + 1):
        nxt = apply_P(params, psi)
        diff = nxt.l1_distance(psi)
        history.append(diff)
        psi = nxt
        if diff < tol:
            converged = True
            break
    if not converged:
        log.warning("sbr_density did not converge in %d iterations (last step %.2e)", iters, history[-1])
    out = psi.normalized()
    out.meta = {"converged": converged, "iterations": n, "history": history}
    return out


# -- orbits --------------------------------------------------------------


def _digit_depth(lap: int) -> int:
    return int(math.floor(52 * math.log(2) / math.log(lap)))


def orbit_batches(
    params: SystemParams,
    n_chains: int,
    n_steps: int,
    burn_in: int,
    rng: np.random.Generator,
    y0=None,
):
    """Yield (x, y) arrays for n_steps time steps of n_chains independent orbits.

    The base point is stored as its first M base-lap digits and fresh
    uniform digits are appended after each shift, so orbits of a
    Lebesgue-random start are simulated without the round-off collapse of
    x -> lap x mod 1 in binary floating point.
    """
    lap = params.lap
    M = _digit_depth(lap)
    modulus = lap**M
    k = rng.integers(0, modulus, n_chains, dtype=np.int64)
    Y = params.y_extent
    y = rng.uniform(-Y, Y, n_chains) if y0 is None else np.broadcast_to(np.asarray(y0, float), (n_chains,)).copy()
    scale = 1.0 / modulus
    for t in range(burn_in + n_steps):
        x = k * scale
        if t >= burn_in:
            yield x, y
        y = params.lam * y + params.f(x)
        k = (k * lap) % modulus + rng.integers(0, lap, n_chains, dtype=np.int64)


def birkhoff_histogram(
    params: SystemParams,
    nx: int,
    ny: int,
    n_points: int = 10**7,
    burn_in: int = 1000,
    n_chains: int = 1000,
    seed: int = 0,
    ybounds=None,
) -> DensityField:
    """Empirical density of orbit points after burn-in (mass 1)."""
    yb = ybounds or grid_bounds(params)
    fld = DensityField(np.zeros((nx, ny)), tuple(yb))
    counts = np.zeros(nx * ny, dtype=np.int64)
    n_steps = -(-n_points // n_chains)
    rng = np.random.default_rng(seed)
    dy = fld.dy
    for x, y in orbit_batches(params, n_chains, n_steps, burn_in, rng):
        ix = np.minimum((x * nx).astype(np.int64), nx - 1)
        iy = np.floor((y - yb[0]) / dy).astype(np.int64)
        ok = (iy >= 0) & (iy < ny)
        counts += np.bincount(ix[ok] * ny + iy[ok], minlength=nx * ny)
    fld.values = counts.reshape(nx, ny) / (counts.sum() * fld.dx * dy)
    fld.meta = {"points": int(counts.sum()), "seed": seed}
    return fld


# -- Ulam discretization -------------------------------------------------


@dataclass
class UlamOperator:
    """Column-stochastic matrix; entry (j, i) is the fraction of cell i sent to cell j.

    Cells are flattened as i = ix * ny + iy.
    """

    matrix: sp.csr_matrix
    nx: int
    ny: int
    ybounds: tuple[float, float]
    mass_error: float

    def apply(self, h: DensityField) -> DensityField:
        m = self.matrix @ h.cell_masses().ravel()
        return h.like(m.reshape(self.nx, self.ny) / (h.dx * h.dy))


def ulam_build(
    params: SystemParams,
    nx: int,
    ny: int,
    samples_per_cell: int = 16,
    seed: int | None = None,
    ybounds=None,
) -> UlamOperator:
    """Ulam matrix from stratified samples, k = isqrt(samples_per_cell) per axis.

    The x axis uses kx = lap * ceil(k / lap) strata so every stratum lands in a
    single target cell; otherwise the inverse branches get unequal weights and
    the chain converges to the wrong measure. Samples sit at stratum midpoints;
    with ``seed`` they are jittered with one offset per axis so the sample
    pattern stays a tensor product.
    """
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")
    k = max(1, math.isqrt(samples_per_cell))
    yb = ybounds or grid_bounds(params)
    dy = (yb[1] - yb[0]) / ny
    kx = params.lap * -(-k // params.lap)
    u = (np.arange(kx) + 0.5) / kx
    v = (np.arange(k) + 0.5) / k
    if seed is not None:
        rng = np.random.default_rng(seed)
        u = (np.arange(kx) + rng.random(kx)) / kx
        v = (np.arange(k) + rng.random(k)) / k
    xs = ((np.arange(nx)[:, None] + u[None, :]) / nx).ravel()  # (nx*k,)
    ys = (yb[0] + (np.arange(ny)[:, None] + v[None, :]) * dy).ravel()  # (ny*k,)
    fx = params.f(xs)
    jx = np.minimum(np.floor(np.mod(params.lap * xs, 1.0) * nx).astype(np.int64), nx - 1)
    rows = []
    cols = []
    src_x = np.repeat(np.arange(nx), kx)
    src_y = np.repeat(np.arange(ny), k)
    for a in range(nx * kx):
        yn = params.lam * ys + fx[a]
        jy = np.floor((yn - yb[0]) / dy).astype(np.int64)
        ok = (jy >= 0) & (jy < ny)
        rows.append(jx[a] * ny + jy[ok])
        cols.append(src_x[a] * ny + src_y[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = nx * ny
    counts = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    counts.sum_duplicates()
    mat = (counts / float(kx * k)).tocsr()
    col_sums = np.asarray(mat.sum(axis=0)).ravel()
    return UlamOperator(mat, nx, ny, tuple(yb), float(np.max(np.abs(col_sums - 1.0))))


def ulam_fixed_density(op: UlamOperator, iters: int = 5000, tol: float = 1e-12) -> DensityField:
    n = op.nx * op.ny
    v = np.full(n, 1.0 / n)
    for _ in range(iters):
        w = op.matrix @ v
        w /= w.sum()
        if np.abs(w - v).sum() < tol:
            v = w
            break
        v = w
    dx = 1.0 / op.nx
    dy = (op.ybounds[1] - op.ybounds[0]) / op.ny
    return DensityField(v.reshape(op.nx, op.ny) / (dx * dy), op.ybounds)


class EigenEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def second_eigenvalue(
    op, iters: int = 3000, tol: float = 1e-9, window: int = 20, seed: int = 0
) -> EigenEstimate:
    """Modulus of the leading eigenvalue on the mass-zero subspace.

    Power iteration on vectors with zero sum (invariant because the matrix
    is column-stochastic); the estimate is the geometric-mean growth factor
    over the last ``window`` steps, which also handles complex pairs.
    """
    A = op.matrix if isinstance(op, UlamOperator) else op
    A = sp.csr_matrix(A) if not sp.issparse(A) else A.tocsr()
    n = A.shape[0]
    if n < 2:
        return EigenEstimate(0.0, True, 0)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    logs = []
    prev = None
    est = 0.0
    for it in range(1, iters + 1):
        w = A @ v
        w -= w.mean()
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return EigenEstimate(0.0, True, it)
        logs.append(math.log(nrm))
        v = w / nrm
        if it >= window:
            est = math.exp(sum(logs[-window:]) / window)
            if prev is not None and it % window == 0:
                if abs(est - prev) < tol:
                    return EigenEstimate(min(est, 1.0), True, it)
            if it % window == 0:
                prev = est
    log.warning("second_eigenvalue did not converge in %d iterations", iters)
    return EigenEstimate(min(est, 1.0), False, iters)


# -- correlations ----------------------------------------------------------


@dataclass
class SpectralDiagnostics:
    second_ev_estimate: float | None
    corr_rates: dict
    correlations: dict
    noise_floor: dict
    fit_windows: dict
    gamma_ref: float | None
    flags: dict
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "second_ev_estimate": self.second_ev_estimate,
            "corr_rates": self.corr_rates,
            "correlations": {k: [float(c) for c in v] for k, v in self.correlations.items()},
            "noise_floor": self.noise_floor,
            "fit_windows": self.fit_windows,
            "gamma_ref": self.gamma_ref,
            "flags": self.flags,
            "metadata": self.metadata,
        }


def lasota_yorke_indices(s: float, r: int) -> tuple[int, int, float]:
    """(rho0, rho1, nu) with nu(rho0, rho1) = sum_{j=rho1+1}^{rho0} 1/j.

    For s > 1/2: rho0 smallest integer with s < rho0 - 1, rho1 largest
    integer below s - 1/2; otherwise rho0 = r - 1, rho1 = 0.
    """
    if s > 0.5:
        rho0 = math.floor(s) + 2
        rho1 = math.ceil(s - 0.5) - 1
    else:
        rho0, rho1 = r - 1, 0
    nu = sum(1.0 / j for j in range(rho1 + 1, rho0 + 1))
    return rho0, rho1, nu


def fiber_coordinate(x, y):
    return y


def correlation_decay(
    params: SystemParams,
    observables: dict | None = None,
    n_max: int = 30,
    orbit_len: int = 10**6,
    n_chains: int = 100,
    burn_in: int = 1000,
    seed: int = 0,
    min_window: int = 5,
    noise_sigmas: float = 4.0,
    ulam_grid: tuple[int, int] | None = None,
    e_upper: int | None = None,
    q: int | None = None,
) -> SpectralDiagnostics:
    """Empirical correlations C_n(phi, psi) along orbits and fitted decay rates.

    ``observables`` maps a name to a pair (phi, psi) of functions of (x, y);
    the default pairs the fiber coordinate with itself.  The rate is
    exp(slope) of a least-squares fit of log|C_n| over n = 1.. up to the
    first n where |C_n| drops below the noise floor.
    """
    observables = observables or {"fiber": (fiber_coordinate, fiber_coordinate)}
    steps = -(-orbit_len // n_chains) + n_max
    rng = np.random.default_rng(seed)
    names = list(observables)
    phis = {k: np.empty((steps, n_chains)) for k in names}
    psis = {k: np.empty((steps, n_chains)) for k in names}
    for t, (x, y) in enumerate(orbit_batches(params, n_chains, steps, burn_in, rng)):
        for k in names:
            phi, psi = observables[k]
            phis[k][t] = phi(x, y)
            psis[k][t] = psi(x, y)
    rates, corrs, floors, windows, flags = {}, {}, {}, {}, {}
    T = steps - n_max
    for k in names:
        a, b = phis[k], psis[k]
        # C_n = <phi(T^n x) psi(x)> - <phi><psi>
        mb = b[:T].mean()
        ma = a[:T].mean()
        c = np.array([(a[n : n + T] * b[:T]).mean() - a[n : n + T].mean() * mb for n in range(n_max + 1)])
        noise = noise_sigmas * a[:T].std() * b[:T].std() / math.sqrt(T * n_chains)
        end = 1
        while end <= n_max and abs(c[end]) > noise:
            end += 1
        window = list(range(1, end))
        corrs[k] = c
        floors[k] = noise
        windows[k] = [window[0], window[-1]] if window else []
        if len(window) >= min_window:
            slope = np.polyfit(window, np.log(np.abs(c[window])), 1)[0]
            rates[k] = float(math.exp(slope))
            flags[k] = "ok"
        else:
            rates[k] = float("nan")
            flags[k] = "noise_floor"
        del ma
    ev = None
    if ulam_grid is not None:
        ev = second_eigenvalue(ulam_build(params, *ulam_grid)).value
    gref = None
    if e_upper is not None and q is not None:
        gref = math.sqrt(e_upper ** (1.0 / q) / params.regime)
    rho0, rho1, nu = lasota_yorke_indices(params.s, params.r)
    meta = {"rho0": rho0, "rho1": rho1, "nu": nu, "orbit_len": T * n_chains, "seed": seed}
    return SpectralDiagnostics(ev, rates, corrs, floors, windows, gref, flags, meta)
