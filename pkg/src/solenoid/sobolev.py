"""Fourier-weighted Sobolev norms on the cylinder, the grid-refinement
regularity sweep and a finite lower-bound surrogate of the curve norm."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft
from numpy.polynomial import chebyshev as C

from .dynamics import SystemParams
from .transfer import DensityField, sbr_density

log = logging.getLogger(__name__)

SUPPORT_TOL = 1e-12
BOUNDED_RATIO = 1.2


@dataclass(frozen=True)
class SobolevSpec:
    """Order s, half-period L of the y transform, sampling modes for callables.

    Fields are periodized in y on [-L, L) by zero padding; when the grid step
    does not divide 2L the period is rounded up to a whole number of cells.
    """

    s: float
    L: float
    modes: tuple[int, int] = (64, 256)

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("s must be >= 0")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @classmethod
    def for_system(cls, params: SystemParams, s: float | None = None, modes=(64, 256)):
        """L = 2 (extent + 1), with the extent of the attractor's fiber range."""
        return cls(params.s if s is None else s, 2.0 * (params.y_extent + 1.0), tuple(modes))

    def with_s(self, s: float) -> SobolevSpec:
        return SobolevSpec(s, self.L, self.modes)

    def to_dict(self) -> dict:
        return {"s": self.s, "L": self.L, "modes": list(self.modes)}


def sample_field(spec: SobolevSpec, func: Callable, nx: int | None = None, ny: int | None = None):
    """Midpoint samples of func(x, y) on S^1 x [-L, L]."""
    nx = nx or 2 * spec.modes[0]
    ny = ny or 2 * spec.modes[1]
    h = DensityField(np.zeros((nx, ny)), (-spec.L, spec.L))
    X, Y = np.meshgrid(h.x_centers, h.y_centers, indexing="ij")
    h.values = np.asarray(func(X, Y), dtype=float) * np.ones_like(X)
    return h


def _as_field(spec: SobolevSpec, phi) -> DensityField:
    return phi if isinstance(phi, DensityField) else sample_field(spec, phi)


def _padded(spec: SobolevSpec, h: DensityField) -> tuple[np.ndarray, float]:
    """Zero-pad h to a y-period of at least 2L; returns (array, half period)."""
    vals = np.asarray(h.values)
    yc = h.y_centers
    outside = (yc < -spec.L) | (yc > spec.L)
    if outside.any():
        leak = np.abs(vals[:, outside]).sum() * h.dx * h.dy
        if leak > SUPPORT_TOL:
            raise ValueError(f"field has mass {leak:.3g} beyond |y| = L = {spec.L}")
        vals = vals[:, ~outside]
    n = max(vals.shape[1], int(math.ceil(2.0 * spec.L / h.dy - 1e-9)))
    n = scipy.fft.next_fast_len(n)
    out = np.zeros((vals.shape[0], n), dtype=vals.dtype)
    out[:, : vals.shape[1]] = vals
    return out, 0.5 * n * h.dy


def _check_grids(h1: DensityField, h2: DensityField):
    if h1.values.shape != h2.values.shape or not np.allclose(h1.ybounds, h2.ybounds):
        raise ValueError("fields must share one grid")


def _spectrum(spec: SobolevSpec, h: DensityField):
    """Transform (1/sqrt(2 pi)) int phi exp(-i(2 pi xi x + eta y)) and mode weights."""
    arr, half = _padded(spec, h)
    F = scipy.fft.fft2(arr) * (h.dx * h.dy / math.sqrt(2.0 * math.pi))
    xi = scipy.fft.fftfreq(arr.shape[0], d=1.0 / arr.shape[0])
    eta = scipy.fft.fftfreq(arr.shape[1], d=h.dy) * 2.0 * math.pi
    w = (2.0 * math.pi * xi[:, None]) ** 2 + eta[None, :] ** 2
    return F, w, math.pi / half


def _weight(w: np.ndarray, s: float) -> np.ndarray:
    return np.ones_like(w) if s == 0 else np.power(w, s)


def ws_star(spec: SobolevSpec, phi1, phi2) -> float:
    """The homogeneous part: sum over xi, Riemann sum over eta of F1 conj(F2) w^s."""
    h1, h2 = _as_field(spec, phi1), _as_field(spec, phi2)
    _check_grids(h1, h2)
    F1, w, deta = _spectrum(spec, h1)
    F2 = F1 if h2 is h1 else _spectrum(spec, h2)[0]
    return float(np.real(np.sum(F1 * np.conj(F2) * _weight(w, spec.s))) * deta)


def l2_inner(phi1: DensityField, phi2: DensityField) -> float:
    _check_grids(phi1, phi2)
    return float(np.real(np.sum(phi1.values * np.conj(phi2.values))) * phi1.dx * phi1.dy)


def ws_inner(spec: SobolevSpec, phi1, phi2) -> float:
    h1, h2 = _as_field(spec, phi1), _as_field(spec, phi2)
    return ws_star(spec, h1, h2) + l2_inner(h1, h2)


def ws_norm(spec: SobolevSpec, phi) -> float:
    h = _as_field(spec, phi)
    return math.sqrt(max(ws_inner(spec, h, h), 0.0))


def ws_norms(spec: SobolevSpec, phi, orders: Sequence[float]) -> np.ndarray:
    """Norms for several s from a single transform."""
    h = _as_field(spec, phi)
    F, w, deta = _spectrum(spec, h)
    p = np.abs(F) ** 2
    l2 = l2_inner(h, h)
    return np.array([math.sqrt(float(np.sum(p * _weight(w, s))) * deta + l2) for s in orders])


def binomial_weights(k: int) -> dict[tuple[int, int], int]:
    """b_{alpha beta} with (X^2 + Y^2)^k = sum b X^{2 alpha} Y^{2 beta}."""
    return {(a, k - a): math.comb(k, a) for a in range(k + 1)}


def spectral_partial(h: DensityField, alpha: int, beta: int) -> DensityField:
    """d^alpha/dx^alpha d^beta/dy^beta by FFT; y is periodized over the grid."""
    if alpha == 0 and beta == 0:
        return h
    F = scipy.fft.fft2(h.values)
    kx = 2j * math.pi * scipy.fft.fftfreq(h.nx, d=h.dx)
    ky = 2j * math.pi * scipy.fft.fftfreq(h.ny, d=h.dy)
    if h.nx % 2 == 0 and alpha % 2 == 1:
        kx[h.nx // 2] = 0.0
    if h.ny % 2 == 0 and beta % 2 == 1:
        ky[h.ny // 2] = 0.0
    F *= kx[:, None] ** alpha * ky[None, :] ** beta
    return DensityField(np.real(scipy.fft.ifft2(F)), h.ybounds)


def derivative_norm_sq(h: DensityField, k: int) -> float:
    """sum b_{alpha beta} ||d^alpha_x d^beta_y h||^2 + ||h||^2 for integer k."""
    total = l2_inner(h, h)
    for (a, b), coef in binomial_weights(k).items():
        d = spectral_partial(h, a, b)
        total += coef * l2_inner(d, d)
    return total


def interpolation_constant(t: float, s: float, eps: float, deta: float = 0.0) -> float:
    """C with ||phi||_t^2 <= eps ||phi||_s^2 + C ||phi||_{L^1}^2, 0 <= t < s.

    Uses |F phi| <= ||phi||_{L^1} / sqrt(2 pi). The excess 1 + w^t - eps(1 + w^s)
    is unimodal in w, so it is positive only on a bounded set w <= W where it
    is at most 1 + W^t. Integer xi with (2 pi xi)^2 <= W, each with an eta-range
    of length 2 sqrt(W) (+ deta for a Riemann sum with that step), bound the
    measure of that set.
    """
    if not 0 <= t < s:
        raise ValueError("need 0 <= t < s")
    if not 0 < eps:
        raise ValueError("eps must be positive")

    def excess(w):
        return 1.0 + w**t - eps * (1.0 + w**s)

    W = max(1.0, (t / (eps * s)) ** (1.0 / (s - t)))  # at or past the peak
    while excess(W) > 0:
        W *= 2.0
    n_xi = 2 * int(math.floor(math.sqrt(W) / (2 * math.pi))) + 1
    return (1.0 + W**t) * n_xi * (2.0 * math.sqrt(W) + deta) / (2.0 * math.pi)


@dataclass
class SweepResult:
    grids: list[int]
    norms: list[float]
    ratios: list[float]
    bounded: bool
    s: float
    L: float
    converged: list[bool]
    iterations: list[int]
    regime: float
    extra: dict = field(default_factory=dict)

    @property
    def last_ratio(self) -> float:
        return self.ratios[-1] if self.ratios else float("nan")

    def rows(self) -> list[dict]:
        return [
            {"grid": g, "s": self.s, "norm": n, "bounded_flag": self.bounded}
            for g, n in zip(self.grids, self.norms)
        ]

    def to_dict(self) -> dict:
        return {
            "grids": self.grids,
            "norms": self.norms,
            "ratios": self.ratios,
            "last_ratio": self.last_ratio,
            "bounded": self.bounded,
            "s": self.s,
            "L": self.L,
            "converged": self.converged,
            "iterations": self.iterations,
            "regime": self.regime,
            **self.extra,
        }


def regularity_sweep(
    params: SystemParams,
    spec: SobolevSpec,
    grids: Sequence[int] = (64, 128, 256, 512),
    tol: float = 1e-8,
    iters: int = 1000,
    strict: bool = False,
) -> SweepResult:
    """W^s norm of the P-fixed density on refining square grids.

    bounded is True when the last ratio of consecutive norms is below 1.2.
    Non-convergence of a density is recorded; with ``strict`` it raises.
    """
    grids = list(grids)
    if any(b <= a for a, b in zip(grids, grids[1:])):
        raise ValueError("grids must be increasing")
    norms, conv, its = [], [], []
    for n in grids:
        psi = sbr_density(params, n, n, iters=iters, tol=tol)
        if not psi.meta["converged"]:
            if strict:
                raise RuntimeError(f"density did not converge on {n}x{n}")
            log.warning("density did not converge on %dx%d", n, n)
        conv.append(bool(psi.meta["converged"]))
        its.append(int(psi.meta["iterations"]))
        norms.append(ws_norm(spec, psi))
        log.info("grid %d: ||psi||_W^%g = %.6g", n, spec.s, norms[-1])
    ratios = [b / a for a, b in zip(norms, norms[1:])]
    bounded = bool(ratios) and ratios[-1] < BOUNDED_RATIO
    regime = params.lam ** (1 + 2 * spec.s) * params.lap
    return SweepResult(grids, norms, ratios, bounded, spec.s, spec.L, conv, its, regime)


# curve-family norm


@dataclass(frozen=True)
class Curve:
    """t -> (x0 + sum_k coeffs[k] (t - center)^(k+1) mod 1, t) on [t0, t1]."""

    x0: float
    coeffs: tuple[float, ...]
    t0: float
    t1: float

    @property
    def center(self) -> float:
        return 0.5 * (self.t0 + self.t1)

    def x(self, t):
        u = np.asarray(t) - self.center
        out = np.full_like(u, self.x0, dtype=float)
        for k, c in enumerate(self.coeffs):
            out = out + c * u ** (k + 1)
        return np.mod(out, 1.0)

    def slope_bound(self) -> float:
        H = 0.5 * (self.t1 - self.t0)
        return sum((k + 1) * abs(c) * H**k for k, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class TestFunction:
    """phi(u) = (1 - u^2)^m T_j(u) scaled by 1/norm, u in (-1, 1) mapped onto the curve domain."""

    series: np.ndarray  # Chebyshev coefficients in u
    j: int

    def cnorm_bound(self, curve: Curve, k: int) -> float:
        """Upper bound of the C^k norm on the curve's domain via Chebyshev coefficient sums."""
        half = 0.5 * (curve.t1 - curve.t0)
        bound = 0.0
        ser = self.series
        for i in range(k + 1):
            bound = max(bound, float(np.abs(ser).sum()) / half**i)
            ser = C.chebder(ser)
        return bound


def _bump_series(j: int, m: int) -> np.ndarray:
    base = C.chebpow(np.array([0.5, 0.0, -0.5]), m)  # T0/2 - T2/2 = 1 - u^2
    tj = np.zeros(j + 1)
    tj[j] = 1.0
    return C.chebmul(base, tj)


@dataclass
class CurveFamily:
    curves: list[Curve]
    tests: list[TestFunction]
    c1: float
    r: int

    @classmethod
    def default(
        cls,
        params: SystemParams,
        n_curves: int = 64,
        n_tests: int = 8,
        seed: int = 0,
        y_range: float | None = None,
    ) -> CurveFamily:
        """Cubic near-vertical curves with slope <= 1/alpha0; the first is vertical."""
        rng = np.random.default_rng(seed)
        c1 = 1.0 / params.alpha0
        Y = params.y_extent if y_range is None else y_range
        curves = []
        for i in range(n_curves):
            length = Y * rng.uniform(0.1, 0.6)
            t0 = rng.uniform(-Y, Y - length)
            raw = rng.uniform(-1, 1, 3)
            if i == 0:
                raw[:] = 0.0
            cv = Curve(float(rng.random()), tuple(raw), t0, t0 + length)
            sb = cv.slope_bound()
            if sb > 0:
                scale = c1 * rng.uniform(0.2, 1.0) / sb
                cv = Curve(cv.x0, tuple(c * scale for c in raw), cv.t0, cv.t1)
            curves.append(cv)
        tests = [TestFunction(_bump_series(j, params.r + 1), j) for j in range(n_tests)]
        return cls(curves, tests, c1, params.r)

    def check(self) -> bool:
        return all(c.slope_bound() <= self.c1 * (1 + 1e-12) for c in self.curves)


def field_partials(h: DensityField) -> Callable:
    """Evaluator (x, y, alpha, beta) -> partials of a gridded field.

    Partials come from spectral differentiation; values between cell centers
    are linearly interpolated (periodic in x, zero outside the y range).
    """
    cache: dict = {}

    def ev(x, y, alpha, beta):
        key = (alpha, beta)
        if key not in cache:
            cache[key] = spectral_partial(h, alpha, beta).values
        v = cache[key]
        fx = np.mod(np.asarray(x) * h.nx - 0.5, h.nx)
        fy = (np.asarray(y) - h.ybounds[0]) / h.dy - 0.5
        i0 = np.floor(fx).astype(int)
        j0 = np.floor(fy).astype(int)
        ax, ay = fx - i0, fy - j0
        i1 = (i0 + 1) % h.nx
        i0 = i0 % h.nx

        def col(j):
            ok = (j >= 0) & (j < h.ny)
            jj = np.clip(j, 0, h.ny - 1)
            return np.where(ok, (1 - ax) * v[i0, jj] + ax * v[i1, jj], 0.0)

        return (1 - ay) * col(j0) + ay * col(j0 + 1)

    return ev


def dagger_norm_surrogate(h, rho: int, family: CurveFamily, n_quad: int = 64) -> float:
    """max over alpha + beta <= rho, curves and tests of |int phi(t) d^alpha_x d^beta_y h(gamma(t)) dt|.

    ``h`` is a DensityField or a callable (x, y, alpha, beta). Each test
    function is divided by a certified upper bound of its C^{alpha+beta} norm,
    so every term is admissible and the result is a lower bound of the
    supremum over all curves and tests.
    """
    if not 0 <= rho <= family.r - 1:
        raise ValueError(f"rho must lie in [0, {family.r - 1}]")
    ev = field_partials(h) if isinstance(h, DensityField) else h
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    best = 0.0
    for cv in family.curves:
        half = 0.5 * (cv.t1 - cv.t0)
        t = cv.center + half * nodes
        xs = cv.x(t)
        vals = [C.chebval(nodes, tf.series) for tf in family.tests]
        for a in range(rho + 1):
            for b in range(rho + 1 - a):
                g = np.asarray(ev(xs, t, a, b), dtype=float)
                for tf, phi in zip(family.tests, vals):
                    integral = abs(float(np.sum(weights * phi * g)) * half)
                    best = max(best, integral / tf.cnorm_bound(cv, a + b))
    return best
