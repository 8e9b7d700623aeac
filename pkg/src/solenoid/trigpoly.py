"""Real trigonometric polynomials on the unit circle R/Z."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrigPoly:
    """f(x) = c_0 + sum_{j=1..K} (c_j cos 2 pi j x + s_j sin 2 pi j x).

    ``cos_coeffs`` has length K+1 (index 0 is the constant term) and
    ``sin_coeffs`` has length K (index j-1 holds s_j).
    """

    cos_coeffs: tuple = (0.0,)
    sin_coeffs: tuple = ()
    _c: np.ndarray = field(init=False, repr=False, compare=False)
    _s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.asarray(self.cos_coeffs, dtype=float).ravel()
        s = np.asarray(self.sin_coeffs, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        K = max(c.size - 1, s.size)
        c = np.concatenate([c, np.zeros(K + 1 - c.size)])
        s = np.concatenate([s, np.zeros(K - s.size)])
        object.__setattr__(self, "cos_coeffs", tuple(float(v) for v in c))
        object.__setattr__(self, "sin_coeffs", tuple(float(v) for v in s))
        object.__setattr__(self, "_c", c)
        object.__setattr__(self, "_s", s)

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls) -> TrigPoly:
        return cls((0.0,), ())

    @classmethod
    def constant(cls, value: float) -> TrigPoly:
        return cls((float(value),), ())

    @classmethod
    def cos(cls, j: int = 1, amplitude: float = 1.0) -> TrigPoly:
        c = [0.0] * (j + 1)
        c[j] = amplitude
        return cls(tuple(c), ())

    @classmethod
    def sin(cls, j: int = 1, amplitude: float = 1.0) -> TrigPoly:
        s = [0.0] * j
        s[j - 1] = amplitude
        return cls((0.0,), tuple(s))

    @classmethod
    def from_dict(cls, d: dict) -> TrigPoly:
        return cls(tuple(d.get("cos", (0.0,))), tuple(d.get("sin", ())))

    def to_dict(self) -> dict:
        return {"cos": list(self.cos_coeffs), "sin": list(self.sin_coeffs)}

    # -- structure ----------------------------------------------------
    @property
    def degree(self) -> int:
        return len(self.sin_coeffs)

    def is_zero(self) -> bool:
        return not (np.any(self._c) or np.any(self._s))

    def __add__(self, other: TrigPoly) -> TrigPoly:
        K = max(self.degree, other.degree)
        c = np.zeros(K + 1)
        s = np.zeros(K)
        c[: self._c.size] += self._c
        c[: other._c.size] += other._c
        s[: self._s.size] += self._s
        s[: other._s.size] += other._s
        return TrigPoly(tuple(c), tuple(s))

    def __mul__(self, scalar: float) -> TrigPoly:
        return TrigPoly(tuple(self._c * scalar), tuple(self._s * scalar))

    __rmul__ = __mul__

    def derivative(self, k: int = 1) -> TrigPoly:
        """k-th derivative, again a TrigPoly of the same degree."""
        if k < 0:
            raise ValueError("derivative order must be non-negative")
        c, s = self._c.copy(), self._s.copy()
        if k == 0:
            return TrigPoly(tuple(c), tuple(s))
        w = 2.0 * np.pi * np.arange(1, self.degree + 1)
        a, b = c[1:], s
        for _ in range(k):
            # d/dx (a cos wx + b sin wx) = w b cos wx - w a sin wx
            a, b = w * b, -w * a
        return TrigPoly(tuple(np.concatenate([[0.0], a])), tuple(b))

    # -- evaluation ---------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self._c[0])
        for j in range(1, self.degree + 1):
            cj, sj = self._c[j], self._s[j - 1]
            if cj == 0.0 and sj == 0.0:
                continue
            arg = 2.0 * np.pi * j * x
            if cj != 0.0:
                out = out + cj * np.cos(arg)
            if sj != 0.0:
                out = out + sj * np.sin(arg)
        return out if out.ndim else float(out)

    def eval_deriv(self, x, k: int):
        return self.derivative(k)(x)

    # -- certified bounds ---------------------------------------------
    def coeff_bound(self, k: int = 0) -> float:
        """sum |coeff| (2 pi j)^k, a crude upper bound of sup|f^(k)|."""
        j = np.arange(1, self.degree + 1)
        amp = np.hypot(self._c[1:], self._s)
        b = float(np.sum(amp * (2.0 * np.pi * j) ** k))
        if k == 0:
            b += abs(self._c[0])
        return b * (1.0 + 64 * np.finfo(float).eps)

    def sup_bound(self, k: int = 0, samples: int | None = None) -> float:
        """Certified upper bound of sup_x |f^(k)(x)|.

        Dense sampling with spacing dx gives max_grid M; Bernstein's
        inequality sup|g'| <= 2 pi K sup|g| yields sup|g| <= M / (1 - pi K dx).
        The result is the smaller of that and ``coeff_bound``.
        """
        g = self.derivative(k)
        K = g.degree
        if K == 0:
            return abs(g._c[0])
        n = samples or max(4096, 256 * K)
        x = np.arange(n) / n
        M = float(np.max(np.abs(g(x))))
        factor = 1.0 - np.pi * K / n
        sampled = M / factor * (1.0 + 8 * np.finfo(float).eps) if factor > 0 else math.inf
        return min(sampled, self.coeff_bound(k))

    def cnorm_bound(self, r: int) -> float:
        """Certified over-estimate of max_{0<=k<=r} sup|f^(k)|."""
        return max(self.sup_bound(k) for k in range(r + 1))
