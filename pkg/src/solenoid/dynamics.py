"""System definition and exact inverse-branch symbolic dynamics.

The skew product is T(x, y) = (lap * x mod 1, lam * y + f(x)) on the
cylinder R/Z x R, with f a trigonometric polynomial.  Words over the
alphabet {1, ..., lap} index inverse branches of the base map; a word is
the reverse of the itinerary of the points of its partition interval.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .trigpoly import TrigPoly

KAPPA_SAFETY = 1.0001


@dataclass(frozen=True)
class SystemParams:
    lap: int
    lam: float
    f: TrigPoly
    r: int = 3
    s: float = 0.0
    kappa: float | None = None

    def __post_init__(self):
        if int(self.lap) != self.lap or self.lap < 2:
            raise ValueError(f"lap must be an integer >= 2, got {self.lap!r}")
        object.__setattr__(self, "lap", int(self.lap))
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam!r}")
        if int(self.r) != self.r or self.r < 3:
            raise ValueError(f"r must be an integer >= 3, got {self.r!r}")
        object.__setattr__(self, "r", int(self.r))
        if self.s < 0:
            raise ValueError("s must be non-negative")
        if not isinstance(self.f, TrigPoly):
            raise TypeError("f must be a TrigPoly")
        norm = self.f.cnorm_bound(self.r)
        if self.kappa is None:
            kappa = KAPPA_SAFETY * norm if norm > 0 else 1.0
            object.__setattr__(self, "kappa", float(kappa))
        elif self.kappa <= 0 or self.kappa < norm:
            raise ValueError(
                f"kappa={self.kappa} must be positive and >= the C^r bound {norm:.6g} of f"
            )

    @property
    def alpha0(self) -> float:
        return self.kappa / (1.0 - self.lam)

    @property
    def trapping_region(self) -> tuple[float, float]:
        """y-interval of D = S^1 x [-alpha0, alpha0]."""
        return (-self.alpha0, self.alpha0)

    @property
    def y_extent(self) -> float:
        """Half-width of the tightest symmetric fiber interval with T(D') in D'.

        Uses the certified sup |f| rather than kappa, so density grids
        resolve the attractor.  Falls back to alpha0 when f is zero.
        """
        sup = self.f.sup_bound(0)
        return sup / (1.0 - self.lam) if sup > 0 else self.alpha0

    @property
    def regime(self) -> float:
        """lam^(1+2s) * lap; the Sobolev regime needs this > 1."""
        return self.lam ** (1.0 + 2.0 * self.s) * self.lap

    def with_f(self, f: TrigPoly, kappa: float | None = None) -> SystemParams:
        return SystemParams(self.lap, self.lam, f, self.r, self.s, kappa)

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "lap": self.lap,
            "lambda": self.lam,
            "f": self.f.to_dict(),
            "r": self.r,
            "s": self.s,
            "kappa": self.kappa,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SystemParams:
        missing = {"lap", "lambda", "f"} - set(d)
        if missing:
            raise ValueError(f"system parameters missing keys: {sorted(missing)}")
        return cls(
            lap=d["lap"],
            lam=float(d["lambda"]),
            f=TrigPoly.from_dict(d["f"]),
            r=d.get("r", 3),
            s=float(d.get("s", 0.0)),
            kappa=d.get("kappa"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SystemParams:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Word:
    """Finite word over {1..lap}; ``prefix(i)`` is [a]_i."""

    symbols: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(a) for a in self.symbols))

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __getitem__(self, i):
        return self.symbols[i]

    def prefix(self, i: int) -> Word:
        return Word(self.symbols[:i])

    def __add__(self, other) -> Word:
        return Word(self.symbols + tuple(as_word(other).symbols))

    def check(self, lap: int) -> Word:
        if any(a < 1 or a > lap for a in self.symbols):
            raise ValueError(f"word {self.symbols} has symbols outside 1..{lap}")
        return self


def as_word(a) -> Word:
    return a if isinstance(a, Word) else Word(tuple(a))


@dataclass(frozen=True)
class PartitionInterval:
    """P(c) = [left, left + width), or P_*(c) when ``star`` is set.

    Bounds of P_*(c) are returned as a lift [left - width, left + 2 width]
    of the circle interval, so the extension S_c is a function on a real
    interval even when P(c) touches 0.
    """

    word: Word
    left: float
    width: float
    star: bool = False

    @property
    def bounds(self) -> tuple[float, float]:
        if self.star:
            return (self.left - self.width, self.left + 2.0 * self.width)
        return (self.left, self.left + self.width)

    def lift(self, x, lifted: bool = False):
        """Representative of circle point(s) x inside ``bounds``; ValueError if none."""
        lo, hi = self.bounds
        x = np.asarray(x, dtype=float)
        if lifted:
            xl = x
        else:
            xl = np.where((x >= lo) & (x <= hi), x, lo + np.mod(x - lo, 1.0))
        tol = 1e-12
        if np.any(xl < lo - tol) or np.any(xl > hi + tol):
            raise ValueError(f"point outside closure of the interval [{lo}, {hi}]")
        return xl

    def contains(self, x) -> np.ndarray:
        lo, hi = self.bounds
        xl = lo + np.mod(np.asarray(x, dtype=float) - lo, 1.0)
        return xl < hi


def word_offset(lap: int, a) -> int:
    """Integer m with P(a) = [m / lap^n, (m+1) / lap^n)."""
    m = 0
    for j, sym in enumerate(as_word(a).symbols):
        m += (sym - 1) * lap**j
    return m


def partition_interval(lap: int, c, star: bool = False) -> PartitionInterval:
    c = as_word(c).check(lap)
    n = len(c)
    return PartitionInterval(c, word_offset(lap, c) / lap**n, float(lap) ** (-n), star)


# -- maps --------------------------------------------------------------


def step(params: SystemParams, point):
    """One application of T; works on scalars or arrays."""
    x, y = point
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xn = np.mod(params.lap * x, 1.0)
    yn = params.lam * y + params.f(x)
    if xn.ndim == 0:
        return float(xn), float(yn)
    return xn, yn


def inverse_branch(params_or_lap, k: int, x):
    """Preimage of x under x -> lap x lying in P(k) = [(k-1)/lap, k/lap)."""
    lap = _lap(params_or_lap)
    if not 1 <= k <= lap:
        raise ValueError(f"symbol {k} outside 1..{lap}")
    y = (np.mod(x, 1.0) + (k - 1)) / lap
    return float(y) if np.ndim(y) == 0 else y


def word_point(params_or_lap, a, x):
    """a(x): the unique y in P(a) with tau^n(y) = x.

    The first symbol is applied first: a(x) = b_{a_n}(...b_{a_1}(x)...),
    with b_k the inverse branch into P(k).
    """
    lap = _lap(params_or_lap)
    a = as_word(a).check(lap)
    if len(a) == 0:
        raise ValueError("word_point needs a nonempty word")
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    for sym in a.symbols:
        y = (y + (sym - 1)) / lap
    return float(y) if y.ndim == 0 else y


def branch_points(lap: int, a, x_lift) -> np.ndarray:
    """Stack of [a]_i(x) for i = 1..n, affine in the (lifted) x.

    Shape (n,) + shape(x).  No reduction mod 1 is applied, so the result is
    the branch chain continued from the lift of x.
    """
    a = as_word(a)
    y = np.asarray(x_lift, dtype=float)
    out = np.empty((len(a),) + y.shape)
    for i, sym in enumerate(a.symbols):
        y = (y + (sym - 1)) / lap
        out[i] = y
    return out


def branch_sum(params: SystemParams, a, x):
    """S(x, a) = sum_i lam^(i-1) f([a]_i(x))."""
    return branch_sum_deriv(params, a, x, 0)


def branch_sum_deriv(params: SystemParams, a, x, order: int = 1):
    """order-th x-derivative of S(x, a) for x on the circle."""
    return _sum_deriv(params, as_word(a).check(params.lap), np.mod(np.asarray(x, float), 1.0), order)


def _sum_deriv(params, a: Word, x_lift, order: int, f: TrigPoly | None = None):
    if not 0 <= order <= params.r:
        raise ValueError(f"derivative order {order} outside 0..{params.r}")
    g = (params.f if f is None else f).derivative(order)
    pts = branch_points(params.lap, a, x_lift)
    n = len(a)
    w = params.lam ** np.arange(n) * float(params.lap) ** (-order * np.arange(1, n + 1))
    w = w.reshape((n,) + (1,) * np.ndim(x_lift))
    res = np.sum(w * g(pts), axis=0) if n else np.zeros(np.shape(x_lift))
    return float(res) if np.ndim(res) == 0 else res


def branch_sum_ext(params: SystemParams, c, a, x, order: int = 0, lifted: bool = False):
    """Extension S_c(x, a) of S(., a)|P(c) to the closure of P_*(c).

    ``c`` is a word or a PartitionInterval.  x is a circle point (or a lift
    into the closure of P_*(c) when ``lifted``).
    """
    pc = c if isinstance(c, PartitionInterval) else partition_interval(params.lap, c, star=True)
    pc = PartitionInterval(pc.word, pc.left, pc.width, star=True)
    xl = pc.lift(x, lifted=lifted)
    return _sum_deriv(params, as_word(a).check(params.lap), xl, order)


def tail_truncate(params: SystemParams, a_infinite: Iterable[int], depth: int, order: int = 1):
    """Truncate an infinite word to [a]_depth with a certified error bound.

    The bound lam^depth * alpha0 * lap^-order dominates the tail
    sum_{i>depth} lam^(i-1) lap^(-i order) |f^(order)| of the order-th
    derivative of S.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    word = Word(tuple(itertools.islice(iter(a_infinite), depth))).check(params.lap)
    if len(word) < depth:
        return word, 0.0
    return word, params.lam**depth * params.alpha0 * float(params.lap) ** (-order)


def geometric_tail(lam: float, lap: int, depth: int, order: int, kappa: float) -> float:
    """Closed form of sum_{i>depth} lam^(i-1) lap^(-i order) kappa."""
    q = lam * float(lap) ** (-order)
    return kappa * lam**depth * float(lap) ** (-(depth + 1) * order) / (1.0 - q)


# -- batch helpers -----------------------------------------------------


def all_words(lap: int, n: int) -> np.ndarray:
    """All words of length n in lexicographic order, shape (lap^n, n)."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(1, lap + 1), repeat=n)), dtype=np.int64)


def prefix_offsets(lap: int, words: np.ndarray) -> np.ndarray:
    """m_i for every prefix [a]_i, i = 1..n; row-wise for a word array."""
    words = np.atleast_2d(words)
    powers = float(lap) ** np.arange(words.shape[1])
    return np.cumsum((words - 1) * powers, axis=1)


def sum_deriv_many(
    params: SystemParams,
    words: np.ndarray,
    x_lift: np.ndarray,
    order: int = 1,
    f: TrigPoly | None = None,
) -> np.ndarray:
    """order-th derivative of S(x, a) (branch chain continued from the lift)
    for every row of ``words`` and every x; shape (len(words), len(x))."""
    g = (params.f if f is None else f).derivative(order)
    words = np.atleast_2d(words)
    n = words.shape[1]
    offs = prefix_offsets(params.lap, words)
    x = np.asarray(x_lift, dtype=float)
    out = np.zeros((words.shape[0], x.size))
    for i in range(n):
        scale = float(params.lap) ** (-(i + 1))
        pts = (x[None, :] + offs[:, i : i + 1]) * scale
        out += params.lam**i * scale**order * g(pts)
    return out


def _lap(params_or_lap) -> int:
    return params_or_lap.lap if isinstance(params_or_lap, SystemParams) else int(params_or_lap)
