"""Independent brute-force references shared by several test modules."""

from fractions import Fraction
import itertools
import math

import numpy as np


def in_set_definition(lap, a, y: Fraction) -> bool:
    """y in P(a) = intersection_{i=0}^{n-1} tau^-i(P(a_{n-i})), exact arithmetic."""
    n = len(a)
    for i in range(n):
        z = (y * lap**i) % 1
        k = a[n - 1 - i]
        if not (Fraction(k - 1, lap) <= z < Fraction(k, lap)):
            return False
    return True


def preimage_in_word(lap, a, x: Fraction) -> Fraction:
    """Enumerate all lap^n preimages of x under tau^n, keep the one in P(a)."""
    n = len(a)
    hits = [
        (x + m) / lap**n
        for m in range(lap**n)
        if in_set_definition(lap, a, (x + m) / lap**n)
    ]
    assert len(hits) == 1
    return hits[0]


def interval_of_word(lap, a) -> tuple[Fraction, Fraction]:
    """P(a) found by scanning the lap^n cells of the n-th refinement."""
    n = len(a)
    for m in range(lap**n):
        mid = Fraction(2 * m + 1, 2 * lap**n)
        if in_set_definition(lap, a, mid):
            return Fraction(m, lap**n), Fraction(m + 1, lap**n)
    raise AssertionError("no cell found")


def ext_derivative(params, c, a, x_lift):
    """S_c'(x, a) by explicit branch selection.

    For each i the branch of tau^-i is the affine map x -> (x + k)/lap^i whose
    value at the left end of P(c) lies in P([a]_i); k is found by scanning.
    """
    lap, lam = params.lap, params.lam
    left, _ = interval_of_word(lap, c)
    fp = params.f.derivative(1)
    total = np.zeros_like(np.asarray(x_lift, dtype=float))
    for i in range(1, len(a) + 1):
        lo, hi = interval_of_word(lap, a[:i])
        k = next(k for k in range(lap**i) if lo <= (left + k) / lap**i < hi)
        pts = (np.asarray(x_lift, dtype=float) + k) / lap**i
        total = total + lam ** (i - 1) * lap ** (-i) * fp(pts)
    return total


def dense_count(params, q, c, h=1e-5):
    """Oracle e-count for one c: max_a #{b : range gap of S_c'(., a), S_c'(., b) <= theta}."""
    lap = params.lap
    left, right = interval_of_word(lap, c)
    w = float(right - left)
    x = np.linspace(float(left) - w, float(left) + 2 * w, int(math.ceil(3 * w / h)) + 1)
    theta = 2 * (params.lam / lap) ** q * params.alpha0
    words = list(itertools.product(range(1, lap + 1), repeat=q))
    ranges = []
    for a in words:
        d = ext_derivative(params, c, a, x)
        ranges.append((d.min(), d.max()))
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    gap = np.maximum(np.maximum(lo[None, :] - hi[:, None], lo[:, None] - hi[None, :]), 0)
    return int((gap <= theta).sum(axis=1).max())


def interval_from_digits(lap, c) -> tuple[Fraction, Fraction]:
    """P(c) read off the set definition: tau^i(y) in P(c_(n-i)) fixes base-lap digit i+1 of y."""
    n = len(c)
    m = sum((c[n - 1 - i] - 1) * lap ** (n - 1 - i) for i in range(n))
    return Fraction(m, lap**n), Fraction(m + 1, lap**n)


def itinerary_shifts(lap, c, q):
    """k[a, i] with (x_c + k)/lap^(i+1) the branch of tau^-(i+1) landing in P([a]_(i+1)).

    Exact integer version of the set definition: the preimage
    (m_c + k lap^p) / lap^(p+i) has itinerary given by the leading base-lap
    digits of its numerator, and P(a) is read off that itinerary in reverse.
    """
    p = len(c)
    lo, _ = interval_from_digits(lap, c)
    m_c = int(lo * lap**p)
    words = list(itertools.product(range(1, lap + 1), repeat=q))
    index = {w: j for j, w in enumerate(words)}
    shifts = np.zeros((len(words), q), dtype=np.int64)
    for i in range(1, q + 1):
        table = {}
        for k in range(lap**i):
            num = m_c + k * lap**p
            digits = []
            for j in range(i):  # leading digits of num as a (p+i)-digit number
                digits.append(num // lap ** (p + i - 1 - j) % lap + 1)
            table[tuple(reversed(digits))] = k
        for w, j in index.items():
            shifts[j, i - 1] = table[w[:i]]
    return shifts


def dense_count_fast(params, q, c, n_points=2001):
    """Oracle e-count for one c on a uniform grid of the extended interval; O(W log W) pair counting."""
    lap, lam = params.lap, params.lam
    left, right = interval_from_digits(lap, c)
    w = float(right - left)
    x = np.linspace(float(left) - w, float(left) + 2 * w, n_points)
    theta = 2 * (lam / lap) ** q * params.alpha0
    k = itinerary_shifts(lap, c, q)
    fp = params.f.derivative(1)
    lo = np.empty(len(k))
    hi = np.empty(len(k))
    for j0 in range(0, len(k), 512):
        kk = k[j0 : j0 + 512]
        d = np.zeros((len(kk), x.size))
        for i in range(1, q + 1):
            d += lam ** (i - 1) * lap ** (-i) * fp((x[None, :] + kk[:, i - 1 : i]) / lap**i)
        lo[j0 : j0 + 512] = d.min(axis=1)
        hi[j0 : j0 + 512] = d.max(axis=1)
    # b counts for a iff lo_b <= hi_a + theta and hi_b >= lo_a - theta; the failures are disjoint
    slo, shi = np.sort(lo), np.sort(hi)
    n_le = np.searchsorted(slo, hi + theta, side="right")
    n_far = np.searchsorted(shi, lo - theta, side="left")
    return int((n_le - n_far).max())
