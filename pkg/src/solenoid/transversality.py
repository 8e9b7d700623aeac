"""Certified transversality counts e(q, p) between branch-sum derivatives.

Two words a, b of length q are transversal on c (length p) when

    |S_c'(x, a) - S_c'(y, b)| > theta = 2 lam^q lap^-q alpha0

for all x, y in the closure of P_*(c).  Because the difference separates
in x and y, the infimum of |S_c'(x, a) - S_c'(y, b)| is the gap between
the ranges of the two derivatives.  Each range is bracketed by an inner
interval (the sampled hull, contained in the range) and an outer interval
(the hull widened by a per-word pad delta, containing the range):

* ``"lipschitz"``: delta = L h with L = alpha0 lap^-2 >= |S_c''|, so a pair
  is padded by 2 L h.
* ``"curvature"`` (default): delta = M h^2 / 8 with M = alpha0 lap^-3 >=
  |S_c'''|, the interpolation error of a C^2 function sampled at step h.

Grids have 2^k + 1 points, so every coarser dyadic sub-grid is available
and the outer interval is intersected over all of them.  A finer grid
therefore never loosens either interval, which makes refinement monotone.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    PartitionInterval,
    SystemParams,
    Word,
    all_words,
    as_word,
    partition_interval,
    sum_deriv_many,
)

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10**7


class Status(str, enum.Enum):
    TRANSVERSAL = "Transversal"
    NOT_TRANSVERSAL = "NotTransversal"
    UNKNOWN = "Unknown"


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration needs more (c, a) range enclosures than allowed."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class PairVerdict:
    a: Word
    b: Word
    c: Word
    status: Status
    margin: float
    gap: float
    pad: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "a": list(self.a.symbols),
            "b": list(self.b.symbols),
            "c": list(self.c.symbols),
            "status": self.status.value,
            "margin": self.margin,
            "gap": self.gap,
            "pad": self.pad,
            "threshold": self.threshold,
        }


@dataclass
class TransversalityReport:
    q: int
    p: int
    e_lower: int
    e_upper: int
    stabilized: bool
    criterion: float
    growth_log: list = field(default_factory=list)
    grid_step: float = math.nan
    n_unknown: int = 0
    certified: bool = True
    history: list = field(default_factory=list)
    p0: int | None = None
    certificates: list | None = None

    def row(self) -> dict:
        return {
            "q": self.q,
            "p": self.p,
            "e_lower": self.e_lower,
            "e_upper": self.e_upper,
            "stabilized": self.stabilized,
            "criterion": self.criterion,
        }


ENCLOSURES = ("curvature", "lipschitz")


def threshold(params: SystemParams, q: int) -> float:
    return 2.0 * (params.lam / params.lap) ** q * params.alpha0


def second_derivative_bound(params: SystemParams) -> float:
    return params.alpha0 / params.lap**2


def third_derivative_bound(params: SystemParams) -> float:
    return params.alpha0 / params.lap**3


def _check_enclosure(enclosure: str) -> str:
    if enclosure not in ENCLOSURES:
        raise ValueError(f"enclosure must be one of {ENCLOSURES}, got {enclosure!r}")
    return enclosure


def default_grid_step(params: SystemParams, q: int, enclosure: str = "curvature") -> float:
    """Step making the pair pad theta / 4 (per-word delta theta / 8)."""
    theta = threshold(params, q)
    if _check_enclosure(enclosure) == "lipschitz":
        return theta / (8.0 * second_derivative_bound(params))
    return math.sqrt(theta / third_derivative_bound(params))


def word_pad(params: SystemParams, q: int, h: float, enclosure: str = "curvature") -> float:
    """Per-word delta: how far the sampled hull may fall short of the true range."""
    roundoff = 64.0 * np.finfo(float).eps * q * params.alpha0
    if _check_enclosure(enclosure) == "lipschitz":
        return second_derivative_bound(params) * h + roundoff
    return third_derivative_bound(params) * h * h / 8.0 + roundoff


def star_grid(pc: PartitionInterval, h: float) -> tuple[np.ndarray, float]:
    """Uniform lifted grid of 2^k + 1 points over the closure of P_*(c), step <= h.

    Halving h doubles the number of intervals, so the old grid is a subset.
    """
    lo, hi = PartitionInterval(pc.word, pc.left, pc.width, star=True).bounds
    k = max(0, math.ceil(math.log2((hi - lo) / h) - 1e-9))
    n = 2**k
    return lo + (hi - lo) * np.arange(n + 1) / n, (hi - lo) / n


@dataclass
class Enclosures:
    """Inner (sampled) and outer (certified) range intervals, one entry per word."""

    inner_lo: np.ndarray
    inner_hi: np.ndarray
    outer_lo: np.ndarray
    outer_hi: np.ndarray
    h: np.ndarray

    def update(self, idx, other: Enclosures) -> None:
        self.inner_lo[idx] = np.minimum(self.inner_lo[idx], other.inner_lo)
        self.inner_hi[idx] = np.maximum(self.inner_hi[idx], other.inner_hi)
        self.outer_lo[idx] = np.maximum(self.outer_lo[idx], other.outer_lo)
        self.outer_hi[idx] = np.minimum(self.outer_hi[idx], other.outer_hi)
        self.h[idx] = other.h


def enclosures(params, c, words, h: float, enclosure: str = "curvature",
               chunk_points: int = 2_000_000) -> Enclosures:
    """Range enclosures of S_c'(., a) over the closure of P_*(c) for each row a of ``words``."""
    c = as_word(c)
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    q = words.shape[1]
    pc = partition_interval(params.lap, c, star=True)
    x, h_eff = star_grid(pc, h)
    n_lev = int(round(math.log2(x.size - 1))) + 1
    pads = [word_pad(params, q, h_eff * 2**j, enclosure) for j in range(n_lev)]
    W = len(words)
    out = Enclosures(np.empty(W), np.empty(W), np.empty(W), np.empty(W), np.full(W, h_eff))
    per = max(1, chunk_points // max(1, x.size * q))
    for s in range(0, W, per):
        d = sum_deriv_many(params, words[s : s + per], x, order=1)
        olo = np.full(len(d), -np.inf)
        ohi = np.full(len(d), np.inf)
        for j in range(n_lev):
            sub = d[:, :: 2**j]
            mn, mx = sub.min(axis=1), sub.max(axis=1)
            if j == 0:
                out.inner_lo[s : s + per], out.inner_hi[s : s + per] = mn, mx
            olo = np.maximum(olo, mn - pads[j])
            ohi = np.minimum(ohi, mx + pads[j])
        out.outer_lo[s : s + per], out.outer_hi[s : s + per] = olo, ohi
    return out


def _gap(lo_a, hi_a, lo_b, hi_b) -> float:
    return float(max(lo_b - hi_a, lo_a - hi_b, 0.0))


def _near_counts(lo, hi, theta):
    """For each a, #{b : gap([lo_a, hi_a], [lo_b, hi_b]) <= theta}.

    b is near a iff lo_b <= hi_a + theta and hi_b >= lo_a - theta; every b
    with hi_b < lo_a - theta meets the first condition, so the count is a
    difference of two ranks in sorted arrays.
    """
    n_le = np.searchsorted(np.sort(lo), hi + theta, side="right")
    n_far = np.searchsorted(np.sort(hi), lo - theta, side="left")
    return n_le - n_far


def _verdict(a, b, c, enc: Enclosures, i, j, theta) -> PairVerdict:
    gap = _gap(enc.inner_lo[i], enc.inner_hi[i], enc.inner_lo[j], enc.inner_hi[j])
    outer = _gap(enc.outer_lo[i], enc.outer_hi[i], enc.outer_lo[j], enc.outer_hi[j])
    if outer > theta:
        status, margin = Status.TRANSVERSAL, outer - theta
    elif gap <= theta:
        status, margin = Status.NOT_TRANSVERSAL, gap - theta
    else:
        status, margin = Status.UNKNOWN, gap - theta
    return PairVerdict(a, b, c, status, margin, gap, gap - outer, theta)


def pair_check(params: SystemParams, a, b, c, grid_step: float | None = None,
               enclosure: str = "curvature") -> PairVerdict:
    """Three-valued certified verdict on a pitchfork_c b.

    NotTransversal means the sampled ranges come within theta of each
    other; by the intermediate value theorem some (x, y) then realises a
    difference <= theta.  Transversal means the outer intervals are more
    than theta apart.  Anything else is Unknown; refine h.
    """
    a, b, c = as_word(a), as_word(b), as_word(c)
    if len(a) != len(b):
        raise ValueError("a and b must have the same length")
    q = len(a)
    h = default_grid_step(params, q, enclosure) if grid_step is None else grid_step
    if h <= 0:
        raise ValueError("grid_step must be positive")
    words = np.array([a.symbols, b.symbols], dtype=np.int64).reshape(2, q)
    enc = enclosures(params, c, words, h, enclosure)
    return _verdict(a, b, c, enc, 0, 1, threshold(params, q))


def _count_for_c(params, q, c_word, words, h, refine_rounds, want_pairs, enclosure):
    theta = threshold(params, q)
    enc = enclosures(params, c_word, words, h, enclosure)
    lower = _near_counts(enc.inner_lo, enc.inner_hi, theta)
    upper = _near_counts(enc.outer_lo, enc.outer_hi, theta)
    # the relation is symmetric, so a word has an Unknown partner iff upper > lower
    for _ in range(refine_rounds):
        idx = np.flatnonzero(upper > lower)
        if idx.size == 0:
            break
        h = h / 2.0
        enc.update(idx, enclosures(params, c_word, words[idx], h, enclosure))
        lower = _near_counts(enc.inner_lo, enc.inner_hi, theta)
        upper = _near_counts(enc.outer_lo, enc.outer_hi, theta)
    n_unknown = int((upper - lower).sum())
    certs = None
    if want_pairs:
        ws = [Word(tuple(int(s) for s in w)) for w in words]
        certs = [
            _verdict(ws[i], ws[j], c_word, enc, i, j, theta).to_dict()
            for i in range(len(ws))
            for j in range(len(ws))
        ]
    return lower, upper, n_unknown, certs


def e_qp(
    params: SystemParams,
    q: int,
    p: int,
    grid_step: float | None = None,
    budget: int = DEFAULT_BUDGET,
    refine_rounds: int = 4,
    sample_c: int | None = None,
    rng: np.random.Generator | None = None,
    certificates: bool = False,
    enclosure: str = "curvature",
) -> TransversalityReport:
    """Bracket [e_lower, e_upper] of e(q, p) = max_c max_a #{b : not a pitchfork_c b}.

    Every (c, a) range is enclosed and all b are counted when
    lap^(q + p) <= budget.  Otherwise a BudgetExceeded error carries the
    partial report over the first budget // lap^q words c, unless
    ``sample_c`` asks for a Monte-Carlo subset of c (the report is then
    flagged as not certified: e_upper is only an estimate).
    """
    if q < 1 or p < 1:
        raise ValueError("q and p must be >= 1")
    lap = params.lap
    h = default_grid_step(params, q, enclosure) if grid_step is None else grid_step
    words = all_words(lap, q)
    per_c = lap**q
    n_c = lap**p
    certified = True
    c_indices = np.arange(n_c)
    args = (params, q, p, h, words)
    if n_c * per_c > budget:
        if sample_c is None:
            partial = _aggregate(*args, np.arange(budget // per_c), refine_rounds, False, False,
                                 enclosure)
            raise BudgetExceeded(
                f"e({q},{p}) needs {n_c * per_c} range enclosures, budget is {budget}", partial
            )
        rng = rng or np.random.default_rng(0)
        c_indices = np.sort(rng.choice(n_c, size=min(sample_c, n_c), replace=False))
        certified = False
    return _aggregate(*args, c_indices, refine_rounds, certified, certificates, enclosure)


def _aggregate(params, q, p, h, words, c_indices, refine_rounds, certified, certificates,
               enclosure):
    c_words = all_words(params.lap, p)
    e_lo = 0
    e_hi = 0
    n_unknown = 0
    certs = [] if certificates else None
    for ci in c_indices:
        c_word = Word(tuple(int(s) for s in c_words[ci]))
        lower, upper, unk, cc = _count_for_c(params, q, c_word, words, h, refine_rounds,
                                             certificates, enclosure)
        e_lo = max(e_lo, int(lower.max()))
        e_hi = max(e_hi, int(upper.max()))
        n_unknown += unk
        if certs is not None:
            certs.extend(cc)
    crit = e_hi / params.regime**q if len(c_indices) else math.nan
    growth = [(q, math.log(e_hi) / q)] if e_hi > 0 else []
    return TransversalityReport(
        q=q, p=p, e_lower=e_lo, e_upper=e_hi, stabilized=False, criterion=crit,
        growth_log=growth, grid_step=h, n_unknown=n_unknown, certified=certified,
        certificates=certs,
    )


def e_q_stabilized(
    params: SystemParams,
    q: int,
    p_max: int,
    grid_step: float | None = None,
    budget: int = DEFAULT_BUDGET,
    enclosure: str = "curvature",
) -> TransversalityReport:
    """Run e_qp for p = 1..p_max until the bracket repeats for two consecutive p.

    ``p0`` records the first p of the repeated pair.  If the bracket still
    moves at p_max (or the budget runs out) ``stabilized`` is False.
    """
    if p_max < 2:
        raise ValueError("p_max must be >= 2")
    history = []
    last = None
    report = None
    for p in range(1, p_max + 1):
        try:
            report = e_qp(params, q, p, grid_step, budget=budget, enclosure=enclosure)
        except BudgetExceeded:
            log.warning("budget exhausted at q=%d p=%d", q, p)
            break
        history.append((p, report.e_lower, report.e_upper))
        bracket = (report.e_lower, report.e_upper)
        if last == bracket:
            report.stabilized = True
            report.p0 = p - 1
            break
        last = bracket
    if report is None:
        raise BudgetExceeded(f"e({q},1) already exceeds the budget")
    report.history = history
    return report


def growth_table(
    params: SystemParams,
    q_max: int,
    p_max: int,
    grid_step: float | None = None,
    budget: int = DEFAULT_BUDGET,
    enclosure: str = "curvature",
) -> list[TransversalityReport]:
    """Stabilized reports for q = 1..q_max; growth_log accumulates (q, log(e_upper)/q)."""
    rows = []
    growth = []
    for q in range(1, q_max + 1):
        rep = e_q_stabilized(params, q, p_max, grid_step, budget, enclosure)
        growth.append((q, math.log(rep.e_upper) / q if rep.e_upper else -math.inf))
        rep.growth_log = list(growth)
        rows.append(rep)
    return rows


def gamma_ref(params: SystemParams, e_upper: int, q: int) -> float:
    """sqrt(e_upper^(1/q) / (lam^(1+2s) lap)), the spectral reference value with B0 = 1."""
    return math.sqrt(e_upper ** (1.0 / q) / params.regime)
