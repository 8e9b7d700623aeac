"""Parameter families f_t = g + sum t_i phi_i, the affine maps from parameters
to branch-derivative differences, their Jacobians, and a Monte-Carlo estimate
of the parameter set where transversality can fail at a given depth."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .dynamics import (
    SystemParams,
    Word,
    all_words,
    as_word,
    geometric_tail,
    partition_interval,
    sum_deriv_many,
)
from .trigpoly import TrigPoly

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class ParameterFamily:
    lap: int
    lam: float
    g: TrigPoly
    phis: tuple[TrigPoly, ...]
    r: int = 3

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(self.phis))
        SystemParams(self.lap, self.lam, self.g, self.r)  # validates lap, lam, r

    @classmethod
    def fourier(cls, lap: int, lam: float, m: int = 4, g: TrigPoly | None = None, r: int = 3):
        """phi_{2j-1} = cos(2 pi j x), phi_{2j} = sin(2 pi j x), j = 1..m/2 (cos first if m is odd)."""
        if m < 1:
            raise ValueError("m must be >= 1")
        phis = []
        for i in range(m):
            j = i // 2 + 1
            phis.append(TrigPoly.cos(j) if i % 2 == 0 else TrigPoly.sin(j))
        return cls(lap, lam, g or TrigPoly.zero(), tuple(phis), r)

    @property
    def m(self) -> int:
        return len(self.phis)

    @property
    def D0(self) -> float:
        return float(sum(p.cnorm_bound(self.r) for p in self.phis))

    @property
    def kappa(self) -> float:
        """A C^r bound valid for every f_t with t in [-1, 1]^m."""
        base = self.g.cnorm_bound(self.r) + self.D0
        return 1.0001 * base if base > 0 else 1.0

    @property
    def alpha0(self) -> float:
        return self.kappa / (1.0 - self.lam)

    def f_t(self, t: Sequence[float]) -> TrigPoly:
        t = np.asarray(t, dtype=float)
        if t.shape != (self.m,):
            raise ValueError(f"t must have {self.m} entries")
        out = self.g
        for ti, p in zip(t, self.phis):
            out = out + p * float(ti)
        return out

    def system(self, t: Sequence[float] | None = None, s: float = 0.0) -> SystemParams:
        f = self.g if t is None else self.f_t(t)
        return SystemParams(self.lap, self.lam, f, self.r, s, kappa=self.kappa)

    def to_dict(self) -> dict:
        return {
            "lap": self.lap,
            "lambda": self.lam,
            "g": self.g.to_dict(),
            "phis": [p.to_dict() for p in self.phis],
            "r": self.r,
            "D0": self.D0,
        }


@dataclass(frozen=True)
class BranchSequence:
    """(a_0, ..., a_k): finite prefixes continued by a fixed tail, evaluated at x."""

    words: tuple[Word, ...]
    x: float
    tail: tuple[int, ...] = (1,)
    depth: int = 40

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(as_word(w) for w in self.words))
        if len(self.words) < 2:
            raise ValueError("need at least a_0 and a_1")

    @property
    def k(self) -> int:
        return len(self.words) - 1

    def extended(self) -> np.ndarray:
        """Rows a + tail + tail + ..., truncated to len(a) + depth symbols."""
        n = max(len(w) for w in self.words)
        if any(len(w) != n for w in self.words):
            raise ValueError("words must share one length")
        ext = list(itertools.islice(itertools.cycle(self.tail), self.depth))
        return np.array([list(w.symbols) + ext for w in self.words], dtype=np.int64)

    def distinct_at(self, n: int) -> bool:
        prefixes = {w.symbols[:n] for w in self.words}
        return len(prefixes) == len(self.words)


def _deriv_table(family: ParameterFamily, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d/dx S(x, a) for each row and x, for g and each phi; shape (1 + m, rows, x)."""
    sys = family.system()
    funcs = (family.g,) + family.phis
    return np.stack([sum_deriv_many(sys, rows, x, order=1, f=fn) for fn in funcs])


def tail_error(family: ParameterFamily, depth: int) -> float:
    """Bound on |d/dx S| lost by dropping symbols past the prefix plus ``depth``, per function."""
    sup1 = max([family.g.sup_bound(1)] + [p.sup_bound(1) for p in family.phis])
    return geometric_tail(family.lam, family.lap, depth, 1, sup1)


def g_matrix(family: ParameterFamily, seq: BranchSequence, precision: float = 1e-9):
    """Linear part (k x m) and offset (k) of t -> (S'(x, a_i; t) - S'(x, a_0; t))_i.

    Each entry is a difference of two truncated sums, so it is accurate to
    2 * tail_error; a ValueError is raised if that exceeds ``precision``.
    """
    err = 2.0 * tail_error(family, seq.depth)
    if err > precision:
        raise ValueError(f"tail error {err:.3g} exceeds precision {precision:.3g}; raise depth")
    tab = _deriv_table(family, seq.extended(), np.array([seq.x]))[:, :, 0]
    diff = tab[:, 1:] - tab[:, :1]  # (1 + m, k)
    return diff[1:].T.copy(), diff[0].copy()


def jacobian(linear) -> float:
    """Product of singular values, i.e. sqrt(det M M^T); 0 unless M has full row rank."""
    M = np.atleast_2d(np.asarray(linear, dtype=float))
    k, m = M.shape
    if k > m:
        return 0.0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0 or sv[-1] <= RANK_TOL * sv[0]:
        return 0.0
    return float(np.prod(sv))


@dataclass
class GenericResult:
    status: str  # "witness", "none" (search completed) or "budget"
    k: int
    witness: tuple[int, ...] | None = None
    jac: float = 0.0
    examined: int = 0

    @property
    def found(self) -> bool:
        return self.status == "witness"


def generic_check(
    family: ParameterFamily,
    n: int,
    x: float,
    words: Sequence,
    gamma: float,
    delta: float,
    k: int | None = None,
    budget: int = 10**5,
    depth: int = 40,
) -> list[GenericResult]:
    """Search index subsequences (b_0, ..., b_k) of ``words`` with Jac > delta.

    Checks every integer 0 < k < gamma * d, or only the requested k. Indices in
    a witness refer to ``words``; b_0 comes first.
    """
    words = [as_word(w) for w in words]
    d = len(words) - 1
    seq = BranchSequence(tuple(words), x, depth=depth)
    if not seq.distinct_at(n):
        raise ValueError(f"words must be pairwise distinct at prefix length {n}")
    ks = [k] if k is not None else [j for j in range(1, d + 1) if j < gamma * d]
    if any(not 1 <= j <= d for j in ks):
        raise ValueError("need 1 <= k <= d")
    tab = _deriv_table(family, seq.extended(), np.array([x]))[1:, :, 0].T  # (d+1, m)
    out = []
    for kk in ks:
        res = GenericResult("none", kk)
        for combo in itertools.combinations(range(d + 1), kk + 1):
            if res.examined >= budget:
                res.status = "budget"
                break
            res.examined += 1
            # Jac is unchanged by which member of the combination is the base
            J = jacobian(tab[list(combo[1:])] - tab[combo[0]])
            if J > delta:
                res.status, res.witness, res.jac = "witness", combo, J
                break
        out.append(res)
    return out


def p_of_q(q: int, lam: float, lap: int) -> int:
    """p(q) = [q log(lap/lam) / log lap] + 1, guarded against roundoff at integers."""
    v = q * math.log(lap / lam) / math.log(lap)
    return int(math.floor(v + 1e-9)) + 1


def check_condq(lam: float, lap: int, beta: float, N0: int, d0: int, n0: int) -> dict:
    """The three conditions linking N0, d0, n0 with lam, lap and the growth gap beta."""
    return {
        "contraction": lam ** (N0 - 1) * lap**2 < 1,
        "enough_words": d0 / (n0 + 1) > N0 + 1,
        "separation": (d0 + 1) * math.exp(-beta * n0 / 2) < 0.5,
        "ranges": N0 >= 2 and d0 >= 2 and n0 >= 1,
    }


def suggest_condq(lam: float, lap: int, beta: float, n0_max: int = 10**5) -> tuple[int, int, int]:
    """Smallest N0, then smallest n0 with the smallest admissible d0."""
    N0 = 2
    while lam ** (N0 - 1) * lap**2 >= 1:
        N0 += 1
    for n0 in range(1, n0_max + 1):
        d0 = (N0 + 1) * (n0 + 1) + 1
        if (d0 + 1) * math.exp(-beta * n0 / 2) < 0.5:
            return N0, d0, n0
    raise ValueError("no admissible n0 below n0_max")


@dataclass
class BadSetEstimate:
    q: int
    p: int
    N0: int
    trials: int
    hits: int
    estimate: float
    ci: tuple[float, float]
    threshold: float
    pairs_enumerated: int
    pairs_found: int
    sampled: bool
    bound_shape: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "p": self.p,
            "N0": self.N0,
            "trials": self.trials,
            "hits": self.hits,
            "measure_estimate": self.estimate,
            "ci": list(self.ci),
            "threshold": self.threshold,
            "pairs_enumerated": self.pairs_enumerated,
            "pairs_found": self.pairs_found,
            "sampled": self.sampled,
            "bound_shape": self.bound_shape,
            **self.extra,
        }


def _gram_jacobians(M: np.ndarray) -> np.ndarray:
    """sqrt(det M M^T) for a stack of k x m matrices."""
    gram = M @ np.swapaxes(M, -1, -2)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))


def bad_set_measure(
    family: ParameterFamily,
    q: int,
    N0: int,
    trials: int = 1000,
    seed: int = 0,
    width: float | None = None,
    budget: int = 10**7,
    depth: int = 40,
    tail: Sequence[int] = (1,),
    jac_min: float = 0.5,
    x_samples: int = 1,
) -> BadSetEstimate:
    """Fraction of t in [-1, 1]^m lying in some G^{-1}(box) with Jac > jac_min.

    The union runs over c in A^p(q) (x_c the left end of its interval, plus
    x_samples - 1 further equally spaced points of the interval) and
    sequences (b_0, ..., b_N0) of length-q words continued by ``tail``. The box
    has half-width 8 (lam/lap)^q alpha0 unless ``width`` overrides it.

    The Jacobian of a sequence does not depend on t, on the order of
    b_1..b_N0, or on which member is b_0 (changing the base is a unimodular
    change of coordinates), and repeated words give Jacobian 0. So the good
    sequences are found once as (c, word set) pairs; t is bad iff for some good
    pair a member b of the set has every other member within the box of b.
    When there are more than ``budget`` pairs, an equal number of random sets
    is drawn for every c and the estimate is flagged as sampled.
    """
    if q < 1 or N0 < 1 or x_samples < 1:
        raise ValueError("need q >= 1, N0 >= 1 and x_samples >= 1")
    p = p_of_q(q, family.lam, family.lap)
    thr = 8.0 * (family.lam / family.lap) ** q * family.alpha0 if width is None else float(width)
    bound = float(family.lap ** (q * (N0 + 1) + p)) * (family.lam / family.lap) ** (q * N0)
    rng = np.random.default_rng(seed)
    ts = rng.uniform(-1.0, 1.0, size=(trials, family.m))
    words = all_words(family.lap, q)
    nw = len(words)
    if nw < N0 + 1:
        return BadSetEstimate(q, p, N0, trials, 0, 0.0, _wilson(0, trials), thr, 0, 0, False, bound)

    ext = np.array(list(itertools.islice(itertools.cycle(tail), depth)), dtype=np.int64)
    rows = np.hstack([words, np.tile(ext, (nw, 1))])
    cs = all_words(family.lap, p)
    nc = len(cs) * x_samples
    xc = np.array([
        pc.left + pc.width * k / x_samples
        for pc in (partition_interval(family.lap, c) for c in cs)
        for k in range(x_samples)
    ])
    tab = _deriv_table(family, rows, xc)  # (1 + m, nw, nc)
    offset = tab[0].T  # (nc, nw)
    lin = np.transpose(tab[1:], (2, 1, 0))  # (nc, nw, m)

    n_sets = math.comb(nw, N0 + 1)
    sampled = nc * n_sets > budget
    if not sampled:
        all_sets = np.array(list(itertools.combinations(range(nw), N0 + 1)), dtype=np.int64)
    per_c = max(1, budget // nc)
    set_rng = np.random.default_rng([seed, 1])
    good_c, good_sets = [], []
    enumerated = 0
    for ci in range(nc):
        if sampled:
            sets = np.sort(
                np.array([set_rng.choice(nw, N0 + 1, replace=False) for _ in range(per_c)]), axis=1
            )
        else:
            sets = all_sets
        M = lin[ci][sets[:, 1:]] - lin[ci][sets[:, :1]]  # (n, N0, m)
        ok = _gram_jacobians(M) > jac_min
        enumerated += len(sets)
        good_sets.append(sets[ok])
        good_c.append(np.full(int(ok.sum()), ci))
    gc = np.concatenate(good_c)
    gs = np.concatenate(good_sets) if gc.size else np.zeros((0, N0 + 1), dtype=np.int64)

    hits = 0
    if gc.size:
        for t in ts:
            vals = (offset + lin @ t)[gc[:, None], gs]  # (n_good, N0 + 1)
            lo = vals.min(axis=1, keepdims=True)
            hi = vals.max(axis=1, keepdims=True)
            # some member b with every other member within thr of b
            centered = (vals - lo <= thr) & (hi - vals <= thr)
            hits += bool(centered.any())
    est = hits / trials
    log.info("q=%d p=%d: %d/%d parameters in the bad set", q, p, hits, trials)
    return BadSetEstimate(
        q, p, N0, trials, hits, est, _wilson(hits, trials), thr, enumerated, int(gc.size),
        sampled, bound, {"x_samples": x_samples},
    )


def _wilson(k: int, n: int) -> tuple[float, float]:
    iv = binomtest(k, n).proportion_ci(0.95, method="wilson")
    return float(iv.low), float(iv.high)
