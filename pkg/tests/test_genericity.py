import math

import numpy as np
import pytest

from solenoid.dynamics import Word, branch_sum_deriv
from solenoid.genericity import (
    BranchSequence,
    ParameterFamily,
    bad_set_measure,
    check_condq,
    g_matrix,
    generic_check,
    jacobian,
    p_of_q,
    suggest_condq,
)
from solenoid.trigpoly import TrigPoly


def slab_jacobian(M, n=400_000, seed=0):
    """Leb_k([0,1]^k) / Leb_k(G^{-1}([0,1]^k) restricted to Ker^perp), by rejection sampling."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(M.T)  # orthonormal basis of the row space = Ker^perp
    A = M @ Q
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    pre = np.linalg.solve(A, corners.T).T
    lo, hi = pre.min(axis=0), pre.max(axis=0)
    w = rng.uniform(lo, hi, size=(n, 2))
    img = w @ A.T
    inside = np.all((img >= 0) & (img <= 1), axis=1).mean()
    return 1.0 / (inside * np.prod(hi - lo))


def plain_deriv(family, t, word, x):
    return branch_sum_deriv(family.system(t), word, x, 1)


@pytest.fixture
def fam2():
    return ParameterFamily(2, 0.5, TrigPoly.zero(), (TrigPoly.cos(1), TrigPoly.sin(1)))


def test_family_basics():
    fam = ParameterFamily.fourier(2, 0.5, 4, g=TrigPoly.cos(3, 0.1))
    assert fam.m == 4
    assert fam.D0 == pytest.approx(2 * (2 * math.pi) ** 3 + 2 * (4 * math.pi) ** 3, rel=1e-6)
    ft = fam.f_t([0.5, 0, 0, -1])
    x = np.linspace(0, 1, 7)
    expect = 0.1 * np.cos(6 * np.pi * x) + 0.5 * np.cos(2 * np.pi * x) - np.sin(4 * np.pi * x)
    np.testing.assert_allclose(ft(x), expect, atol=1e-14)
    # every member of the family fits under the shared kappa
    assert ft.cnorm_bound(3) <= fam.kappa
    with pytest.raises(ValueError):
        fam.f_t([1, 2])


def test_zero_directions_give_zero_linear_part():
    fam = ParameterFamily(2, 0.5, TrigPoly.cos(1), (TrigPoly.zero(), TrigPoly.zero()))
    lin, off = g_matrix(fam, BranchSequence(((1, 2), (2, 1), (2, 2)), 0.3))
    assert np.all(lin == 0)
    assert np.any(off != 0)


def test_offset_is_plain_derivative_difference():
    fam = ParameterFamily.fourier(3, 0.6, 2, g=TrigPoly.cos(2, 0.3))
    words = [(1, 3), (2, 2), (3, 1)]
    x = 0.41
    _, off = g_matrix(fam, BranchSequence(tuple(words), x, depth=60))
    # finite words vs tails of 1s: the tail is below 1e-12 at this depth
    ext = [Word(w + (1,) * 60) for w in words]
    base = plain_deriv(fam, None, ext[0], x)
    expect = [plain_deriv(fam, None, w, x) - base for w in ext[1:]]
    np.testing.assert_allclose(off, expect, atol=1e-12)


def test_linear_part_matches_finite_differences(fam2):
    seq = BranchSequence(((1, 2, 1), (2, 1, 1), (2, 2, 2)), 0.17)
    lin, _ = g_matrix(fam2, seq)
    ext = [Word(w.symbols + (1,) * 40) for w in seq.words]
    h = 1e-5
    fd = np.zeros_like(lin)
    for j in range(2):
        tp = np.zeros(2)
        tm = np.zeros(2)
        tp[j], tm[j] = h, -h
        for i in range(1, 3):
            dp = plain_deriv(fam2, tp, ext[i], seq.x) - plain_deriv(fam2, tp, ext[0], seq.x)
            dm = plain_deriv(fam2, tm, ext[i], seq.x) - plain_deriv(fam2, tm, ext[0], seq.x)
            fd[i - 1, j] = (dp - dm) / (2 * h)
    np.testing.assert_allclose(lin, fd, atol=1e-7)


def test_affinity():
    fam = ParameterFamily.fourier(2, 0.5, 4, g=TrigPoly.sin(1, 0.4))
    seq = BranchSequence(((1, 1), (1, 2), (2, 1)), 0.73)
    lin, off = g_matrix(fam, seq)
    ext = [Word(w.symbols + (1,) * 40) for w in seq.words]
    rng = np.random.default_rng(3)

    def G(t):
        d = [plain_deriv(fam, t, w, seq.x) for w in ext]
        return np.array(d[1:]) - d[0]

    for _ in range(10):
        t1, t2 = rng.uniform(-1, 1, (2, 4))
        np.testing.assert_allclose(G(t1) - G(t2), lin @ (t1 - t2), atol=1e-10)
        np.testing.assert_allclose(G(t1), lin @ t1 + off, atol=1e-10)


def test_tail_precision_error(fam2):
    with pytest.raises(ValueError):
        g_matrix(fam2, BranchSequence(((1,), (2,)), 0.1, depth=2))


def test_jacobian_closed_forms():
    assert jacobian(np.eye(3)) == pytest.approx(1.0)
    assert jacobian([[2.0]]) == 2.0
    assert jacobian([[1.0, 2.0], [2.0, 4.0]]) == 0.0
    assert jacobian(np.zeros((2, 3))) == 0.0
    assert jacobian(np.ones((3, 2))) == 0.0


def test_jacobian_invariances():
    rng = np.random.default_rng(11)
    for _ in range(20):
        M = rng.standard_normal((2, 4))
        th = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        assert jacobian(R @ M) == pytest.approx(jacobian(M), rel=1e-12)
        S = M.copy()
        S[1] *= 3.5
        assert jacobian(S) == pytest.approx(3.5 * jacobian(M), rel=1e-12)


def test_jacobian_matches_slab_measure():
    rng = np.random.default_rng(5)
    for i in range(5):
        M = rng.standard_normal((2, 3))
        assert jacobian(M) == pytest.approx(slab_jacobian(M, seed=i), rel=0.02)


def test_preimage_measure_bound():
    # Leb(G^-1(Y) in [-1,1]^m) <= C0(m, k) Leb(Y) / Jac with C0 = diam^(m-k)
    rng = np.random.default_rng(8)
    for m, k in ((1, 1), (2, 1), (3, 2)):
        C0 = (2 * math.sqrt(m)) ** (m - k)
        for _ in range(5):
            M = rng.standard_normal((k, m))
            b = rng.standard_normal(k) * 0.3
            lo = rng.uniform(-1, 0.5, k)
            Y = np.stack([lo, lo + 0.5])
            t = rng.uniform(-1, 1, (200_000, m))
            img = t @ M.T + b
            frac = np.all((img >= Y[0]) & (img <= Y[1]), axis=1).mean()
            measure = frac * 2.0**m
            assert measure <= C0 * 0.5**k / jacobian(M) + 3 * 2.0**m * math.sqrt(frac / t.shape[0])


def test_generic_check_zero_family():
    fam = ParameterFamily(2, 0.5, TrigPoly.cos(1), (TrigPoly.zero(),) * 3)
    words = [(1, 1), (1, 2), (2, 1), (2, 2)]
    for res in generic_check(fam, 2, 0.3, words, 1.0, 1e-9):
        assert res.status == "none"


def test_generic_check_single_row_is_row_norm(fam2):
    words = [(1, 2), (2, 1)]
    lin, _ = g_matrix(fam2, BranchSequence(tuple(words), 0.6))
    norm = float(np.linalg.norm(lin[0]))
    res = generic_check(fam2, 2, 0.6, words, 1.0, 0.99 * norm, k=1)[0]
    assert res.found and res.jac == pytest.approx(norm, rel=1e-12)
    assert not generic_check(fam2, 2, 0.6, words, 1.0, 1.01 * norm, k=1)[0].found


def test_fourier_family_single_symbol():
    fam = ParameterFamily.fourier(2, 0.5, 4)
    for x in np.linspace(0, 1, 9, endpoint=False):
        res = generic_check(fam, 1, x, [(1,), (2,)], 1 / 2, 1 / 2, k=1)[0]
        assert res.found and res.jac > 0.5


def test_generic_check_budget_and_validation(fam2):
    words = [(1, 1), (1, 2), (2, 1), (2, 2)]
    res = generic_check(fam2, 2, 0.3, words, 1.0, 1e9, k=2, budget=2)[0]
    assert res.status == "budget" and res.examined == 2
    with pytest.raises(ValueError):
        generic_check(fam2, 1, 0.3, words, 1.0, 0.1)


def test_p_of_q_and_constants():
    assert [p_of_q(q, 0.5, 2) for q in (1, 2, 3, 4)] == [3, 5, 7, 9]
    assert p_of_q(5, 0.6, 3) == math.floor(5 * math.log(5) / math.log(3)) + 1
    N0, d0, n0 = suggest_condq(0.5, 2, 0.2)
    assert N0 == 4
    assert all(check_condq(0.5, 2, 0.2, N0, d0, n0).values())
    assert not check_condq(0.5, 2, 0.2, 3, d0, n0)["contraction"]


def test_bad_set_empty_and_saturated():
    fam = ParameterFamily.fourier(2, 0.5, 4)
    empty = bad_set_measure(fam, 2, 4, trials=50)
    assert empty.estimate == 0.0 and empty.pairs_found == 0
    full = bad_set_measure(fam, 3, 2, trials=50, width=np.inf)
    assert full.estimate == 1.0
    assert full.ci[0] <= 1.0 <= full.ci[1] + 1e-12


def test_bad_set_monotone_in_width():
    fam = ParameterFamily.fourier(2, 0.5, 4)
    ests = [bad_set_measure(fam, 3, 2, trials=300, seed=4, width=w).estimate for w in (1e-3, 0.01, 0.05, 0.1, 0.5)]
    assert all(b >= a for a, b in zip(ests, ests[1:]))
    assert ests[0] < ests[2] < ests[-1]


def test_bad_set_sampling_flag_and_determinism():
    fam = ParameterFamily.fourier(2, 0.5, 4)
    a = bad_set_measure(fam, 3, 2, trials=100, seed=9, width=4.0, budget=500)
    b = bad_set_measure(fam, 3, 2, trials=100, seed=9, width=4.0, budget=500)
    assert a.sampled and a.to_dict() == b.to_dict()
    assert a.bound_shape == pytest.approx(2.0 ** (3 * 3 + 7) * 0.25 ** 6)


def test_bad_set_extra_x_samples_only_grow_the_union():
    fam = ParameterFamily.fourier(2, 0.5, 4)
    one = bad_set_measure(fam, 3, 2, trials=200, seed=5, width=0.05)
    three = bad_set_measure(fam, 3, 2, trials=200, seed=5, width=0.05, x_samples=3)
    assert three.pairs_enumerated == 3 * one.pairs_enumerated
    assert three.hits >= one.hits and three.to_dict()["x_samples"] == 3
    with pytest.raises(ValueError):
        bad_set_measure(fam, 3, 2, x_samples=0)
