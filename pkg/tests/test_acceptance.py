"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary (see conftest.py) and,
with ``-s``, as each check finishes.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from solenoid import cli
from solenoid.dynamics import SystemParams, branch_sum_ext, partition_interval, word_point
from solenoid.genericity import ParameterFamily, bad_set_measure, jacobian, suggest_condq
from solenoid.sobolev import SobolevSpec, l2_inner, regularity_sweep, sample_field, ws_norm, ws_norms
from solenoid.transfer import apply_P, birkhoff_histogram, sbr_density, smooth_bump
from solenoid.transversality import default_grid_step, e_qp
from solenoid.trigpoly import TrigPoly

from oracles import dense_count_fast, in_set_definition, preimage_in_word
from test_genericity import slab_jacobian
from test_sobolev import gauss_field, trig_field, trig_field_dx, trig_field_dy

RESULTS: list[str] = []


def record(n: int, ok: bool, detail: str, elapsed: float | None = None) -> None:
    tail = f" [{elapsed:.1f}s]" if elapsed is not None else ""
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}{tail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_word_point_oracle():
    t0 = time.time()
    rng = np.random.default_rng(1)
    worst = 0.0
    members = True
    for i in range(1000):
        lap = (2, 3)[i % 2]
        n = int(rng.integers(1, 5))
        a = tuple(int(s) for s in rng.integers(1, lap + 1, n))
        x = float(rng.random())
        y = word_point(lap, a, x)
        worst = max(worst, abs(y - float(preimage_in_word(lap, a, Fraction(x)))))
        members &= in_set_definition(lap, a, Fraction(y))
    dt = time.time() - t0
    ok = worst <= 1e-15 and members and dt < 10
    record(1, ok, f"max |word_point - brute force| = {worst:.1e}, exact membership {members}", dt)


def test_criterion_02_derivative_bound():
    rng = np.random.default_rng(2)
    systems = [
        SystemParams(2, 0.5, TrigPoly.cos(1)),
        SystemParams(3, 0.6, TrigPoly((0.2, 0.5, -0.3), (0.7, 0.1))),
        SystemParams(4, 0.9, TrigPoly.sin(2, 0.4)),
    ]
    worst = -math.inf
    ratio = 0.0
    for _ in range(1000):
        p = systems[rng.integers(len(systems))]
        a = tuple(int(s) for s in rng.integers(1, p.lap + 1, int(rng.integers(1, 12))))
        c = tuple(int(s) for s in rng.integers(1, p.lap + 1, int(rng.integers(1, 4))))
        nu = int(rng.integers(0, p.r + 1))
        x = rng.uniform(*partition_interval(p.lap, c, star=True).bounds)
        val = branch_sum_ext(p, c, a, x, nu, lifted=True)
        worst = max(worst, p.lap**nu * abs(val) - p.alpha0)
        ratio = max(ratio, p.lap**nu * abs(val) / p.alpha0)
    record(2, worst <= 1e-9, f"max lap^nu |S_c^(nu)| / alpha0 = {ratio:.4f} over 1000 samples")


def _oracle_points(params, q, p):
    # dyadic grid twice as fine as the default step, at least 2049 points
    w = 3.0 * params.lap ** (-p)
    k = math.ceil(math.log2(2 * w / default_grid_step(params, q)))
    return max(2049, 2**k + 1)


def test_criterion_03_bracket_soundness():
    t0 = time.time()
    cases = [(2, 0.5, 14), (3, 0.6, 8)]  # lap^(q+p) <= 2^14
    bad = []
    n_inst = 0
    for lap, lam, qp_max in cases:
        cos = SystemParams(lap, lam, TrigPoly.cos(1))
        zero = SystemParams(lap, lam, TrigPoly.zero(), kappa=1.0)
        for q in range(1, qp_max):
            for p in range(1, qp_max - q + 1):
                n_inst += 1
                rep = e_qp(cos, q, p)
                npts = _oracle_points(cos, q, p)
                oracle = max(
                    dense_count_fast(cos, q, c, npts)
                    for c in itertools.product(range(1, lap + 1), repeat=p)
                )
                if not rep.e_lower <= oracle <= rep.e_upper:
                    bad.append(("cos", lap, q, p, rep.e_lower, oracle, rep.e_upper))
                rz = e_qp(zero, q, p)
                if not rz.e_lower == rz.e_upper == lap**q:
                    bad.append(("zero", lap, q, p, rz.e_lower, lap**q, rz.e_upper))
    dt = time.time() - t0
    ok = not bad and dt < 300
    record(3, ok, f"{n_inst} (lap, q, p) instances for f=cos and f=0, {len(bad)} violations {bad[:3]}", dt)


def test_criterion_04_mass_conservation():
    p = SystemParams(3, 0.6, TrigPoly.cos(1))
    h = smooth_bump(p, 256, 256)
    m0 = h.mass()
    for _ in range(100):
        h = apply_P(p, h)
    drift = abs(h.mass() - m0)
    record(4, drift < 1e-7, f"mass drift after 100 steps = {drift:.2e}")


def test_criterion_05_sbr_cross_validation():
    t0 = time.time()
    p = SystemParams(3, 0.6, TrigPoly.cos(1))
    psi = sbr_density(p, 256, 256, tol=1e-8)
    hist = birkhoff_histogram(p, 256, 256, n_points=10**7, seed=0)
    d = psi.l1_distance(hist)
    dt = time.time() - t0
    ok = d <= 0.05 and psi.meta["converged"] and dt < 300
    record(5, ok, f"L1(P-fixed density, Birkhoff histogram) = {d:.4f} (limit 0.05)", dt)


def test_criterion_06_sobolev_correctness():
    spec = SobolevSpec(0.0, 4.0, (64, 256))
    h = sample_field(spec, gauss_field)
    w0 = ws_norm(spec, h)
    l2 = math.sqrt(l2_inner(h, h))
    e0 = abs(w0 - math.sqrt(2) * l2)

    g = sample_field(spec, trig_field)
    fine = sample_field(spec, trig_field, 256, 2048)
    dx = sample_field(spec, trig_field_dx, 256, 2048)
    dy = sample_field(spec, trig_field_dy, 256, 2048)
    oracle = l2_inner(fine, fine) + l2_inner(dx, dx) + l2_inner(dy, dy)
    e1 = abs(ws_norm(spec.with_s(1), g) ** 2 / oracle - 1)

    orders = np.linspace(0, 3, 31)
    norms = ws_norms(spec, h, orders)
    mono = bool(np.all(np.diff(norms) >= 0))
    ok = e0 <= 1e-8 and e1 <= 1e-6 and mono
    record(6, ok, f"|W0 - sqrt2 L2| = {e0:.1e}, W1 rel err = {e1:.1e}, monotone in s: {mono}")


def test_criterion_07_regime_diagnostic():
    t0 = time.time()
    grids = (64, 128, 256, 512)
    smooth = SystemParams(4, 0.7, TrigPoly.cos(1), s=0.4)
    degen = SystemParams(4, 0.7, TrigPoly.zero(), s=0.4, kappa=1.0)
    r1 = regularity_sweep(smooth, SobolevSpec.for_system(smooth, 0.4), grids)
    r0 = regularity_sweep(degen, SobolevSpec.for_system(degen, 0.4), grids)
    dt = time.time() - t0
    ok = r1.bounded and r1.last_ratio < 1.2 and r0.last_ratio > 2 and not r0.bounded and dt < 900
    record(
        7,
        ok,
        f"regime {smooth.regime:.3f}; f=cos last ratio {r1.last_ratio:.5f} (< 1.2), "
        f"f=0 last ratio {r0.last_ratio:.4f} (> 2)",
        dt,
    )


def test_criterion_08_jacobian_oracle():
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(20):
        M = rng.standard_normal((2, 3))
        worst = max(worst, abs(jacobian(M) / slab_jacobian(M, seed=100 + i) - 1))
    record(8, worst <= 0.02, f"max relative deviation from slab measure = {worst:.4f}")


def test_criterion_09_bad_set_decay():
    t0 = time.time()
    fam = ParameterFamily.fourier(2, 0.5, 4)
    N0, _, _ = suggest_condq(0.5, 2, 0.2)
    est = [bad_set_measure(fam, q, N0, trials=1000, seed=0).estimate for q in (2, 3, 4)]
    dt = time.time() - t0
    nonincr = all(b <= a for a, b in zip(est, est[1:]))
    factor = est[2] * 2 <= est[0] and est[0] > 0
    ok = nonincr and factor and dt < 600
    record(9, ok, f"N0={N0}, estimates q=2,3,4: {est}; non-increasing {nonincr}, halved {factor}", dt)


SMOKE = [
    "transversality.q_max=2",
    "transversality.p_max=3",
    "density.grids=[32,64]",
    "sobolev.grids=[32,64]",
    "spectrum.grid=[24,24]",
    "correlations.orbit_len=20000",
    "correlations.n_chains=50",
    "correlations.burn_in=100",
    "correlations.grid=[24,24]",
    "genericity.q_range=[2,3]",
    "genericity.N0=2",
    "genericity.trials=50",
]


def test_criterion_10_determinism(tmp_path):
    dirs = [tmp_path / "run1", tmp_path / "run2"]
    codes = []
    for d in dirs:
        for sub in cli.SUBCOMMANDS:
            codes.append(cli.run(sub, None, SMOKE, str(d)))
    names = sorted(p.name for p in dirs[0].iterdir() if p.suffix in (".csv", ".json"))
    same = names == sorted(p.name for p in dirs[1].iterdir() if p.suffix in (".csv", ".json"))
    diff = [n for n in names if (dirs[0] / n).read_bytes() != (dirs[1] / n).read_bytes()]
    ok = same and not diff and set(codes) == {0} and len(names) > 0
    record(10, ok, f"{len(names)} CSV/JSON files, exit codes {sorted(set(codes))}, differing: {diff}")

