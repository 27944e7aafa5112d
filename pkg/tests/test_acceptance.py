"""Acceptance suite: one PASS/FAIL line per criterion at the contracted tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines.
Nothing here is tuned to pass; a failing line reflects a measured outcome.
"""
import math

import numpy as np
import pytest

from active_lab.geometry import DataDistribution, RandomSource, unit_sphere
from active_lab.harness import ExperimentConfig, run_paired, run_sweep
from active_lab.learner import LearnerConfig, make_schedule, run_margin_active
from active_lab.lowerbound import (
    band_points,
    build_packing,
    certify,
    cosine_identity_residual,
    verify_separation,
)
from active_lab.oracle import AdversarialOracle, SingleHypothesisOracle, TncParams, kl_bernoulli, tnc_slack
from active_lab.risk import excess_risk_exact_2d, excess_risk_mc

SEED = 1
T_GRID = [2**k for k in range(9, 15)]


@pytest.fixture
def report(capsys):
    def _report(tag, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {tag}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return _report


def _sweep_cfg(alpha, **kw):
    raw = dict(experiment="sweep", learner={"d": 2, "T": T_GRID[0], "r": 0.25},
               oracle={"alpha": alpha, "mu0": 0.25}, T_grid=T_GRID, trials=100, seed=SEED)
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


@pytest.mark.slow
@pytest.mark.parametrize("alpha,lo,hi", [(0.5, -1.30, -0.70), (0.7, -0.93, -0.50)])
def test_c1_rate_exponent(report, alpha, lo, hi):
    res = run_sweep(_sweep_cfg(alpha))
    ok = lo <= res.slope <= hi
    report(f"C1 rate alpha={alpha}", ok, f"slope {res.slope:.3f}, band [{lo}, {hi}], target {res.target:.3f}")
    assert ok


@pytest.mark.slow
def test_c2_active_vs_passive(report):
    res = run_paired(_sweep_cfg(0.5, experiment="paired", T_grid=[4096]))
    ok = res.median_active <= res.median_passive and res.p_value < 0.05
    report("C2 active vs passive", ok,
           f"median active {res.median_active:.3e}, passive {res.median_passive:.3e}, "
           f"wins {res.active_wins}/{res.n_untied}, p={res.p_value:.3g}")
    assert ok


def test_c3_packing_invariants(report):
    bad = []
    for d in (2, 4, 8, 16, 32):
        for t in (0.01, 0.05):
            p = build_packing(d, t)
            rep = verify_separation(p)
            resid = cosine_identity_residual(p)
            if not (rep.passed and t <= rep.min_angle and rep.max_angle <= 6.5 * t
                    and p.codewords.log2_size >= 0.0625 * d and resid <= 1e-12):
                bad.append((d, t))
    ok = not bad
    report("C3 packing invariants", ok, f"failures {bad}" if bad else "10 (d, t) cases")
    assert ok


def test_c4_kl_certification(report):
    notes = []
    ok = True
    for alpha in (0.5, 0.7):
        p = TncParams(alpha, 0.25 if alpha == 0.5 else 0.1)
        c = certify(4, 1000, p, n_samples=100_000, rng=RandomSource(SEED))
        ok &= c.passed and c.kl_numeric_sup <= c.kl_per_query and c.gamma < 0.125
        notes.append(f"alpha={alpha}: t={c.t:.3e} sup={c.kl_numeric_sup:.2e} <= {c.kl_per_query:.2e}, "
                     f"gamma={c.gamma:.4f}")
    g = np.linspace(-0.25, 0.25, 201)
    P, Q = np.meshgrid(g, g)
    grid_ok = bool(np.all(kl_bernoulli(0.5 - P, 0.5 - Q) <= 8 * (P - Q) ** 2 + 1e-15))
    ok &= grid_ok
    report("C4 KL certification", ok, "; ".join(notes) + f"; quadratic grid {'ok' if grid_ok else 'violated'}")
    assert ok


def test_c5_risk_oracle_agreement(report):
    r = RandomSource(SEED).spawn(5)
    disk = DataDistribution.uniform_ball(2)
    worst = 0.0
    ok = True
    for k in range(20):
        alpha = float(r.gen.uniform(0.1, 0.9))
        mu0 = float(r.gen.uniform(0.05, 1.0))
        th = float(r.gen.uniform(0.0, math.pi))
        p = TncParams(alpha, mu0)
        est = excess_risk_mc(np.array([math.cos(th), math.sin(th)]), SingleHypothesisOracle([1.0, 0.0], p),
                             disk, 10**6, r.spawn(k))
        z = abs(est.value - excess_risk_exact_2d(th, p)) / est.std_error
        worst = max(worst, z)
        ok &= z <= 3
    report("C5 MC vs exact excess", ok, f"worst |diff|/se = {worst:.2f} over 20 configs")
    assert ok


def test_c6_tnc_by_construction(report):
    rng = RandomSource(SEED).spawn(6)
    p = TncParams(0.5, 0.25)
    d = 4
    single = SingleHypothesisOracle(unit_sphere(1, d, rng)[0], p)
    s_min = tnc_slack(single, unit_sphere(100_000, d, rng.spawn(1))).min()
    t = 0.005
    pk = build_packing(d, t)
    a_min = np.inf
    for i in range(len(pk)):
        o = AdversarialOracle.from_packing(pk, i, p)
        x = np.vstack([unit_sphere(50_000, d, rng.spawn(2, i)), band_points(pk.hypotheses[0], t, 50_000, rng.spawn(3, i))])
        a_min = min(a_min, tnc_slack(o, x).min())
    ok = s_min >= -1e-12 and a_min >= -1e-12
    report("C6 noise condition", ok, f"min slack single {s_min:.2e}, adversarial {a_min:.2e}")
    assert ok


def test_c7_schedule(report):
    s = make_schedule(LearnerConfig(d=4, T=256, r=0.25))
    sched_ok = s.E == 4 and s.n_per_round == (64,) * 4 and abs(s.b[1] - 2.7207) <= 1e-4
    r = np.random.default_rng(SEED)
    over = 0
    for i in range(1000):
        d = int(r.integers(2, 5))
        T = int(r.integers(4, 2049))
        cfg = LearnerConfig(d=d, T=T, r=float(r.uniform(0.05, 0.45)), erm_budget=8)
        rng = RandomSource(SEED).spawn(7, i)
        o = SingleHypothesisOracle(unit_sphere(1, d, rng.spawn(9))[0], TncParams(0.5, 0.25))
        _, tr = run_margin_active(cfg, o, DataDistribution.uniform_ball(d), rng)
        over += tr.labels_used > T
    ok = sched_ok and over == 0
    report("C7 schedule", ok, f"E={s.E}, n={s.n_per_round[0]}, b1={s.b[1]:.4f}; budget overruns {over}/1000")
    assert ok


@pytest.mark.slow
def test_c8_logconcave_trend(report):
    cfg = ExperimentConfig.from_dict(dict(
        experiment="sweep", learner={"d": 4, "T": 512, "r": 0.25, "margin_rule": "logconcave", "c1": 1.0},
        oracle={"alpha": 0.5, "mu0": 0.25}, distribution="gaussian", T_grid=[2**9, 2**13], trials=50, seed=SEED))
    means = dict(run_sweep(cfg).mean_excess())
    ok = means[2**13] < means[2**9]
    report("C8 log-concave trend", ok, f"mean excess T=2^9 {means[2**9]:.4e}, T=2^13 {means[2**13]:.4e}")
    assert ok
