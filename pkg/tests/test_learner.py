import math

import numpy as np
import pytest

import active_lab.learner as learner
from active_lab.geometry import DataDistribution, RandomSource, Stream, angle, unit_sphere
from active_lab.learner import (
    LearnerConfig,
    StreamStall,
    erm_zero_one,
    make_schedule,
    run_margin_active,
    run_passive,
)
from active_lab.oracle import SingleHypothesisOracle, TncParams

from .conftest import polar


def brute_force_min_error(X, y, center_angle, beta):
    """Min empirical error over the arc, by evaluating every cell between sign changes."""
    psi = np.arctan2(X[:, 1], X[:, 0])
    cuts = np.concatenate([psi + np.pi / 2, psi - np.pi / 2])
    rel = np.mod(cuts - center_angle + np.pi, 2 * np.pi) - np.pi
    rel = np.sort(rel[np.abs(rel) < beta])
    edges = np.concatenate([[-beta], rel, [beta]])
    best = len(y)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            w = polar(center_angle + (lo + hi) / 2)
            best = min(best, int(np.sum(y * (X @ w) < 0)))
    return best


def errors(X, y, w):
    return int(np.sum(y * (X @ w) < 0))


def test_schedule_t256():
    s = make_schedule(LearnerConfig(d=4, T=256, r=0.25))
    assert s.E == 4
    assert s.n_per_round == (64, 64, 64, 64)
    assert s.beta[:3] == pytest.approx([np.pi, 0.7853981633974483, 0.19634954084936207])
    assert s.b[0] == math.inf
    assert s.b[1] == pytest.approx(0.7853981633974483 * math.sqrt(12), abs=1e-12)
    assert s.b[1] == pytest.approx(2.7207, abs=1e-4)


def test_schedule_remainder_and_logconcave():
    s = make_schedule(LearnerConfig(d=2, T=1000, margin_rule="logconcave", c1=0.5))
    assert s.E == 4
    assert sum(s.n_per_round) == 1000 and s.n_per_round[-1] == 250
    assert s.b[2] == pytest.approx(0.5 * s.beta[2] * math.log2(1000))
    assert all(b2 == pytest.approx(0.25 * b1) for b1, b2 in zip(s.beta, s.beta[1:]))


def test_schedule_invariants_random_configs():
    r = np.random.default_rng(0)
    for _ in range(1000):
        cfg = LearnerConfig(d=int(r.integers(2, 20)), T=int(r.integers(4, 10**6)),
                            r=float(r.uniform(0.01, 0.49)))
        s = make_schedule(cfg)
        assert s.E >= 1 and s.E == math.floor(0.5 * math.log2(cfg.T))
        assert sum(s.n_per_round) == cfg.T
        assert len(s.b) == s.E and len(s.beta) == s.E + 1


def test_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(d=2, T=3)
    with pytest.raises(ValueError):
        LearnerConfig(d=2, T=16, r=0.5)
    with pytest.raises(ValueError):
        LearnerConfig(d=2, T=16, margin_rule="bogus")
    assert not LearnerConfig(d=2, T=16).in_guarantee_regime
    assert LearnerConfig(d=4, T=16).in_guarantee_regime
    assert LearnerConfig(d=2, T=16, r=0.25).alpha_in_regime(0.5)
    assert not LearnerConfig(d=2, T=16, r=0.25).alpha_in_regime(0.2)


def test_erm_singleton():
    w = erm_zero_one(np.array([[1.0, 0.0]]), np.array([1]), [0.0, 1.0], np.pi)
    assert w @ np.array([1.0, 0.0]) > 0


def test_erm_two_points_open_arc():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([1, -1])
    w = erm_zero_one(X, y, [0.0, -1.0], np.pi)
    assert w @ X[0] > 0 and w @ X[1] < 0
    assert errors(X, y, w) == 0


def test_erm_realizable(rng):
    w0 = polar(1.1)
    X = DataDistribution.uniform_ball(2).sample(100, rng)
    y = np.where(X @ w0 >= 0, 1, -1)
    w = erm_zero_one(X, y, polar(-2.0), np.pi)
    assert errors(X, y, w) == 0


def test_erm_invalid():
    with pytest.raises(ValueError):
        erm_zero_one(np.zeros((0, 2)), np.zeros(0), [1.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        erm_zero_one(np.ones((3, 2)), np.ones(3), [1.0, 0.0], 0.0)


@pytest.mark.parametrize("seed", range(25))
def test_erm_2d_matches_brute_force(seed):
    r = RandomSource(seed)
    n = 60
    X = DataDistribution.uniform_ball(2).sample(n, r)
    y = np.where(r.gen.random(n) < 0.3, -1, 1) * np.where(X @ polar(0.4) >= 0, 1, -1)
    c_ang = float(r.gen.uniform(-np.pi, np.pi))
    beta = float(r.gen.choice([0.05, 0.3, 1.0, np.pi]))
    w = erm_zero_one(X, y, polar(c_ang), beta)
    assert angle(w, polar(c_ang)) <= beta + 1e-12
    assert errors(X, y, w) == brute_force_min_error(X, y, c_ang, beta)


def test_erm_tie_break_prefers_center():
    # every w in the cone classifies this sample perfectly
    X = np.array([[0.0, 1.0]])
    w = erm_zero_one(X, np.array([1]), polar(1.2), 0.2)
    assert angle(w, polar(1.2)) < 1e-12


def test_erm_high_dim_close_to_best(rng):
    d, n = 3, 80
    wstar = unit_sphere(1, d, rng)[0]
    X = DataDistribution.uniform_ball(d).sample(n, rng.spawn(1))
    y = np.where(rng.gen.random(n) < 0.1, -1, 1) * np.where(X @ wstar >= 0, 1, -1)
    c = unit_sphere(1, d, rng.spawn(2))[0]
    w = erm_zero_one(X, y, c, np.pi, rng.spawn(3), budget=128)
    # dense random search as a reference
    cands = unit_sphere(200_000, d, rng.spawn(4))
    ref = np.min(np.sum(y[:, None] * (X @ cands.T) < 0, axis=0))
    assert errors(X, y, w) <= ref
    assert abs(np.linalg.norm(w) - 1) < 1e-12


def test_erm_high_dim_respects_cone(rng):
    d = 5
    X = DataDistribution.gaussian(d).sample(200, rng)
    y = np.where(X[:, 0] >= 0, 1, -1)
    c = unit_sphere(1, d, rng.spawn(1))[0]
    for beta in (0.05, 0.4, 1.5):
        w = erm_zero_one(X, y, c, beta, rng.spawn(2))
        assert angle(w, c) <= beta + 1e-9


def _setup(alpha=0.5, mu0=0.25, d=2, seed=0):
    rng = RandomSource(seed)
    ws = unit_sphere(1, d, rng.spawn(9))[0]
    return rng, ws, SingleHypothesisOracle(ws, TncParams(alpha, mu0))


def test_run_invariants():
    cfg = LearnerConfig(d=2, T=4096)
    rng, ws, o = _setup()
    sched = make_schedule(cfg)
    seen = []

    def hook(k, X, y, w_prev, w_new):
        b = sched.b[k - 1]
        assert np.all(np.abs(X @ w_prev) <= b)
        assert angle(w_new, w_prev) <= sched.beta[k - 1] + 1e-12
        seen.append(len(X))

    w, tr = run_margin_active(cfg, o, DataDistribution.uniform_ball(2), rng, truth=ws, on_round=hook)
    assert tr.labels_used == sum(seen) <= cfg.T
    assert tr.rounds[0].stream_seen == tr.rounds[0].labels_used == sched.n_per_round[0]
    betas = [r.beta for r in tr.rounds]
    assert all(b2 == pytest.approx(cfg.r * b1) and b2 < b1 for b1, b2 in zip(betas, betas[1:]))
    assert all(r.angle_to_truth is not None for r in tr.rounds)
    assert tr.out_of_regime


def test_run_without_truth_has_no_angles():
    rng, _, o = _setup()
    _, tr = run_margin_active(LearnerConfig(d=2, T=64), o, DataDistribution.uniform_ball(2), rng)
    assert all(r.angle_to_truth is None for r in tr.rounds)


def test_budget_random_configs():
    r = np.random.default_rng(1)
    for i in range(30):
        d = int(r.integers(2, 5))
        T = int(r.integers(4, 3000))
        cfg = LearnerConfig(d=d, T=T, r=float(r.uniform(0.1, 0.45)), erm_budget=16)
        rng, _, o = _setup(d=d, seed=i)
        _, tr = run_margin_active(cfg, o, DataDistribution.uniform_ball(d), rng)
        assert tr.labels_used <= T


def test_determinism():
    cfg = LearnerConfig(d=3, T=512, erm_budget=32)
    outs = []
    for _ in range(2):
        rng, ws, o = _setup(d=3, seed=42)
        outs.append(run_margin_active(cfg, o, DataDistribution.gaussian(3), rng, truth=ws))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert outs[0][1] == outs[1][1]


def test_stream_stall(monkeypatch):
    monkeypatch.setattr(learner, "STALL_FACTOR", 3)
    xs = Stream(DataDistribution.uniform_ball(2).sample, RandomSource(0), block=16)
    with pytest.raises(StreamStall) as exc:
        learner._collect(xs, np.array([1.0, 0.0]), 1e-9, 2, round_index=5)
    assert exc.value.round_index == 5


def test_noiseless_active_beats_passive():
    wins = 0
    for tr in range(100):
        rng, ws, o = _setup(mu0=1e6, seed=1000 + tr)
        cfg = LearnerConfig(d=2, T=1024)
        dist = DataDistribution.uniform_ball(2)
        a = angle(run_margin_active(cfg, o, dist, rng)[0], ws)
        p = angle(run_passive(cfg, o, dist, rng), ws)
        wins += a < p
    assert wins >= 60


def test_passive_realizable_accuracy():
    good = 0
    for tr in range(100):
        rng, ws, o = _setup(mu0=1e6, seed=2000 + tr)
        good += angle(run_passive(LearnerConfig(d=2, T=500), o, DataDistribution.uniform_ball(2), rng), ws) < 0.1
    assert good >= 95


def test_passive_errors_and_determinism():
    rng, _, o = _setup()
    cfg = LearnerConfig(d=2, T=64)
    dist = DataDistribution.uniform_ball(2)
    with pytest.raises(ValueError):
        run_passive(cfg, o, dist, rng, T=0)
    assert np.array_equal(run_passive(cfg, o, dist, RandomSource(8)), run_passive(cfg, o, dist, RandomSource(8)))


def test_first_round_contains_truth():
    cfg = LearnerConfig(d=2, T=4096, r=0.25)
    beta1 = make_schedule(cfg).beta[1]
    hits = 0
    for tr in range(200):
        rng, ws, o = _setup(seed=3000 + tr)
        _, trace = run_margin_active(cfg, o, DataDistribution.uniform_ball(2), rng, truth=ws)
        hits += trace.rounds[0].angle_to_truth <= beta1
    assert hits >= 180
