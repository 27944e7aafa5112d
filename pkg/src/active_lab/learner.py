"""Margin-based active learning of homogeneous halfspaces, plus a passive baseline.

The active learner splits a label budget ``T`` evenly over ``E = floor(log2(T)/2)``
rounds.  Round ``k`` only pays for labels of stream points inside the band
``|w_{k-1} . x| <= b_{k-1}`` and then minimizes the empirical 0/1 error over
the cone of half-angle ``beta_{k-1} = r^(k-1) pi`` around the previous
estimate.  Neither the schedule nor the band depends on the noise level.

All logarithms in the schedules are base 2.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import (
    DataDistribution,
    RandomSource,
    Stream,
    angle,
    sample_in_cone,
    unit,
    unit_sphere,
)
from .oracle import LabelOracle, labels_from_uniforms

MARGIN_RULES = ("uniform", "logconcave")
STALL_FACTOR = 10_000


class StreamStall(RuntimeError):
    """Raised when a round rejects too many consecutive stream points."""

    def __init__(self, round_index: int, rejected: int):
        super().__init__(f"round {round_index}: {rejected} consecutive stream points rejected")
        self.round_index = round_index
        self.rejected = rejected


@dataclass(frozen=True)
class LearnerConfig:
    d: int
    T: int
    delta: float = 0.1
    r: float = 0.25
    margin_rule: str = "uniform"
    c1: float = 1.0
    erm_budget: int = 256

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.T < 4:
            raise ValueError(f"label budget T must be >= 4, got {self.T}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.r < 0.5:
            raise ValueError("shrinkage rate r must lie in (0, 1/2)")
        if self.margin_rule not in MARGIN_RULES:
            raise ValueError(f"margin_rule must be one of {MARGIN_RULES}")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        if self.erm_budget < 1:
            raise ValueError("erm_budget must be >= 1")

    @property
    def in_guarantee_regime(self) -> bool:
        """The uniform rule is only covered by the guarantee for d >= 4."""
        return self.margin_rule != "uniform" or self.d >= 4

    def alpha_in_regime(self, alpha: float) -> bool:
        return alpha >= 1.0 / (1.0 + math.log2(1.0 / self.r))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, cfg: dict) -> "LearnerConfig":
        known = {k: cfg[k] for k in cls.__dataclass_fields__ if k in cfg}
        return cls(**known)


@dataclass(frozen=True)
class Schedule:
    E: int
    n_per_round: tuple[int, ...]
    beta: tuple[float, ...]
    b: tuple[float, ...]


def make_schedule(cfg: LearnerConfig) -> Schedule:
    if cfg.T < 4:
        raise ValueError("T must be >= 4")
    # floor(log2(T) / 2) in integer arithmetic
    E = (cfg.T.bit_length() - 1) // 2
    n = cfg.T // E
    rounds = [n] * E
    rounds[-1] += cfg.T - n * E
    beta = tuple(cfg.r**k * math.pi for k in range(E + 1))
    b = [math.inf]
    for k in range(2, E + 1):
        prev = beta[k - 1]
        if cfg.margin_rule == "uniform":
            b.append(2 * prev / math.sqrt(cfg.d) * math.sqrt(E * (1 + math.log2(1 / cfg.r))))
        else:
            b.append(cfg.c1 * prev * math.log2(cfg.T))
    return Schedule(E, tuple(rounds), beta, tuple(b))


# ---------------------------------------------------------------------------
# ERM over a cone
# ---------------------------------------------------------------------------


def _sweep(p, q, y, lo: float, hi: float, pref: float) -> tuple[float, int]:
    """Exact minimizer over ``omega in [lo, hi]`` of ``#{y (p cos omega + q sin omega) < 0}``.

    Each example flips between right and wrong exactly where its projected
    direction is orthogonal to ``omega``; walking those events in order gives
    the error on every arc.  Among minimal arcs the point closest to ``pref``
    wins.
    """
    rho = np.hypot(p, q)
    live = rho > 0
    p, q, y = p[live], q[live], y[live]
    psi = np.arctan2(q, p)
    err0 = int(np.count_nonzero(y * np.cos(lo - psi) < 0))
    ev = np.concatenate([psi + np.pi / 2, psi - np.pi / 2])
    ys = np.concatenate([y, y])
    ps = np.concatenate([psi, psi])
    ev = lo + np.mod(ev - lo, 2 * np.pi)
    inside = (ev > lo) & (ev < hi)
    ev, ys, ps = ev[inside], ys[inside], ps[inside]
    order = np.argsort(ev, kind="stable")
    ev = ev[order]
    delta = np.where(ys[order] * np.sin(ev - ps[order]) > 0, 1, -1)
    edges = np.concatenate([[lo], ev, [hi]])
    errs = err0 + np.concatenate([[0], np.cumsum(delta)])
    left, right = edges[:-1], edges[1:]
    width = right - left
    ok = width > 0
    if not ok.any():
        return float(np.clip(pref, lo, hi)), err0
    best = errs[ok].min()
    cand = ok & (errs == best)
    eps = np.minimum(1e-9, width / 2)
    pick = np.clip(pref, left + eps, right - eps)
    dist = np.where(cand, np.abs(pick - pref), np.inf)
    j = int(np.argmin(dist))
    return float(pick[j]), int(best)


def _errors(X, y, w) -> int:
    return int(np.count_nonzero(y * (X @ w) < 0))


def _perp2(c):
    return np.array([-c[1], c[0]])


def _great_circle_window(w, u, center, beta) -> tuple[float, float, float]:
    """Rotation angles keeping ``cos w + sin u`` inside the cone, and the angle nearest ``center``."""
    a, bb = float(w @ center), float(u @ center)
    R = math.hypot(a, bb)
    wc = math.atan2(bb, a)
    cb = math.cos(beta)
    if R <= 0 or cb / R <= -1:
        return -math.pi, math.pi, wc
    half = math.acos(min(1.0, cb / R)) * (1 - 1e-12)
    return wc - half, wc + half, wc


def erm_zero_one(X, y, center, beta: float, rng: RandomSource | None = None,
                 budget: int = 256, max_passes: int = 25) -> np.ndarray:
    """Empirical 0/1-error minimizer over ``{w : angle(w, center) <= beta}``.

    Exact for ``d = 2``.  For ``d > 2`` this is a heuristic: the best of
    ``budget`` cone samples, refined by exact sweeps along great circles
    through the incumbent until a full pass brings no improvement.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("ERM needs a non-empty (n, d) data matrix")
    if not beta > 0:
        raise ValueError(f"cone half-angle must be positive, got {beta}")
    c = unit(center, normalize=True)
    d = X.shape[1]
    if c.shape[0] != d:
        raise ValueError("dimension mismatch between data and center")
    beta = min(beta, math.pi)

    if d == 2:
        e2 = _perp2(c)
        om, _ = _sweep(X @ c, X @ e2, y, -beta, beta, 0.0)
        return unit(math.cos(om) * c + math.sin(om) * e2, normalize=True)

    if rng is None:
        rng = RandomSource(0)
    cands = np.vstack([c, sample_in_cone(c, beta, rng, budget)])
    errs = np.count_nonzero(y[:, None] * (X @ cands.T) < 0, axis=0)
    best = errs.min()
    tied = np.flatnonzero(errs == best)
    w = cands[tied[np.argmax(cands[tied] @ c)]]
    cur = int(best)
    for _ in range(max_passes):
        improved = False
        dirs = rng.gen.standard_normal((d - 1, d))
        for u in dirs:
            u = u - (u @ w) * w
            nu = np.linalg.norm(u)
            if nu < 1e-12:
                continue
            u /= nu
            lo, hi, pref = _great_circle_window(w, u, c, beta)
            if lo >= hi:
                continue
            om, e = _sweep(X @ w, X @ u, y, lo, hi, min(max(pref, lo), hi))
            if e < cur:
                w = unit(math.cos(om) * w + math.sin(om) * u, normalize=True)
                cur = e
                improved = True
            if cur == 0:
                break
        if not improved or cur == 0:
            break
    return w


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    k: int
    beta: float
    b: float
    labels_used: int
    stream_seen: int
    emp_err: float
    angle_to_truth: float | None = None


@dataclass
class RunTrace:
    rounds: list[RoundRecord] = field(default_factory=list)
    out_of_regime: bool = False

    @property
    def labels_used(self) -> int:
        return sum(r.labels_used for r in self.rounds)

    @property
    def stream_seen(self) -> int:
        return sum(r.stream_seen for r in self.rounds)

    COLUMNS = ("trial", "k", "beta", "b", "labels_used", "stream_seen", "emp_err", "angle_to_truth")

    def rows(self, trial: int = 0) -> list[tuple]:
        return [(trial, r.k, r.beta, r.b, r.labels_used, r.stream_seen, r.emp_err,
                 "" if r.angle_to_truth is None else r.angle_to_truth) for r in self.rounds]


def _streams(dist: DataDistribution, rng: RandomSource):
    xs = Stream(dist.sample, rng.spawn(0))
    us = Stream(lambda m, r: r.gen.random(m), rng.spawn(1))
    return xs, us


def initial_guess(d: int, rng: RandomSource) -> np.ndarray:
    return unit_sphere(1, d, rng.spawn(2))[0]


def _collect(xs: Stream, w, b: float, n: int, round_index: int):
    """Pull stream points until ``n`` fall inside the band; returns (points, seen)."""
    got = []
    have = seen = gap = 0
    cap = STALL_FACTOR * n
    while have < n:
        block = xs.peek_block()
        if math.isinf(b):
            idx = np.arange(len(block))
        else:
            idx = np.flatnonzero(np.abs(block @ w) <= b)
        use = idx[: n - have]
        # longest run of rejections, counting the carry-over from earlier blocks
        runs = np.diff(np.concatenate([[-1 - gap], use])) - 1
        tail = 0 if len(use) == n - have else len(block) - 1 - (use[-1] if len(use) else -1 - gap)
        if max(runs.max(initial=0), tail) > cap:
            raise StreamStall(round_index, int(max(runs.max(initial=0), tail)))
        used = int(use[-1]) + 1 if len(use) == n - have else len(block)
        if len(use):
            got.append(block[use])
            have += len(use)
        gap = tail
        xs.advance(used)
        seen += used
    return np.concatenate(got), seen


def run_margin_active(cfg: LearnerConfig, oracle: LabelOracle, dist: DataDistribution,
                      rng: RandomSource, truth=None, w0=None, on_round=None):
    """Run the active learner; returns ``(w_hat, trace)``.

    ``on_round(k, X, y, w_prev, w_new)``, when given, sees every round's
    labeled sample.
    """
    if oracle.d != cfg.d or dist.d != cfg.d:
        raise ValueError("oracle, distribution and config disagree on dimension")
    sched = make_schedule(cfg)
    xs, us = _streams(dist, rng)
    erm_rng = rng.spawn(3)
    w = initial_guess(cfg.d, rng) if w0 is None else unit(w0, normalize=True)
    trace = RunTrace(out_of_regime=not cfg.in_guarantee_regime)
    for k in range(1, sched.E + 1):
        beta_prev = sched.beta[k - 1]
        b = sched.b[k - 1]
        n = sched.n_per_round[k - 1]
        X, seen = _collect(xs, w, b, n, k)
        y = labels_from_uniforms(oracle, X, us.take(n))
        w_prev = w
        w = erm_zero_one(X, y, w, beta_prev, erm_rng, budget=cfg.erm_budget)
        if on_round is not None:
            on_round(k, X, y, w_prev, w)
        trace.rounds.append(RoundRecord(
            k=k, beta=beta_prev, b=b, labels_used=n, stream_seen=seen,
            emp_err=_errors(X, y, w) / n,
            angle_to_truth=None if truth is None else angle(w, unit(truth, normalize=True)),
        ))
    return w, trace


def run_passive(cfg: LearnerConfig, oracle: LabelOracle, dist: DataDistribution,
                rng: RandomSource, T: int | None = None) -> np.ndarray:
    """ERM over the whole sphere on ``T`` i.i.d. labeled examples (no selection)."""
    T = cfg.T if T is None else T
    if T < 1:
        raise ValueError("passive baseline needs at least one labeled example")
    if oracle.d != cfg.d or dist.d != cfg.d:
        raise ValueError("oracle, distribution and config disagree on dimension")
    xs, us = _streams(dist, rng)
    X = xs.take(T)
    y = labels_from_uniforms(oracle, X, us.take(T))
    return erm_zero_one(X, y, initial_guess(cfg.d, rng), math.pi, rng.spawn(3), budget=cfg.erm_budget)
