"""Excess-risk evaluation, noise-constant fitting and rate-slope estimation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .geometry import DataDistribution, DistKind, RandomSource, angle, rotate_toward, unit
from .oracle import LabelOracle, SingleHypothesisOracle, TncParams

_BLOCK = 1 << 18


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.value < 0 or self.std_error < 0:
            raise ValueError("risk estimates are non-negative")


def _sgn(v):
    return np.where(v >= 0, 1.0, -1.0)


def _blockwise_mean(fn, N: int, rng: RandomSource) -> tuple[float, float]:
    # running sums over fixed blocks keep memory flat at large N
    s = s2 = 0.0
    done = 0
    while done < N:
        m = min(_BLOCK, N - done)
        v = fn(m, rng)
        s += float(v.sum())
        s2 += float((v * v).sum())
        done += m
    mean = s / N
    var = max(s2 / N - mean * mean, 0.0)
    se = np.sqrt(var / (N - 1)) if N > 1 else 0.0
    return mean, float(se)


def excess_risk_mc(w, oracle: LabelOracle, dist: DataDistribution, N: int, rng: RandomSource) -> RiskEstimate:
    """Monte-Carlo ``err(w) - err(w*)`` by integrating ``2|eta - 1/2|`` over the disagreement set.

    Integrating the conditional margin instead of sampling labels gives the
    same expectation with strictly less variance.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    w = unit(w, normalize=True)
    wstar = oracle.bayes
    if w.shape != wstar.shape or dist.d != w.shape[0]:
        raise ValueError("dimension mismatch between w, oracle and distribution")
    if np.array_equal(w, wstar):
        return RiskEstimate(0.0, 0.0, N)

    def integrand(m, r):
        x = dist.sample(m, r)
        disagree = _sgn(x @ w) != _sgn(x @ wstar)
        out = np.zeros(m)
        if disagree.any():
            out[disagree] = 2.0 * np.abs(oracle.eta(x[disagree]) - 0.5)
        return out

    mean, se = _blockwise_mean(integrand, N, rng)
    return RiskEstimate(max(mean, 0.0), se, N)


def error_mc(w, oracle: LabelOracle, dist: DataDistribution, N: int, rng: RandomSource) -> RiskEstimate:
    """Monte-Carlo 0/1 error of ``sgn(w . x)`` (label noise integrated out)."""
    w = unit(w, normalize=True)

    def integrand(m, r):
        x = dist.sample(m, r)
        p = oracle.eta(x)
        return np.where(_sgn(x @ w) > 0, 1.0 - p, p)

    mean, se = _blockwise_mean(integrand, N, rng)
    return RiskEstimate(mean, se, N)


def _wp_integral(x: float, params: TncParams) -> float:
    # integral of wp over [0, x], x <= pi/2
    e, c, cap = params.exponent, params.coef, params.cap_angle
    if x <= cap:
        return c * x ** (e + 1) / (e + 1)
    return c * cap ** (e + 1) / (e + 1) + 0.5 * (x - cap)


def excess_risk_exact_2d(theta: float, params: TncParams) -> float:
    """Closed-form excess risk on the uniform disk for the single-hypothesis oracle.

    The disagreement set is two wedges of width ``theta``, each weighted by
    ``dpsi / (2 pi)``.  Inside a wedge the distance to the Bayes boundary is
    ``min(s, pi - s)`` for offset ``s``, so the excess is
    ``(2/pi) * int_0^theta wp(min(s, pi - s)) ds``.
    """
    if not 0.0 <= theta <= np.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    if theta <= np.pi / 2:
        integral = _wp_integral(theta, params)
    else:
        integral = 2.0 * _wp_integral(np.pi / 2, params) - _wp_integral(np.pi - theta, params)
    return 2.0 / np.pi * integral


def excess_risk(w, oracle: LabelOracle, dist: DataDistribution, N: int, rng: RandomSource) -> RiskEstimate:
    """Exact value where a closed form exists (2-D disk, single hypothesis), MC otherwise."""
    if (dist.d == 2 and dist.kind is DistKind.UNIFORM_BALL
            and isinstance(oracle, SingleHypothesisOracle)):
        return RiskEstimate(excess_risk_exact_2d(angle(unit(w, normalize=True), oracle.bayes), oracle.params), 0.0, 0)
    return excess_risk_mc(w, oracle, dist, N, rng)


@dataclass
class TncFit:
    alpha_assumed: float
    mu_hat: float
    theta_grid: np.ndarray
    excess: np.ndarray
    stderr: np.ndarray
    ratios: np.ndarray = field(repr=False)

    def lower_envelope(self, theta):
        return self.mu_hat * np.asarray(theta) ** (1.0 / (1.0 - self.alpha_assumed))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["theta_rad", "excess", "stderr", "ratio"])
            for row in zip(self.theta_grid, self.excess, self.stderr, self.ratios):
                wr.writerow([repr(float(v)) for v in row])


def fit_tnc_mu(oracle: LabelOracle, dist: DataDistribution, alpha: float, grid, N: int,
               rng: RandomSource, plane=None) -> TncFit:
    """Largest ``mu`` with ``excess(theta) >= mu * theta^(1/(1-alpha))`` on ``grid``.

    Each grid angle is realized by rotating the Bayes classifier by ``theta``
    inside the plane spanned by it and ``plane`` (a random direction when
    omitted).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if np.any(grid <= 0) or np.any(grid > np.pi) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing inside (0, pi]")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    wstar = oracle.bayes
    if plane is None:
        plane = rng.spawn(0xF17).gen.standard_normal(wstar.shape[0])
    excess = np.empty(grid.size)
    stderr = np.empty(grid.size)
    for j, th in enumerate(grid):
        w = rotate_toward(wstar, plane, th)
        est = excess_risk(w, oracle, dist, N, rng.spawn(j))
        excess[j], stderr[j] = est.value, est.std_error
    ratios = excess / grid ** (1.0 / (1.0 - alpha))
    return TncFit(alpha, float(max(ratios.min(), 0.0)), grid, excess, stderr, ratios)


def rate_slope(points, min_points: int = 3) -> float:
    """Least-squares slope of ``log(excess)`` against ``log(T)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (T, excess) pairs")
    if len(pts) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(pts)}")
    T, ex = pts[:, 0], pts[:, 1]
    if np.any(np.diff(T) <= 0):
        raise ValueError("T values must be strictly increasing")
    if np.any(ex <= 0) or np.any(T <= 0):
        raise ValueError("excess and T must be positive to take logs")
    slope, _ = np.polyfit(np.log(T), np.log(ex), 1)
    return float(slope)
