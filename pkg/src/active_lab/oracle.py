"""Label oracles satisfying the angle-based Tsybakov noise condition.

Two kinds are provided:

* :class:`SingleHypothesisOracle` -- ``eta(x) = 1/2 + sgn(w*.x) * wp(|phi(x, w*)|)``.
* :class:`AdversarialOracle` -- member ``i`` of the lower-bound family.  Close
  to the hyperplane of ``w_1`` (``|phi(w_1, x)| <= threshold``) it behaves like
  the single-hypothesis oracle for ``w_i``; elsewhere every member shares the
  law of ``w_1``.

``sgn(0)`` is taken to be ``+1`` throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RandomSource, signed_angle, unit


@dataclass(frozen=True)
class TncParams:
    alpha: float
    mu0: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.mu0 > 0.0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")

    @property
    def exponent(self) -> float:
        """alpha / (1 - alpha)."""
        return self.alpha / (1.0 - self.alpha)

    @property
    def coef(self) -> float:
        return 2.0**self.exponent * self.mu0

    @property
    def cap_angle(self) -> float:
        """Angle at which ``wp`` reaches its cap of 1/2."""
        return (0.5 / self.coef) ** (1.0 / self.exponent)

    @property
    def feasible(self) -> bool:
        """Whether ``mu0 |phi|^e <= 1/2`` on all of ``[0, pi/2]``.

        When false, no label law can meet the noise condition near
        ``|phi| = pi/2`` and the capped oracle violates it there.
        """
        return self.mu0 * (np.pi / 2) ** self.exponent <= 0.5


def wp(theta_abs, params: TncParams):
    """``min(2^e mu0 theta^e, 1/2)`` with ``e = alpha/(1-alpha)``."""
    th = np.asarray(theta_abs, dtype=float)
    if np.any(th < 0):
        raise ValueError("wp is defined for non-negative angles only")
    out = np.minimum(params.coef * th**params.exponent, 0.5)
    return float(out) if out.ndim == 0 else out


def _sgn(v):
    return np.where(v >= 0, 1.0, -1.0)


def _directions(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("eta is undefined at the zero vector")
    return x / norms


def _single_eta(x_unit, w, params):
    return 0.5 + _sgn(x_unit @ w) * wp(np.abs(signed_angle(x_unit, w)), params)


class SingleHypothesisOracle:
    kind = "single"

    def __init__(self, wstar, params: TncParams):
        self.wstar = unit(wstar, normalize=True)
        self.params = params

    @property
    def d(self) -> int:
        return self.wstar.shape[0]

    @property
    def bayes(self) -> np.ndarray:
        return self.wstar

    def eta(self, x):
        xu = _directions(x)
        out = _single_eta(xu, self.wstar, self.params)
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "wstar": self.wstar.tolist(),
                "alpha": self.params.alpha, "mu0": self.params.mu0}


class AdversarialOracle:
    """Member ``index`` (0-based; member 0 is the reference ``w_1``) of the family."""

    kind = "adversarial"

    def __init__(self, w_ref, w_i, threshold: float, params: TncParams, index: int = 0, t: float | None = None):
        self.w_ref = unit(w_ref, normalize=True)
        self.w_i = unit(w_i, normalize=True)
        if self.w_ref.shape != self.w_i.shape:
            raise ValueError("reference and member hypotheses differ in dimension")
        # stored, not recomputed: the branch boundary must be identical across members
        self.threshold = float(threshold)
        self.params = params
        self.index = index
        self.t = t

    @classmethod
    def from_packing(cls, packing, index: int, params: TncParams) -> "AdversarialOracle":
        return cls(packing.hypotheses[0], packing.hypotheses[index], packing.threshold,
                   params, index=index, t=packing.t)

    @property
    def d(self) -> int:
        return self.w_i.shape[0]

    @property
    def bayes(self) -> np.ndarray:
        return self.w_i

    def near_band(self, x) -> np.ndarray:
        """True where ``|phi(w_1, x)| <= threshold`` (the member-specific branch)."""
        return np.abs(signed_angle(_directions(x), self.w_ref)) <= self.threshold

    def eta(self, x):
        xu = _directions(x)
        near = np.abs(signed_angle(xu, self.w_ref)) <= self.threshold
        out = np.where(near, _single_eta(xu, self.w_i, self.params),
                       _single_eta(xu, self.w_ref, self.params))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "t": self.t, "index": self.index,
                "alpha": self.params.alpha, "mu0": self.params.mu0}


LabelOracle = SingleHypothesisOracle | AdversarialOracle


def eta(oracle: LabelOracle, x):
    return oracle.eta(x)


def draw_label(oracle: LabelOracle, x, rng: RandomSource):
    """Sample ``y in {+1, -1}`` with ``P(y = +1) = eta(x)``; vectorized over rows."""
    p = np.asarray(oracle.eta(x))
    u = rng.gen.random(p.shape)
    y = np.where(u < p, 1, -1)
    return int(y) if y.ndim == 0 else y


def labels_from_uniforms(oracle: LabelOracle, x, u) -> np.ndarray:
    """Labels for rows of ``x`` given pre-drawn uniforms ``u`` (stream-friendly)."""
    return np.where(np.asarray(u) < oracle.eta(x), 1, -1)


def kl_bernoulli(p, q):
    """KL(Bern(p) || Bern(q)) in nats; ``inf`` when ``q`` is degenerate and ``p`` is not."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0, p * np.log(p / q), 0.0)
        b = np.where(p < 1, (1 - p) * np.log((1 - p) / (1 - q)), 0.0)
    out = a + b
    out = np.where(np.isnan(out), np.inf, out)
    # rounding can push tiny values below zero
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def pointwise_kl_gap(oracle_i: LabelOracle, oracle_j: LabelOracle, x):
    """Per-query KL between the label laws of two oracles at ``x`` (nats)."""
    if oracle_i.d != oracle_j.d:
        raise ValueError("oracles differ in dimension")
    return kl_bernoulli(oracle_i.eta(x), oracle_j.eta(x))


def oracle_from_dict(cfg: dict) -> LabelOracle:
    params = TncParams(float(cfg["alpha"]), float(cfg["mu0"]))
    kind = cfg.get("kind", "single")
    if kind == "single":
        return SingleHypothesisOracle(np.asarray(cfg["wstar"], dtype=float), params)
    if kind == "adversarial":
        from .lowerbound import build_packing

        packing = build_packing(int(cfg["d"]), float(cfg["t"]))
        return AdversarialOracle.from_packing(packing, int(cfg.get("index", 0)), params)
    raise ValueError(f"unknown oracle kind {kind!r}")


def tnc_slack(oracle: LabelOracle, x, w=None):
    """``|eta - 1/2| - mu0 |phi(x, w)|^e``; non-negative wherever the condition holds.

    ``w`` defaults to the oracle's Bayes classifier.
    """
    w = oracle.bayes if w is None else w
    xu = _directions(x)
    phi = np.abs(signed_angle(xu, w))
    return np.abs(np.asarray(oracle.eta(xu)) - 0.5) - oracle.params.mu0 * phi ** oracle.params.exponent


def family_kl_constant(params: TncParams) -> float:
    """``C = 2 * 13^e * 2^e * mu0`` bounding ``|p_i - p_j| <= C t^e`` in the family."""
    return 2.0 * 13.0**params.exponent * params.coef


__all__ = [
    "TncParams", "wp", "SingleHypothesisOracle", "AdversarialOracle", "LabelOracle",
    "eta", "draw_label", "labels_from_uniforms", "kl_bernoulli", "pointwise_kl_gap",
    "oracle_from_dict", "tnc_slack", "family_kl_constant",
]
