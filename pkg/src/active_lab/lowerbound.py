"""Hard-instance construction behind the minimax lower bound, and its numeric certificate.

Pipeline: a constant-weight binary code -> a packing of unit hypotheses whose
pairwise angles lie in ``[t, 6.5 t]`` -> the adversarial label family built on
that packing -> a certificate that the three Fano-type conditions hold for a
concrete ``(d, T, alpha, mu0)``.

Log bases: code sizes are measured in bits (``log2``); KL divergences and the
Fano budget ``gamma * ln M`` are in nats.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import RandomSource, unit_sphere
from .oracle import AdversarialOracle, TncParams, kl_bernoulli, family_kl_constant, wp

SIZE_RATE = 0.0625
RANDOM_ENUM_FROM = 20
EPS_MARGIN = 0.01
SEPARATION_HI = 6.5


def _min_words(d: int) -> int:
    return 2 ** math.ceil(SIZE_RATE * d)


@dataclass
class CodewordSet:
    d: int
    words: np.ndarray  # (m, d) uint8

    @property
    def omega(self) -> int:
        return self.d // 2

    @property
    def delta_H(self) -> float:
        return self.d / 16

    def __len__(self) -> int:
        return len(self.words)

    @property
    def log2_size(self) -> float:
        return math.log2(len(self.words))

    def min_distance(self) -> int:
        w = self.words.astype(np.int32)
        best = self.d
        for i in range(0, len(w), 1024):
            # equal weight: Hamming = 2 (omega - overlap)
            dist = 2 * (self.omega - w[i:i + 1024] @ w.T)
            for r in range(dist.shape[0]):
                dist[r, i + r] = self.d + 1
            best = min(best, int(dist.min()))
        return best

    def subset(self, m: int) -> "CodewordSet":
        return CodewordSet(self.d, self.words[:m])


def build_constant_weight_code(d: int, rng: RandomSource | None = None) -> CodewordSet:
    """Greedy weight-``d/2`` code with pairwise Hamming distance ``>= d/16``.

    Below ``d = 20`` all weight-``d/2`` words are scanned in lexicographic
    order; from 20 on, random words are drawn until ``2^ceil(d/16)`` are
    accepted.  Raises if the result is smaller than ``2^(d/16)``, which the
    counting bound rules out for a correct construction.
    """
    if d < 2 or d % 2:
        raise ValueError(f"code length must be an even integer >= 2, got {d}")
    omega = d // 2
    min_dist = d / 16
    if d < RANDOM_ENUM_FROM:
        cands = (np.array([1 if k in ones else 0 for k in range(d)], dtype=np.uint8)
                 for ones in map(set, itertools.combinations(range(d), omega)))
        target = None
    else:
        rng = RandomSource(0x5EED) if rng is None else rng
        target = _min_words(d)

        def _random_words():
            for _ in range(1000 * target):
                z = np.zeros(d, dtype=np.uint8)
                z[rng.gen.choice(d, omega, replace=False)] = 1
                yield z

        cands = _random_words()

    accepted: list[np.ndarray] = []
    seen: set[bytes] = set()
    # distinct equal-weight words are at even distance >= 2
    trivial = min_dist <= 2
    mat = np.empty((0, d), dtype=np.uint8)
    for z in cands:
        key = z.tobytes()
        if key in seen:
            continue
        if not trivial and len(accepted):
            if np.count_nonzero(mat != z, axis=1).min() < min_dist:
                continue
        seen.add(key)
        accepted.append(z)
        if not trivial:
            mat = np.vstack([mat, z])
        if target is not None and len(accepted) >= target:
            break
    code = CodewordSet(d, np.array(accepted, dtype=np.uint8))
    if len(code) < 2 or code.log2_size < SIZE_RATE * d:
        raise RuntimeError(f"greedy code of length {d} has only {len(code)} words")
    return code


@dataclass
class PackingSet:
    hypotheses: np.ndarray  # (m, d)
    t: float
    a: float
    Z: float
    codewords: CodewordSet

    @property
    def threshold(self) -> float:
        return SEPARATION_HI * self.t

    @property
    def d(self) -> int:
        return self.hypotheses.shape[1]

    def __len__(self) -> int:
        return len(self.hypotheses)

    def oracle(self, index: int, params: TncParams) -> AdversarialOracle:
        return AdversarialOracle.from_packing(self, index, params)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "codeword"] + [f"w{k}" for k in range(self.d)])
            code_d = self.codewords.d
            for i, w in enumerate(self.hypotheses):
                bits = "".join(map(str, self.codewords.words[i][:code_d]))
                wr.writerow([i, bits] + [repr(float(v)) for v in w])


def build_packing(d: int, t: float, code: CodewordSet | None = None) -> PackingSet:
    """Hypotheses ``((1,...,1) - 4t z_i) / Z`` for the codewords ``z_i``.

    Odd ``d`` uses a code of length ``d - 1`` and pads every hypothesis with a
    trailing zero coordinate.
    """
    if not 0 < t < 0.25:
        raise ValueError(f"t must lie in (0, 1/4), got {t}")
    code_d = d if d % 2 == 0 else d - 1
    if code is None:
        code = build_constant_weight_code(code_d)
    if code.d != code_d:
        raise ValueError(f"code length {code.d} does not fit dimension {d}")
    a = 4 * t
    Z = math.sqrt(code_d * (1 - a + a * a / 2))
    W = (1.0 - a * code.words.astype(float)) / Z
    if code_d != d:
        W = np.hstack([W, np.zeros((len(W), 1))])
    norms = np.linalg.norm(W, axis=1)
    if np.abs(norms - 1).max() > 1e-12:
        raise RuntimeError("packing hypotheses are not unit-norm")
    return PackingSet(W, t, a, Z, code)


@dataclass
class SeparationReport:
    min_angle: float
    max_angle: float
    lo: float
    hi: float
    passed: bool
    failures: list = field(default_factory=list)


def _pairwise_cos_blocks(W, block=1024):
    for i in range(0, len(W), block):
        yield i, W[i:i + block] @ W.T


def verify_separation(p: PackingSet, max_failures: int = 10) -> SeparationReport:
    """Exhaustive check of ``t <= angle(w_i, w_j) <= 6.5 t`` over all pairs."""
    W = p.hypotheses
    if len(W) < 2:
        raise ValueError("need at least two hypotheses")
    lo, hi = p.t, SEPARATION_HI * p.t
    cos_lo, cos_hi = math.cos(hi), math.cos(lo)
    failures = []
    norms = np.linalg.norm(W, axis=1)
    for i in np.flatnonzero(np.abs(norms - 1) > 1e-9)[:max_failures]:
        failures.append(("norm", int(i), float(norms[i])))
    cmin, cmax = np.inf, -np.inf
    for i0, C in _pairwise_cos_blocks(W):
        rows = np.arange(C.shape[0])
        C[rows, i0 + rows] = np.nan
        cmin = min(cmin, float(np.nanmin(C)))
        cmax = max(cmax, float(np.nanmax(C)))
        bad = np.argwhere((C < cos_lo) | (C > cos_hi))
        for r, j in bad:
            if len(failures) >= max_failures:
                break
            if i0 + r < j:
                failures.append((int(i0 + r), int(j), float(np.arccos(np.clip(C[r, j], -1, 1)))))
    return SeparationReport(
        min_angle=float(np.arccos(np.clip(cmax, -1, 1))),
        max_angle=float(np.arccos(np.clip(cmin, -1, 1))),
        lo=lo, hi=hi, passed=not failures, failures=failures,
    )


def cosine_identity_residual(p: PackingSet) -> float:
    """Max over pairs of ``|cos angle(w_i, w_j) - (Z^2 - (Hamming/2) a^2) / Z^2|``."""
    W = p.hypotheses
    z = p.codewords.words.astype(np.int64)
    omega = p.codewords.omega
    Z2 = p.Z**2
    worst = 0.0
    for i0, C in _pairwise_cos_blocks(W):
        ham = 2 * (omega - z[i0:i0 + C.shape[0]] @ z.T)
        pred = (Z2 - ham / 2 * p.a**2) / Z2
        worst = max(worst, float(np.abs(C - pred).max()))
    return worst


def bernoulli_kl(p_shift: float, q_shift: float, strict: bool = True) -> float:
    """KL(Bern(1/2 - p) || Bern(1/2 - q)) in nats.

    With ``strict`` the shifts must satisfy ``|p|, |q| < 1/2``; otherwise
    degenerate laws are allowed and may give ``inf``.
    """
    if strict and (abs(p_shift) >= 0.5 or abs(q_shift) >= 0.5):
        raise ValueError("shifts must satisfy |p|, |q| < 1/2")
    if abs(p_shift) > 0.5 or abs(q_shift) > 0.5:
        raise ValueError("shifts outside [-1/2, 1/2] are not probabilities")
    return kl_bernoulli(0.5 - p_shift, 0.5 - q_shift)


def per_query_kl_bound(params: TncParams, t: float) -> float:
    """``8 C^2 t^(2e)``: sup over x of the per-query KL inside the family (nats)."""
    C = family_kl_constant(params)
    return 8 * C * C * t ** (2 * params.exponent)


@dataclass
class KLBound:
    analytic: float
    per_query: float
    numeric_sup: float | None = None


def band_points(w_ref, t: float, n: int, rng: RandomSource, spread: float = 2.0) -> np.ndarray:
    """Unit vectors whose signed angle to ``w_ref``'s hyperplane is uniform in ``+-spread*6.5t``."""
    d = w_ref.shape[0]
    v = rng.gen.standard_normal((n, d))
    v -= np.outer(v @ w_ref, w_ref)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    phi = rng.gen.uniform(-spread * SEPARATION_HI * t, spread * SEPARATION_HI * t, n)
    return np.sin(phi)[:, None] * w_ref + np.cos(phi)[:, None] * v


def numeric_kl_sup(packing: PackingSet, params: TncParams, n: int, rng: RandomSource,
                   members: int | None = None) -> float:
    """Largest pointwise KL over ordered member pairs at ``n`` sampled directions.

    Half the directions are uniform on the sphere, half are concentrated
    around the reference hyperplane where the members differ.
    """
    m = len(packing) if members is None else members
    oracles = [packing.oracle(i, params) for i in range(m)]
    half = n // 2
    x = np.vstack([unit_sphere(half, packing.d, rng.spawn(0)),
                   band_points(packing.hypotheses[0], packing.t, n - half, rng.spawn(1))])
    etas = np.array([o.eta(x) for o in oracles])
    best = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                best = max(best, float(np.max(kl_bernoulli(etas[i], etas[j]))))
    return best


def kl_budget_bound(params: TncParams, t: float, T: int, packing: PackingSet | None = None,
                    n_samples: int = 0, rng: RandomSource | None = None,
                    members: int | None = None) -> KLBound:
    """Analytic bound ``8 C^2 T t^(2e)`` on KL(P_i,T || P_j,T), optionally with a sampled sup."""
    if not t > 0 or T < 1:
        raise ValueError("need t > 0 and T >= 1")
    pq = per_query_kl_bound(params, t)
    out = KLBound(analytic=T * pq, per_query=pq)
    if packing is not None and n_samples > 0:
        rng = RandomSource(0) if rng is None else rng
        out.numeric_sup = numeric_kl_sup(packing, params, n_samples, rng, members)
    return out


@dataclass
class LowerBoundCertificate:
    d: int
    T: int
    alpha: float
    mu0: float
    t: float
    kappa: float
    M: int
    rho: float
    gamma: float
    kl_bound: float
    kl_per_query: float
    kl_numeric_sup: float
    separation: bool
    continuity: bool
    kl: bool

    @property
    def conditions_met(self) -> tuple[bool, bool, bool]:
        return self.separation, self.continuity, self.kl

    @property
    def passed(self) -> bool:
        return all(self.conditions_met)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in ("separation", "continuity", "kl"):
            out.pop(k)
        out["checks"] = {"separation": self.separation, "continuity": self.continuity, "kl": self.kl}
        out["passed"] = self.passed
        return out


def _t_feasible(t: float, params: TncParams, T: int, budget_nats: float) -> bool:
    if not 0 < t < 0.25:
        return False
    # keep every member's shift within 1/4 on the band so the quadratic KL bound applies
    if wp(2 * SEPARATION_HI * t, params) > 0.25:
        return False
    return T * per_query_kl_bound(params, t) <= budget_nats


def certify(d: int, T: int, params: TncParams, eps_margin: float = EPS_MARGIN,
            n_samples: int = 100_000, rng: RandomSource | None = None) -> LowerBoundCertificate:
    """Pick the largest ``t = kappa (d/T)^((1-alpha)/(2 alpha))`` meeting the Fano budget and certify it."""
    if d < 2 or T < 1:
        raise ValueError("need d >= 2 and T >= 1")
    rng = RandomSource(0) if rng is None else rng
    code_d = d if d % 2 == 0 else d - 1
    if code_d < 2:
        raise ValueError(f"no packing exists in dimension {d}")
    code = build_constant_weight_code(code_d, rng.spawn(0))
    M = min(_min_words(code_d), len(code))
    if M < 2:
        raise ValueError("packing has fewer than two hypotheses; no Fano bound")
    gamma_max = 0.125 - eps_margin
    budget = gamma_max * math.log(M)
    scale = (d / T) ** ((1 - params.alpha) / (2 * params.alpha))

    lo, hi = 0.0, 0.25 / scale
    if _t_feasible(hi * scale * (1 - 1e-15), params, T, budget):
        lo = hi * (1 - 1e-15)
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _t_feasible(mid * scale, params, T, budget):
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-15 * hi:
                break
    kappa = lo
    t = kappa * scale
    if not t > 0:
        raise ValueError("no feasible t")

    packing = build_packing(d, t, code.subset(M))
    sep = verify_separation(packing)
    kb = kl_budget_bound(params, t, T, packing, n_samples, rng.spawn(1))
    gamma = kb.analytic / math.log(M)
    continuity = wp(2 * SEPARATION_HI * t, params) < 0.5
    kl_ok = gamma < 0.125 and kb.numeric_sup <= kb.per_query
    return LowerBoundCertificate(
        d=d, T=T, alpha=params.alpha, mu0=params.mu0, t=t, kappa=kappa, M=M, rho=t / 2,
        gamma=gamma, kl_bound=kb.analytic, kl_per_query=kb.per_query,
        kl_numeric_sup=kb.numeric_sup, separation=sep.passed and sep.min_angle >= t,
        continuity=bool(continuity), kl=bool(kl_ok),
    )
