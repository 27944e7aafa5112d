"""Experiment orchestration: budget sweeps, paired active/passive trials, persistence.

Trial ``i`` at budget ``T`` always draws from ``RandomSource(seed).spawn(T, i)``,
so results do not depend on the worker count or completion order.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from . import __version__
from .geometry import DataDistribution, RandomSource, angle, unit_sphere
from .learner import LearnerConfig, run_margin_active, run_passive
from .oracle import SingleHypothesisOracle, TncParams, oracle_from_dict
from .risk import excess_risk, rate_slope

log = logging.getLogger(__name__)

EXPERIMENTS = ("simulate", "sweep", "paired", "certify", "verify-tnc", "pack")
SEED_ENV = "ACTIVE_LAB_SEED"
CSV_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    learner: dict
    oracle: dict
    distribution: str = "uniform_ball"
    T_grid: list[int] = field(default_factory=list)
    trials: int = 1
    seed: int = 0
    workers: int = 1
    mc_samples: int = 200_000
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(b <= a for a, b in zip(self.T_grid, self.T_grid[1:])):
            raise ConfigError("T_grid must be strictly increasing")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.learner_config(self.T_grid[0] if self.T_grid else None)
            self.params()
            self.dist()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {k: raw[k] for k in cls.__dataclass_fields__ if k in raw}
        missing = {"experiment", "learner", "oracle"} - known.keys()
        if missing:
            raise ConfigError(f"config is missing {sorted(missing)}")
        return cls(**known)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def learner_config(self, T: int | None = None) -> LearnerConfig:
        raw = dict(self.learner)
        if T is not None:
            raw["T"] = T
        return LearnerConfig.from_dict(raw)

    def params(self) -> TncParams:
        return TncParams(float(self.oracle["alpha"]), float(self.oracle["mu0"]))

    def dist(self) -> DataDistribution:
        return DataDistribution(self.distribution, int(self.learner["d"]))


def resolve_seed(cli_seed: int | None, config_seed: int | None = None) -> int:
    if cli_seed is not None:
        return int(cli_seed)
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def _trial_oracle(cfg: ExperimentConfig, rng: RandomSource):
    raw = dict(cfg.oracle)
    if raw.get("kind", "single") == "single" and "wstar" not in raw:
        d = int(cfg.learner["d"])
        return SingleHypothesisOracle(unit_sphere(1, d, rng.spawn(9))[0], cfg.params())
    return oracle_from_dict(raw)


def _excess(w, oracle, cfg: ExperimentConfig, rng: RandomSource) -> float:
    return excess_risk(w, oracle, cfg.dist(), cfg.mc_samples, rng.spawn(11)).value


def _sweep_trial(args):
    cfg, T, trial = args
    rng = RandomSource(cfg.seed).spawn(T, trial)
    oracle = _trial_oracle(cfg, rng)
    w, trace = run_margin_active(cfg.learner_config(T), oracle, cfg.dist(), rng, truth=oracle.bayes)
    return (cfg.params().alpha, cfg.learner_config(T).d, T, trial,
            _excess(w, oracle, cfg, rng), angle(w, oracle.bayes), trace.labels_used)


def _paired_trial(args):
    cfg, T, trial = args
    rng = RandomSource(cfg.seed).spawn(T, trial)
    oracle = _trial_oracle(cfg, rng)
    lc = cfg.learner_config(T)
    w_act, _ = run_margin_active(lc, oracle, cfg.dist(), rng)
    w_pas = run_passive(lc, oracle, cfg.dist(), rng)
    ea, ep = _excess(w_act, oracle, cfg, rng), _excess(w_pas, oracle, cfg, rng)
    return (T, trial, ea, ep, ea - ep, angle(w_act, oracle.bayes), angle(w_pas, oracle.bayes))


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        # map preserves submission order, so output is independent of scheduling
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def write_meta(path, cfg: ExperimentConfig | None, seed: int, extra: dict | None = None) -> None:
    meta = {"seed": seed, "version": __version__, "csv_version": CSV_VERSION}
    if cfg is not None:
        meta["config_hash"] = cfg.config_hash()
        meta["config"] = cfg.to_dict()
    if extra:
        meta.update(extra)
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=float)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


@dataclass
class SweepResult:
    rows: list[tuple]
    slope: float
    target: float
    low_confidence: bool

    COLUMNS = ("alpha", "d", "T_labels", "trial", "excess_risk", "angle_rad", "labels_used")

    def mean_excess(self) -> list[tuple[int, float]]:
        by_T: dict[int, list[float]] = {}
        for r in self.rows:
            by_T.setdefault(r[2], []).append(r[4])
        return [(T, float(np.mean(v))) for T, v in sorted(by_T.items())]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.COLUMNS)
            for r in self.rows:
                wr.writerow([_fmt(v) for v in r])


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Active-learner runs over ``cfg.T_grid``; slope of log mean-excess against log T."""
    if not cfg.T_grid:
        raise ConfigError("sweep needs a non-empty T_grid")
    if cfg.oracle.get("kind", "single") != "single":
        raise ConfigError("sweeps require a single-hypothesis oracle")
    jobs = [(cfg, T, i) for T in cfg.T_grid for i in range(cfg.trials)]
    rows = _map(_sweep_trial, jobs, cfg.workers)
    res = SweepResult(rows, float("nan"), -1.0 / (2 * cfg.params().alpha), len(cfg.T_grid) < 3)
    means = res.mean_excess()
    if len(means) >= 2 and all(m > 0 for _, m in means):
        # fit on log of per-T means, as a convergence plot would be read
        res.slope = rate_slope(means, min_points=2)
    return res


@dataclass
class PairedResult:
    rows: list[tuple]
    median_active: float
    median_passive: float
    active_wins: int
    n_untied: int
    p_value: float

    COLUMNS = ("T_labels", "trial", "active_excess", "passive_excess", "diff_excess",
               "active_angle_rad", "passive_angle_rad")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.COLUMNS)
            for r in self.rows:
                wr.writerow([_fmt(v) for v in r])

    def summary(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "rows"}


def sign_test(active, passive) -> tuple[int, int, float]:
    """One-sided sign test that active excess tends to be smaller; ties dropped."""
    a, p = np.asarray(active), np.asarray(passive)
    wins = int(np.count_nonzero(a < p))
    n = int(np.count_nonzero(a != p))
    pval = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return wins, n, float(pval)


def run_paired(cfg: ExperimentConfig, T: int | None = None) -> PairedResult:
    """Active vs passive at equal budget, sharing the stream per pair."""
    T = T if T is not None else (cfg.T_grid[0] if cfg.T_grid else int(cfg.learner["T"]))
    jobs = [(cfg, T, i) for i in range(cfg.trials)]
    rows = _map(_paired_trial, jobs, cfg.workers)
    act = [r[2] for r in rows]
    pas = [r[3] for r in rows]
    wins, n, pval = sign_test(act, pas)
    return PairedResult(rows, float(np.median(act)), float(np.median(pas)), wins, n, pval)


def run_simulate(cfg: ExperimentConfig):
    """Single-run traces for every trial at the learner's budget."""
    lc = cfg.learner_config()
    rows = []
    finals = []
    for i in range(cfg.trials):
        rng = RandomSource(cfg.seed).spawn(lc.T, i)
        oracle = _trial_oracle(cfg, rng)
        w, trace = run_margin_active(lc, oracle, cfg.dist(), rng, truth=oracle.bayes)
        rows.extend(trace.rows(i))
        finals.append({"trial": i, "w_hat": w.tolist(), "excess": _excess(w, oracle, cfg, rng),
                       "out_of_regime": trace.out_of_regime or not lc.alpha_in_regime(cfg.params().alpha)})
    return rows, finals


def verify_tnc(oracle, n: int, rng: RandomSource) -> dict:
    """Smallest slack of the noise condition over ``n`` random directions."""
    from .oracle import tnc_slack

    x = unit_sphere(n, oracle.d, rng)
    slack = tnc_slack(oracle, x)
    return {"n": n, "min_slack": float(slack.min()), "violations": int(np.count_nonzero(slack < -1e-12)),
            "holds": bool(slack.min() >= -1e-12), "feasible_params": bool(oracle.params.feasible)}
