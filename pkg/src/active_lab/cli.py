"""Command-line entry point: ``active-lab <command> [options]``.

Exit codes: 0 success, 1 invalid usage or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .geometry import RandomSource
from .harness import (
    ConfigError,
    ExperimentConfig,
    resolve_seed,
    run_paired,
    run_simulate,
    run_sweep,
    verify_tnc,
    write_meta,
)
from .learner import RunTrace
from .lowerbound import build_packing, certify, verify_separation
from .oracle import SingleHypothesisOracle, TncParams, oracle_from_dict

log = logging.getLogger("active_lab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="active-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required, help="experiment JSON config")
        sp.add_argument("--out", required=True, help="output CSV/JSON path")
        sp.add_argument("--seed", type=int, default=None, help="overrides config seed and $ACTIVE_LAB_SEED")
        sp.add_argument("--workers", type=int, default=None)

    for name in ("simulate", "sweep", "paired"):
        common(sub.add_parser(name), True)

    sp = sub.add_parser("certify", help="certify the lower-bound construction")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--T", type=int, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--mu0", type=float, required=True)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("pack", help="export a hypothesis packing")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("verify-tnc", help="check the noise condition of an oracle")
    sp.add_argument("--config", help="JSON with an 'oracle' section (or a bare oracle object)")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--mu0", type=float)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    cfg.seed = resolve_seed(args.seed, cfg.seed)
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.out = args.out
    return cfg


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "sweep":
        cfg = _load(args)
        res = run_sweep(cfg)
        res.write_csv(args.out)
        write_meta(args.out, cfg, cfg.seed, {"slope": res.slope, "slope_target": res.target,
                                              "low_confidence": res.low_confidence})
        log.info("slope %.3f (target %.3f)", res.slope, res.target)
    elif cmd == "paired":
        cfg = _load(args)
        res = run_paired(cfg)
        res.write_csv(args.out)
        write_meta(args.out, cfg, cfg.seed, res.summary())
    elif cmd == "simulate":
        cfg = _load(args)
        rows, finals = run_simulate(cfg)
        with open(args.out, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(RunTrace.COLUMNS)
            wr.writerows(rows)
        write_meta(args.out, cfg, cfg.seed, {"final": finals})
    elif cmd == "certify":
        seed = resolve_seed(args.seed)
        cert = certify(args.d, args.T, TncParams(args.alpha, args.mu0),
                       n_samples=args.samples, rng=RandomSource(seed))
        _write_json(args.out, dict(cert.to_dict(), seed=seed))
    elif cmd == "pack":
        packing = build_packing(args.d, args.t)
        rep = verify_separation(packing)
        packing.write_csv(args.out)
        write_meta(args.out, None, 0, {"d": args.d, "t": args.t, "size": len(packing),
                                       "min_angle": rep.min_angle, "max_angle": rep.max_angle,
                                       "separation_ok": rep.passed})
        if not rep.passed:
            raise RuntimeError(f"separation check failed: {rep.failures[:3]}")
    elif cmd == "verify-tnc":
        seed = resolve_seed(args.seed)
        if args.config:
            with open(args.config) as fh:
                raw = json.load(fh)
            oracle = oracle_from_dict(raw.get("oracle", raw))
        elif args.alpha is not None and args.mu0 is not None:
            w = [1.0] + [0.0] * (args.d - 1)
            oracle = SingleHypothesisOracle(w, TncParams(args.alpha, args.mu0))
        else:
            raise UsageError("verify-tnc needs --config or both --alpha and --mu0")
        _write_json(args.out, dict(verify_tnc(oracle, args.n, RandomSource(seed)), seed=seed,
                                   oracle=oracle.to_dict()))


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (UsageError, ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        log.exception("runtime failure")
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
