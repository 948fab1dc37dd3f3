"""Command-line entry point: ``lqg-adapt run|validate|oracle``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .bench import bundled_config_path, load_config, run_experiment
from .errors import ConfigError, ValidationError
from .sysid import TruncationWarning

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _config(path):
    return load_config(path or bundled_config_path())


def _seed_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def cmd_validate(args) -> int:
    cfg = _config(args.config)
    print(f"ok: n_x={cfg.system.n_x} n_u={cfg.system.n_u} n_y={cfg.system.n_y} H={cfg.H} "
          f"split=({cfg.d1},{cfg.d2}) horizon={cfg.schedule.horizon} runs={len(cfg.seeds)}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args.config)
    seeds = None
    if args.seed_list is not None:
        seeds = args.seed_list
    elif args.seeds is not None:
        base = cfg.seeds[0] if cfg.seeds else 0
        seeds = list(range(base, base + args.seeds))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        result, _ = run_experiment(cfg, algorithms=args.algos, seeds=seeds, out_dir=args.out,
                                   parallel=args.parallel, write_traces=not args.no_traces)
    for algo, n in result.n.items():
        failed = result.failed[algo]
        print(f"{algo}: n={n} failed={len(failed)} mean_avg_cost={result.mean_avg_cost.get(algo, float('nan')):.6g} "
              f"J*={result.J_star:.6g}")
        for seed, ep, err in failed:
            print(f"  seed {seed} failed in episode {ep}: {err}", file=sys.stderr)
    any_failed = any(result.failed[a] for a in result.n)
    return EXIT_FAIL if (args.strict and any_failed) else EXIT_OK


def cmd_oracle(args) -> int:
    from . import oracles

    cfg = _config(args.config)
    dare = oracles.dare_check(cfg.system, cfg.noise, cfg.cost)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        hk = oracles.ho_kalman_roundtrip(cfg.system, cfg.noise, cfg.cost, cfg.H, cfg.d1, cfg.d2)
    fim = oracles.scalar_fim_check(n_reps=args.fim_reps)
    checks = [
        ("control DARE residual", dare["control_residual"], 1e-10),
        ("filter DARE residual", dare["filter_residual"], 1e-10),
        ("control DARE vs scipy", dare["control_vs_scipy"], 1e-8),
        ("filter DARE vs scipy", dare["filter_vs_scipy"], 1e-8),
        ("Ho-Kalman round trip", hk, 1e-6),
        ("FIM vs Monte Carlo", fim["relative_error"], 0.10),
    ]
    ok = True
    for name, val, tol in checks:
        passed = val <= tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {val:.3e} (tol {tol:g})")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqg-adapt", description="Adaptive LQG experiments with FIM-gated exploration.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the Monte Carlo experiment and write CSVs")
    run.add_argument("--config", help="JSON experiment file (default: bundled webserver setup)")
    run.add_argument("--algos", nargs="+", choices=["naive", "if2e", "cec_only", "optimal"])
    g = run.add_mutually_exclusive_group()
    g.add_argument("--seeds", type=int, help="number of runs, seeded from the config's base seed")
    g.add_argument("--seed-list", type=_seed_list, help="comma-separated explicit seeds")
    run.add_argument("--out", help="output directory (default: config output_dir)")
    run.add_argument("--parallel", type=int, default=1, help="worker processes (LQG_ADAPT_THREADS overrides)")
    run.add_argument("--strict", action="store_true", help="exit nonzero if any run failed")
    run.add_argument("--no-traces", action="store_true", help="skip per-run trace CSVs")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config file and report every problem")
    val.add_argument("--config")
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle", help="run independent numerical self-checks")
    orc.add_argument("--config")
    orc.add_argument("--fim-reps", type=int, default=10_000)
    orc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
