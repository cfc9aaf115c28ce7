"""Command-line harness.

Subcommands mirror the experiment operations: ``reference`` caches the
high-accuracy run, ``run-sl``/``run-ml`` execute one estimator at a chosen
tolerance, ``sweep`` writes the RMSE-vs-cost CSV and ``rates`` fits the
empirical level-decay exponent.  Exit codes: 0 success, 2 invalid config,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment, multilevel
from .errors import ConfigError, NumericalFailureError
from .svgd import Ensemble

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON config file (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlsvgd",
        description="Multilevel SVGD benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ref = sub.add_parser("reference", help="compute and cache the reference values")
    _add_common(p_ref)

    for name in ("run-sl", "run-ml"):
        p = sub.add_parser(name, help=f"one {name[4:].upper()} estimate")
        _add_common(p)
        p.add_argument("--epsilon", type=float, default=None,
                       help="tolerance (default: first grid entry)")
        p.add_argument("--n-steps", type=int, default=None,
                       help="iteration count (default: first config entry)")
        p.add_argument("--dump-particles", action="store_true",
                       help="write final particle positions as CSV")
        if name == "run-ml":
            p.add_argument("--parallel", type=int, default=0,
                           help="worker threads across coupled pairs")

    p_sweep = sub.add_parser("sweep", help="full RMSE-vs-cost sweep, writes CSV")
    _add_common(p_sweep)
    p_sweep.add_argument("--parallel", type=int, default=0,
                         help="worker threads across sweep cells")

    p_rates = sub.add_parser("rates", help="fit the level-decay rate of the gradients")
    _add_common(p_rates)
    return parser


def _load_config(args) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config) if args.config else experiment.ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _dump_particles(out_dir: Path, tag: str, ensemble: Ensemble) -> None:
    path = out_dir / f"particles_{tag}.csv"
    header = ",".join(f"x{i}" for i in range(ensemble.dim))
    lines = [header] + [
        ",".join(repr(float(v)) for v in row) for row in ensemble.positions
    ]
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _pick(value, options, what):
    if value is None:
        return options[0]
    if what == "epsilon" and value not in options:
        raise ConfigError(f"epsilon {value} is not on the config grid {list(options)}")
    if what == "n_steps" and value not in options:
        raise ConfigError(f"n_steps {value} is not in the config list {list(options)}")
    return value


def cmd_reference(args) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    target = experiment.build_target(cfg)
    values = {
        str(n): experiment.generate_reference(cfg, n, cache_dir=out, target=target)
        for n in cfg.n_steps
    }
    forward = target.level_matrix(cfg.l_ref)
    payload = {
        "values": values,
        "forward_matrix": {
            "level": cfg.l_ref,
            "obs_points": list(cfg.observation_points()),
            "matrix": forward.tolist(),
        },
    }
    path = out / "reference.json"
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))
    print(f"wrote {path}")
    return EXIT_OK


def _run_single(args, kind: str) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    eps = _pick(args.epsilon, cfg.epsilons, "epsilon")
    n = _pick(args.n_steps, cfg.n_steps, "n_steps")
    target = experiment.build_target(cfg)
    phi = cfg.functional()
    run_cfg = cfg.run_config(n)
    sl_sched, ml_sched = cfg.schedules(eps)
    collected: dict[str, Ensemble] = {}
    collect = collected.__setitem__ if args.dump_particles else None
    if kind == "sl":
        value, ledger = multilevel.run_sl(
            sl_sched, target, phi, run_cfg, (cfg.seed, 0), collect=collect
        )
        payload = {
            "estimator": "sl", "epsilon": eps, "n_steps": n, "value": value,
            "level": sl_sched.L, "N": sl_sched.N[0],
            "cost_total": ledger.total,
            "eval_counts": {str(k): v for k, v in ledger.eval_counts.items()},
        }
        path = out / "run_sl.json"
    else:
        value, ledger, report = multilevel.run_ml(
            ml_sched, target, phi, run_cfg, (cfg.seed, 1),
            parallel=args.parallel, collect=collect,
        )
        payload = {
            "estimator": "ml", "epsilon": eps, "n_steps": n, "value": value,
            "levels": list(ml_sched.levels()), "N": list(ml_sched.N),
            "cost_total": ledger.total,
            "eval_counts": {str(k): v for k, v in ledger.eval_counts.items()},
            "per_level": report,
        }
        path = out / "run_ml.json"
    path.write_text(json.dumps(payload, indent=1))
    for tag, ensemble in collected.items():
        _dump_particles(out, tag, ensemble)
    print(f"value={value!r} cost={ledger.total} -> {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    rows = experiment.run_sweep(cfg, cache_dir=out, parallel=args.parallel)
    path = experiment.write_sweep_csv(rows, out / "sweep.csv")
    for n in cfg.n_steps:
        sl_slope, ml_slope = experiment.fit_cost_slopes(rows, n)
        print(f"n_steps={n}: |slope| SL={sl_slope:.3f} ML={ml_slope:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_rates(args) -> int:
    cfg = _load_config(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    fit = experiment.estimate_beta(cfg)
    payload = {
        "slope": fit.slope,
        "r_squared": fit.r_squared,
        "degenerate": fit.degenerate,
        "levels": list(fit.levels),
        "mean_gradient_differences": list(fit.values),
    }
    path = out / "rates.json"
    path.write_text(json.dumps(payload, indent=1))
    print(f"slope={fit.slope:.4f} r2={fit.r_squared:.4f} -> {path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reference":
            return cmd_reference(args)
        if args.command == "run-sl":
            return _run_single(args, "sl")
        if args.command == "run-ml":
            return _run_single(args, "ml")
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "rates":
            return cmd_rates(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
