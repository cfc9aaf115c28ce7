#!/usr/bin/env python3
"""End-to-end desk benchmark: reference, sweep, rate fit, slope summary.

Writes reference.json, sweep.csv and rates.json into --out and prints the
fitted cost-vs-error slopes for both estimators.  Feed sweep.csv to the
plotting frontend for the log-log figures.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from mlsvgd import experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path, default=None, help="JSON experiment config")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--parallel", type=int, default=0, help="sweep worker threads")
    args = parser.parse_args()

    cfg = experiment.load_config(args.config) if args.config else experiment.ExperimentConfig()
    args.out.mkdir(parents=True, exist_ok=True)

    started = time.time()
    target = experiment.build_target(cfg)
    references = {
        n: experiment.generate_reference(cfg, n, cache_dir=args.out, target=target)
        for n in cfg.n_steps
    }
    print(f"reference values {references} ({time.time() - started:.0f}s)")

    rows = experiment.run_sweep(cfg, cache_dir=args.out, parallel=args.parallel)
    csv_path = experiment.write_sweep_csv(rows, args.out / "sweep.csv")
    print(f"sweep -> {csv_path}")
    for n in cfg.n_steps:
        sl_slope, ml_slope = experiment.fit_cost_slopes(rows, n)
        print(f"  n_steps={n}: |dlog cost/dlog rmse| SL={sl_slope:.2f} ML={ml_slope:.2f}")

    fit = experiment.estimate_beta(cfg, target=target)
    (args.out / "rates.json").write_text(json.dumps({
        "slope": fit.slope, "r_squared": fit.r_squared, "degenerate": fit.degenerate,
        "levels": list(fit.levels), "mean_gradient_differences": list(fit.values),
    }, indent=1))
    print(f"level-decay fit: slope={fit.slope:.3f} r2={fit.r_squared:.4f}")
    print(f"total {time.time() - started:.0f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
