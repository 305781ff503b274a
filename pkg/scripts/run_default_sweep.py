"""Run the default benchmark sweep and print the headline comparisons.

Equivalent to `bench run --out <dir>` plus a short console digest of how the
hybrid scheduler compares against the two baselines at the largest task count.

Usage: python3 scripts/run_default_sweep.py [--out sweep_out] [--jobs N]
"""

import argparse
import sys

from cloudsched.bench import default_config, run_experiment, summarize


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="sweep_out", help="report directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes")
    args = ap.parse_args()

    config = default_config()
    rows = run_experiment(config, jobs=args.jobs, out_dir=args.out)
    ok = sum(1 for r in rows if r["status"] == "ok")
    print(f"{len(rows)} cells run, {ok} ok; report in {args.out}/")

    summary = {(s["algorithm"], s["task_count"]): s for s in summarize(rows)}
    top = config.sweep.stop
    for metric, label in (("time_median", "time cost"), ("load_median", "load rate")):
        g = summary[("gaaco", top)][metric]
        a = summary[("aco", top)][metric]
        s = summary[("sa", top)][metric]
        print(f"{label} at {top} tasks: gaaco {g:.4f}, aco {a:.4f}, sa {s:.4f}")
    return 0 if ok == len(rows) else 2


if __name__ == "__main__":
    sys.exit(main())
