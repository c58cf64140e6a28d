"""Run the desk chirp experiment over several seeds and tabulate the comparison.

    python3 scripts/run_desk_experiment.py --seeds 100 101 102 --out runs/desk_multi
    python3 scripts/run_desk_experiment.py --layers 1 2 3 4 6   # include K = 6

Prints one row per (seed, K) with the matched-budget MF, untrained and trained
AUCs, then the per-K win counts.
"""

import argparse
from dataclasses import replace
import os
import time

from tpopt.cli import default_config_path
from tpopt.config import load_config_file
from tpopt.pipeline import Pipeline, load_summary

STAGES = ("generate", "embed", "jacobians", "tune", "train", "mf", "eval")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=default_config_path())
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(100, 110)))
    ap.add_argument("--layers", type=int, nargs="+", help="override eval.layers")
    ap.add_argument("--out", default="runs/desk_multi")
    args = ap.parse_args()

    base = load_config_file(args.config)
    if args.layers:
        tune = replace(base.tune, layers=max(base.tune.layers, max(args.layers)))
        base = replace(base, tune=tune, eval=replace(base.eval, layers=args.layers))
    wins = {}
    t0 = time.perf_counter()
    print("seed  K  budget   mf      untrained  trained")
    for seed in args.seeds:
        pipe = Pipeline(replace(base, seed=seed), os.path.join(args.out, f"seed{seed}"))
        for stage in STAGES:
            pipe.run(stage)
        for c in load_summary(pipe.out)["comparisons"]:
            print(f"{seed:4d} {c['K']:2d} {c['budget']:7d}  {c['auc_mf']:.4f}  "
                  f"{c['auc_untrained']:.4f}     {c['auc_trained']:.4f}")
            w = wins.setdefault(c["K"], [0, 0])
            w[0] += c["trained_ge_mf"]
            w[1] += c["trained_ge_untrained"]
    n = len(args.seeds)
    for K, (a, b) in sorted(wins.items()):
        print(f"K={K}: trained >= MF in {a}/{n}, trained >= untrained in {b}/{n}")
    print(f"wall time {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
