"""Continuous vs coarse vs fine behaviour data for sasRL on the grid world.

    python3 scripts/granularity_ablation.py --seeds 0,1,2,3,4
"""

import argparse
from pathlib import Path

from sasrl.harness import build_config, compare_report, run_experiment


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--env", default="gridworld")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--levels", default="continuous,coarse,fine")
    p.add_argument("--out", default="runs")
    args = p.parse_args()

    dirs = []
    for gran in args.levels.split(","):
        cfg = build_config({"algo": "sasrl", "env": args.env, "seeds": args.seeds, "granularity": gran,
                            "max_gradient_steps": str(args.steps), "out_dir": args.out})
        dirs.append(run_experiment(cfg))
    print(compare_report(dirs, Path(args.out) / f"granularity_{args.env}.csv"))


if __name__ == "__main__":
    main()
