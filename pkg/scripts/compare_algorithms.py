"""Train sasRL and DDPG with identical settings on one environment, then print the comparison table.

    python3 scripts/compare_algorithms.py --env slot --seeds 0,1,2,3,4 --steps 20000
"""

import argparse
import logging
from pathlib import Path

from sasrl.harness import build_config, compare_report, run_experiment


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--env", default="gridworld")
    p.add_argument("--seeds", default="0,1,2,3,4,5,6,7,8,9")
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--granularity", default="continuous")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    dirs = []
    for algo in ("ddpg", "sasrl"):
        cfg = build_config({"algo": algo, "env": args.env, "seeds": args.seeds, "granularity": args.granularity,
                            "max_gradient_steps": str(args.steps), "workers": str(args.workers), "out_dir": args.out})
        dirs.append(run_experiment(cfg))
        print(f"{algo}: {dirs[-1]}")
    print(compare_report(dirs, Path(args.out) / f"compare_{args.env}.csv"))


if __name__ == "__main__":
    main()
