"""Occupancy-ratio report for every environment under uniform-random behaviour.

Prints one ``env W r1 r2 k regime`` line per environment and sample size, so
the drift of k with W is visible.

    python3 scripts/probe_environments.py --sizes 10000,100000 --bins 10,8
"""

import argparse

import numpy as np

from sasrl.behavior import behavior_policy
from sasrl.envs import ENVIRONMENTS, make_env
from sasrl.probe import Discretizer, NotEnoughData, OccupancyStats, accumulate, report_line
from sasrl.training import collect


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--envs", default=",".join(ENVIRONMENTS))
    p.add_argument("--sizes", default="10000,100000")
    p.add_argument("--bins", default="10,8")
    p.add_argument("--granularity", default="continuous")
    p.add_argument("--seed", type=int, default=11)
    args = p.parse_args()
    state_bins, action_bins = (int(b) for b in args.bins.split(","))
    sizes = sorted(int(w) for w in args.sizes.split(","))

    for name in args.envs.split(","):
        env = make_env(name, seed=args.seed)
        disc = Discretizer.for_env(env, state_bins, action_bins)
        policy = behavior_policy(args.granularity, env, np.random.default_rng(args.seed + 1))
        stats = OccupancyStats()
        for w in sizes:
            # grow the same sample stream so larger W extends smaller W
            accumulate(stats, collect(env, policy, w - stats.W), disc)
            try:
                print(name, report_line(stats))
            except NotEnoughData as exc:
                print(name, stats.W, "insufficient support:", exc)


if __name__ == "__main__":
    main()
