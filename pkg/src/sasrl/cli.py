"""Command line entry point: train, probe-k, compare, fit-transition."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .core import Batch, read_trajectory_log
from .curve import CurveAlignmentError
from .envs import ENVIRONMENTS, make_env
from .harness import ConfigError, compare_report, load_config, run_experiment
from .nn import save_snapshot
from .probe import DEFAULT_SUPPORT, Discretizer, NotEnoughData, OccupancyStats, accumulate, report_line, write_histogram

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3

log = logging.getLogger("sasrl")


def _bins(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError("--bins takes STATE[,ACTION] positive integers")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sasrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one algorithm over several seeds")
    t.add_argument("--config", help="key=value config file")
    t.add_argument("--algo", choices=("sasrl", "ddpg"))
    t.add_argument("--env", choices=sorted(ENVIRONMENTS))
    t.add_argument("--seeds", help="comma separated seeds, or a count N meaning 0..N-1 when prefixed with '#'")
    t.add_argument("--granularity", choices=("continuous", "coarse", "fine"))
    t.add_argument("--max-gradient-steps", type=int)
    t.add_argument("--out-dir")
    t.add_argument("--workers", type=int)
    t.add_argument("--train-transition-model", action="store_true")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="extra config override")

    k = sub.add_parser("probe-k", help="estimate R1, R2 and k from a trajectory log")
    k.add_argument("--log", required=True, type=Path)
    k.add_argument("--bins", type=_bins, default=(10, 8), help="state bins[,action bins] per dimension")
    k.add_argument("--env", choices=sorted(ENVIRONMENTS), help="take the box from this environment")
    k.add_argument("--support", type=int, default=DEFAULT_SUPPORT)
    k.add_argument("--hist", type=Path, help="write the occupancy histogram CSV here")

    c = sub.add_parser("compare", help="plateau and pairwise improvement table")
    c.add_argument("--runs", nargs="+", required=True, type=Path)
    c.add_argument("--out", type=Path, help="summary CSV path")

    f = sub.add_parser("fit-transition", help="fit the transition model on a run's trajectory logs")
    f.add_argument("--run", required=True, type=Path)
    f.add_argument("--epochs", type=int)
    return p


def _train(args) -> int:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("algo", "env", "granularity", "max_gradient_steps", "out_dir", "workers"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = str(value)
    if args.seeds:
        seeds = args.seeds
        if seeds.startswith("#"):
            seeds = ",".join(map(str, range(int(seeds[1:]))))
        overrides["seeds"] = seeds
    if args.train_transition_model:
        overrides["train_transition_model"] = "true"
    config = load_config(args.config, overrides)
    out = run_experiment(config)
    print(out)
    failures = out / "failures.json"
    if failures.exists():
        print(f"divergence recorded in {failures}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _box_from_data(batch: Batch):
    s_all = np.concatenate([batch.s, batch.s_next])
    return s_all.min(0), s_all.max(0), batch.a.min(0), batch.a.max(0)


def _probe(args) -> int:
    samples = read_trajectory_log(args.log)
    if not samples:
        raise ConfigError(f"{args.log} holds no transitions")
    batch = Batch.from_samples(samples)
    sb, ab = args.bins
    if args.env:
        disc = Discretizer.for_env(make_env(args.env), sb, ab)
    else:
        disc = Discretizer(*_box_from_data(batch), sb, ab)
    stats = OccupancyStats()
    accumulate(stats, batch, disc)
    try:
        print(report_line(stats, args.support))
    except NotEnoughData as exc:
        print(f"not enough data: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.hist:
        write_histogram(stats, args.hist)
    return EXIT_OK


def _fit_transition(args) -> int:
    from .transition import TransitionModel, fit
    manifest = args.run / "manifest.cfg"
    if not manifest.exists():
        raise ConfigError(f"{manifest} not found")
    config = load_config(manifest)
    env = make_env(config.env, **config.env_overrides)
    agent = config.agent_config()
    logs = sorted(args.run.glob("*.traj"))
    if not logs:
        raise ConfigError(f"no trajectory logs in {args.run}")
    epochs = args.epochs if args.epochs is not None else agent.tmodel_epochs
    for path in logs:
        data = Batch.from_samples(read_trajectory_log(path))
        rng = np.random.default_rng(0)
        model = TransitionModel.for_env(env, rng, hidden=agent.hidden)
        loss = fit(model, data, epochs, agent.tmodel_batch, rng)
        target = path.with_suffix(".tmodel")
        save_snapshot(model.net, target)
        print(f"{target} loss={loss:.6g}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"train": _train, "probe-k": _probe, "compare": None, "fit-transition": _fit_transition}
    try:
        if args.command == "compare":
            print(compare_report(args.runs, args.out))
            return EXIT_OK
        return handlers[args.command](args)
    except (ConfigError, CurveAlignmentError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
