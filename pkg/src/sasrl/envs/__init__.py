"""Simulators: continuous grid-world exit, a berzerk-like arena, and a slot machine."""

from __future__ import annotations

import dataclasses

from .berzerk import BerzerkConfig, BerzerkWorld
from .gridworld import GridConfig, GridWorldExit
from .slot import SlotConfig, SlotMachine

ENVIRONMENTS = {
    "gridworld": (GridWorldExit, GridConfig),
    "berzerk": (BerzerkWorld, BerzerkConfig),
    "slot": (SlotMachine, SlotConfig),
}


def make_env(name: str, seed=0, **overrides):
    """Build an environment by name; ``overrides`` replace config fields."""
    try:
        cls, cfg_cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    known = {f.name for f in dataclasses.fields(cfg_cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown {name} settings: {sorted(unknown)}")
    return cls(cfg_cls(**overrides), seed=seed)


__all__ = ["BerzerkConfig", "BerzerkWorld", "ENVIRONMENTS", "GridConfig", "GridWorldExit",
           "SlotConfig", "SlotMachine", "make_env"]
