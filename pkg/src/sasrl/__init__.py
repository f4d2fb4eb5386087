"""State-action separable RL: a next-state actor with a state-transition critic."""

__version__ = "0.1.0"
