"""DDPG baseline on the same networks, buffer and training loop as sasRL.

Only the formulation differs: the critic reads (s, a), the actor emits an
action, and the actor ascends through the critic's action slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .agent import SasrlConfig, update_path_description
from .behavior import discrete_actions, snap
from .core import Batch, Env
from .nn import AdamState, BoxHead, Mlp, adam_apply, backward, mse_loss, soft_update, trace_forward


class SavCritic:
    """Q(s, a) with a delayed copy."""

    def __init__(self, state_width: int, action_width: int, rng, hidden=(64, 64), learning_rate=1e-3):
        self.state_width = state_width
        self.net = Mlp.create([state_width + action_width, *hidden, 1], rng, "relu", "linear")
        self.target_net = self.net.copy()
        self.opt = AdamState.for_net(self.net, learning_rate)

    def value(self, s, a, target: bool = False) -> np.ndarray:
        net = self.target_net if target else self.net
        return nn.forward(net, np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1))[:, 0]

    def value_and_grad(self, s, a) -> tuple[np.ndarray, np.ndarray]:
        """Per-row Q(s, a) and its gradient with respect to a."""
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(a)], axis=1)
        tr = trace_forward(self.net, x)
        tape = backward(self.net, x, np.ones((len(x), 1)), tr)
        return tr.output[:, 0], tape.input_gradient[:, self.state_width:]


class DdpgActor:
    def __init__(self, state_width: int, action_low, action_high, rng, hidden=(64, 64), learning_rate=1e-4):
        self.head = BoxHead(action_low, action_high)
        self.net = Mlp.create([state_width, *hidden, len(self.head.low)], rng, "relu", "tanh")
        self.target_net = self.net.copy()
        self.opt = AdamState.for_net(self.net, learning_rate)

    def __call__(self, s, target: bool = False) -> np.ndarray:
        return self.head.scale(nn.forward(self.target_net if target else self.net, s))


def ddpg_td_target(r, s_next, done, actor: DdpgActor, critic: SavCritic, gamma: float):
    r = np.asarray(r, dtype=np.float64)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    done = np.atleast_1d(np.asarray(done, dtype=bool))
    s_next = np.atleast_2d(s_next)
    boot = critic.value(s_next, actor(s_next, target=True), target=True)
    if not np.all(np.isfinite(boot)):
        raise nn.NonFiniteError("delayed critic produced non-finite values")
    y = r + gamma * np.where(done, 0.0, boot)
    return float(y[0]) if scalar else y


def ddpg_critic_step(critic: SavCritic, actor: DdpgActor, batch, gamma: float) -> float:
    batch = Batch.from_samples(batch)
    y = ddpg_td_target(batch.r, batch.s_next, batch.done, actor, critic, gamma)
    x = np.concatenate([batch.s, batch.a], axis=1)
    tr = trace_forward(critic.net, x)
    loss, grad = mse_loss(tr.output[:, 0], y)
    if not np.isfinite(loss):
        raise nn.NonFiniteError(f"critic loss is {loss}")
    adam_apply(critic.net, critic.opt, backward(critic.net, x, grad[:, None], tr), "minimize")
    return loss


def ddpg_actor_gradient(actor: DdpgActor, critic: SavCritic, s):
    s = np.atleast_2d(s)
    n = len(s)
    atr = trace_forward(actor.net, s)
    values, grad_a = critic.value_and_grad(s, actor.head.scale(atr.output))
    tape = backward(actor.net, s, grad_a * (actor.head.half / n), atr)
    return tape, float(np.mean(values))


def ddpg_actor_step(actor: DdpgActor, critic: SavCritic, batch) -> float:
    s = batch.s if isinstance(batch, Batch) else Batch.from_samples(batch).s
    tape, j = ddpg_actor_gradient(actor, critic, s)
    adam_apply(actor.net, actor.opt, tape, "maximize")
    return j


@dataclass
class DdpgLearner:
    env: Env
    config: SasrlConfig
    rng: np.random.Generator
    critic: SavCritic = field(init=False)
    actor: DdpgActor = field(init=False)

    algo = "ddpg"

    def __post_init__(self):
        c, env = self.config, self.env
        self.gamma = env.gamma if c.gamma is None else c.gamma
        self.critic = SavCritic(env.state_width, env.action_width, self.rng, c.hidden, c.critic_lr)
        self.actor = DdpgActor(env.state_width, env.action_low, env.action_high, self.rng, c.hidden, c.actor_lr)
        self._discrete = discrete_actions(c.granularity, env)

    def update(self, batch: Batch) -> dict:
        loss = ddpg_critic_step(self.critic, self.actor, batch, self.gamma)
        j = ddpg_actor_step(self.actor, self.critic, batch)
        soft_update(self.critic.net, self.critic.target_net, self.config.soft_eps)
        soft_update(self.actor.net, self.actor.target_net, self.config.soft_eps)
        return {"critic_loss": loss, "actor_objective": j}

    def greedy(self, s) -> np.ndarray:
        return self.actor(s)

    def exploring(self, rng):
        if self.config.behavior_policy == "uniform_random":
            return None
        sigma = self.config.noise_scale * self.actor.head.half

        def pick(s):
            a = self.actor.head.clip(self.actor(s) + rng.normal(0.0, sigma))
            return a if self._discrete is None else snap(self._discrete, a)
        return pick

    def after_prefill(self, buffer) -> None:
        pass

    def before_evaluate(self, buffer) -> None:
        pass

    def checkpoints(self) -> dict[str, Mlp]:
        return {"actor": self.actor.net, "critic": self.critic.net}

    def update_path(self) -> dict:
        return update_path_description(self.algo, self.config, self.gamma)


def ddpg_train(env_name: str, config: SasrlConfig, seed: int, env_overrides: dict | None = None):
    from .training import run_training
    return run_training("ddpg", env_name, config, seed, env_overrides or {})
