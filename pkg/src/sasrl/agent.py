"""The sasRL learner: a state-transition critic Phi(s, s') and a next-state actor mu(s)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .behavior import GRANULARITIES, discrete_actions, snap
from .core import Batch, Env
from .nn import AdamState, BoxHead, Mlp, adam_apply, backward, mse_loss, soft_update, trace_forward
from .transition import TransitionModel, fit as fit_transition, predict as predict_action


@dataclass
class SasrlConfig:
    """Hyper-parameters shared by the sasRL and DDPG learners."""
    gamma: float | None = None  # None: use the environment's discount
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    soft_eps: float = 0.005
    batch_size: int = 64
    hidden: tuple[int, ...] = (64, 64)
    max_iterations: int = 20_000
    eval_interval: int = 500
    eval_episodes: int = 10
    projection_candidates: int = 64
    behavior_policy: str = "noisy_actor"
    noise_scale: float = 0.1  # exploration sigma as a fraction of the box half-width
    granularity: str = "continuous"
    buffer_capacity: int = 100_000
    prefill: int = 5_000
    collect_steps: int = 500
    patience: int = 20
    tmodel_epochs: int = 50
    tmodel_batch: int = 128
    tmodel_refresh_epochs: int = 2

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("actor_lr", "critic_lr"):
            v = getattr(self, name)
            if not (v > 0 and np.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not 0.0 < self.soft_eps <= 1.0:
            raise ValueError(f"soft_eps must lie in (0, 1], got {self.soft_eps}")
        for name in ("batch_size", "eval_interval", "eval_episodes", "projection_candidates",
                     "buffer_capacity", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0 or self.prefill < 0 or self.collect_steps < 0:
            raise ValueError("iteration and sample counts must be non-negative")
        if self.behavior_policy not in ("uniform_random", "noisy_actor"):
            raise ValueError(f"unknown behavior policy {self.behavior_policy!r}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")


class StvCritic:
    """Phi_kappa(s, s') with a delayed copy."""

    def __init__(self, state_width: int, rng: np.random.Generator, hidden=(64, 64), learning_rate=1e-3):
        self.state_width = state_width
        self.net = Mlp.create([2 * state_width, *hidden, 1], rng, "relu", "linear")
        self.target_net = self.net.copy()
        self.opt = AdamState.for_net(self.net, learning_rate)

    def value(self, s, s_next, target: bool = False) -> np.ndarray:
        net = self.target_net if target else self.net
        return nn.forward(net, np.concatenate([np.atleast_2d(s), np.atleast_2d(s_next)], axis=1))[:, 0]

    def value_and_grad(self, s, s_next) -> tuple[np.ndarray, np.ndarray]:
        """Per-row Phi(s, s') and its gradient with respect to s'."""
        x = np.concatenate([np.atleast_2d(s), np.atleast_2d(s_next)], axis=1)
        tr = trace_forward(self.net, x)
        tape = backward(self.net, x, np.ones((len(x), 1)), tr)
        return tr.output[:, 0], tape.input_gradient[:, self.state_width:]


class NextStatePolicy:
    """mu_theta(s): tanh output mapped onto the state box, with a delayed copy."""

    def __init__(self, state_low, state_high, rng: np.random.Generator, hidden=(64, 64), learning_rate=1e-4):
        self.head = BoxHead(state_low, state_high)
        d = len(self.head.low)
        self.net = Mlp.create([d, *hidden, d], rng, "relu", "tanh")
        self.target_net = self.net.copy()
        self.opt = AdamState.for_net(self.net, learning_rate)

    def __call__(self, s, target: bool = False) -> np.ndarray:
        return self.head.scale(nn.forward(self.target_net if target else self.net, s))


def td_target(r, s_next, done, policy: NextStatePolicy, critic: StvCritic, gamma: float):
    """r + gamma * Phi'(s', mu'(s')), cut at terminal samples; delayed networks only."""
    r = np.asarray(r, dtype=np.float64)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    done = np.atleast_1d(np.asarray(done, dtype=bool))
    s_next = np.atleast_2d(s_next)
    boot = critic.value(s_next, policy(s_next, target=True), target=True)
    if not np.all(np.isfinite(boot)):
        raise nn.NonFiniteError("delayed critic produced non-finite values")
    y = r + gamma * np.where(done, 0.0, boot)
    return float(y[0]) if scalar else y


def critic_step(critic: StvCritic, policy: NextStatePolicy, batch, gamma: float) -> float:
    """One minimisation step on the mean squared TD(0) error; returns the pre-step loss."""
    batch = Batch.from_samples(batch)
    y = td_target(batch.r, batch.s_next, batch.done, policy, critic, gamma)
    x = np.concatenate([batch.s, batch.s_next], axis=1)
    tr = trace_forward(critic.net, x)
    loss, grad = mse_loss(tr.output[:, 0], y)
    if not np.isfinite(loss):
        raise nn.NonFiniteError(f"critic loss is {loss}")
    adam_apply(critic.net, critic.opt, backward(critic.net, x, grad[:, None], tr), "minimize")
    return loss


def actor_objective(policy: NextStatePolicy, critic: StvCritic, s) -> float:
    """Mean Phi(s, mu(s)) over a batch of states."""
    s = np.atleast_2d(s)
    return float(np.mean(critic.value(s, policy(s))))


def actor_gradient(policy: NextStatePolicy, critic: StvCritic, s) -> tuple[nn.GradientTape, float]:
    """Chain grad_theta mu(s) . grad_{s'} Phi(s, s')|_{s'=mu(s)}, averaged over the batch."""
    s = np.atleast_2d(s)
    n = len(s)
    atr = trace_forward(policy.net, s)
    values, grad_snext = critic.value_and_grad(s, policy.head.scale(atr.output))
    tape = backward(policy.net, s, grad_snext * (policy.head.half / n), atr)
    return tape, float(np.mean(values))


def actor_step(policy: NextStatePolicy, critic: StvCritic, batch) -> float:
    """Gradient ascent on mean Phi(s, mu(s)); the critic is left untouched."""
    s = batch.s if isinstance(batch, Batch) else Batch.from_samples(batch).s
    tape, j = actor_gradient(policy, critic, s)
    adam_apply(policy.net, policy.opt, tape, "maximize")
    return j


def project_next_state(env: Env, s, raw, n: int) -> np.ndarray:
    """Nearest (Euclidean) one-step-reachable state to ``raw``; lowest index wins ties."""
    cands = env.feasible_candidates(s, n)
    if len(cands) == 0:
        raise ValueError("environment produced no feasible candidates")
    dist = np.sum((cands - np.asarray(raw, dtype=np.float64)) ** 2, axis=1)
    return cands[int(np.argmin(dist))].copy()


def act(policy: NextStatePolicy, env: Env, s, config: SasrlConfig, explore: bool = False,
        rng: np.random.Generator | None = None, tmodel=None):
    """Returns (target next state, action). The action is None when it is deferred,
    i.e. the environment has no inverse and no transition model was given."""
    raw = policy(s)
    if explore and config.noise_scale > 0:
        rng = rng if rng is not None else np.random.default_rng()
        raw = raw + rng.normal(0.0, config.noise_scale * policy.head.half)
    raw = policy.head.clip(raw)
    s_target = project_next_state(env, s, raw, config.projection_candidates)
    a = env.inverse_action(s, s_target)
    if a is None and tmodel is not None:
        a = predict_action(tmodel, s, s_target)
    return s_target, a


@dataclass
class SasrlLearner:
    env: Env
    config: SasrlConfig
    rng: np.random.Generator
    critic: StvCritic = field(init=False)
    policy: NextStatePolicy = field(init=False)
    tmodel: object = field(init=False, default=None)

    algo = "sasrl"

    def __post_init__(self):
        c, env = self.config, self.env
        self.gamma = env.gamma if c.gamma is None else c.gamma
        self.critic = StvCritic(env.state_width, self.rng, c.hidden, c.critic_lr)
        self.policy = NextStatePolicy(env.state_low, env.state_high, self.rng, c.hidden, c.actor_lr)
        if not env.has_inverse_action:
            self.tmodel = TransitionModel.for_env(env, self.rng, hidden=c.hidden)
        self._discrete = discrete_actions(c.granularity, env)

    def update(self, batch: Batch) -> dict:
        loss = critic_step(self.critic, self.policy, batch, self.gamma)
        j = actor_step(self.policy, self.critic, batch)
        soft_update(self.critic.net, self.critic.target_net, self.config.soft_eps)
        soft_update(self.policy.net, self.policy.target_net, self.config.soft_eps)
        return {"critic_loss": loss, "actor_objective": j}

    def greedy(self, s) -> np.ndarray:
        return act(self.policy, self.env, s, self.config, tmodel=self.tmodel)[1]

    def exploring(self, rng):
        """Collection policy after prefill; None means keep the uniform behaviour policy."""
        if self.config.behavior_policy == "uniform_random" or not self.env.has_inverse_action:
            return None

        def pick(s):
            a = act(self.policy, self.env, s, self.config, explore=True, rng=rng)[1]
            return a if self._discrete is None else snap(self._discrete, a)
        return pick

    def after_prefill(self, buffer) -> None:
        if self.tmodel is not None:
            fit_transition(self.tmodel, buffer, self.config.tmodel_epochs, self.config.tmodel_batch, self.rng)

    def before_evaluate(self, buffer) -> None:
        if self.tmodel is not None and self.config.tmodel_refresh_epochs > 0:
            fit_transition(self.tmodel, buffer, self.config.tmodel_refresh_epochs, self.config.tmodel_batch, self.rng)

    def checkpoints(self) -> dict[str, Mlp]:
        out = {"actor": self.policy.net, "critic": self.critic.net}
        if self.tmodel is not None:
            out["tmodel"] = self.tmodel.net
        return out

    def update_path(self) -> dict:
        return update_path_description(self.algo, self.config, self.gamma)


def update_path_description(algo: str, config: SasrlConfig, gamma: float) -> dict:
    """Everything that configures an actor-critic update, for parity audits."""
    formulation = {
        "sasrl": {"critic_input": ("s", "s_next"), "actor_output_space": "state", "gradient_slot": "s_next"},
        "ddpg": {"critic_input": ("s", "a"), "actor_output_space": "action", "gradient_slot": "a"},
    }[algo]
    return {
        **formulation,
        "gamma": gamma,
        "actor_lr": config.actor_lr,
        "critic_lr": config.critic_lr,
        "soft_eps": config.soft_eps,
        "batch_size": config.batch_size,
        "hidden": config.hidden,
        "hidden_activation": "relu",
        "actor_output_activation": "tanh",
        "critic_loss": "mean_squared_td0",
        "optimizer": "adam(0.9,0.999,1e-8)",
        "delayed_networks": True,
        "critic_steps_per_actor_step": 1,
        "buffer_capacity": config.buffer_capacity,
        "prefill": config.prefill,
        "eval_interval": config.eval_interval,
        "eval_episodes": config.eval_episodes,
    }


def train(env_name: str, config: SasrlConfig, seed: int, env_overrides: dict | None = None):
    """Run the sasRL training procedure; returns a ``TrainResult``."""
    from .training import run_training
    return run_training("sasrl", env_name, config, seed, env_overrides or {})
