from collections import Counter

import numpy as np
import pytest

from sasrl import agent, ddpg, nn
from sasrl.agent import SasrlConfig, SasrlLearner
from sasrl.core import Batch
from sasrl.ddpg import DdpgActor, DdpgLearner, SavCritic, ddpg_actor_gradient, ddpg_actor_step, ddpg_td_target, ddpg_train
from sasrl.envs import make_env

FORMULATION_KEYS = {"critic_input", "actor_output_space", "gradient_slot"}


class QuadraticQ:
    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value_and_grad(self, s, a):
        diff = np.atleast_2d(a) - self.c
        return -np.sum(diff ** 2, axis=1), -2 * diff


def test_ddpg_td_target_cutoffs():
    rng = np.random.default_rng(0)
    actor, critic = DdpgActor(2, -np.ones(2), np.ones(2), rng), SavCritic(2, 2, rng)
    assert ddpg_td_target(1.5, np.zeros(2), True, actor, critic, 0.99) == 1.5
    assert ddpg_td_target(-2.0, np.zeros(2), False, actor, critic, 0.0) == -2.0


def test_ddpg_actor_reaches_quadratic_optimum():
    rng = np.random.default_rng(1)
    actor = DdpgActor(1, np.zeros(1), np.ones(1), rng, hidden=(32, 32), learning_rate=1e-3)
    q = QuadraticQ([0.3])
    for _ in range(3000):
        s = rng.uniform(size=(64, 1))
        ddpg_actor_step(actor, q, Batch(s, s, s, np.zeros(64), np.zeros(64, bool)))
    assert np.all(np.abs(actor(np.linspace(0, 1, 21)[:, None])[:, 0] - 0.3) < 1e-2)


@pytest.mark.parametrize("draw", range(5))
def test_ddpg_actor_gradient_directional(draw):
    rng = np.random.default_rng(50 + draw)
    critic = SavCritic(3, 2, rng, hidden=(16, 16))
    actor = DdpgActor(3, np.array([-0.5, 0.0]), np.array([0.5, 2.0]), rng, hidden=(16, 16))
    s = rng.uniform(-1, 1, size=(10, 3))
    tape, _ = ddpg_actor_gradient(actor, critic, s)
    theta, g = actor.net.flat(), tape.flat()

    def j(th):
        actor.net.set_flat(th)
        return float(np.mean(critic.value(s, actor(s))))
    h = 1e-5
    for _ in range(10):
        u = rng.normal(size=theta.size)
        u /= np.linalg.norm(u)
        fd = (j(theta + h * u) - j(theta - h * u)) / (2 * h)
        assert abs(fd - g @ u) <= 1e-3 * max(abs(fd), abs(g @ u), 1e-6)
    actor.net.set_flat(theta)


def test_update_paths_differ_only_in_formulation():
    env = make_env("gridworld")
    cfg = SasrlConfig()
    a = SasrlLearner(env, cfg, np.random.default_rng(0)).update_path()
    b = DdpgLearner(env, cfg, np.random.default_rng(0)).update_path()
    assert a.keys() == b.keys()
    differing = {k for k in a if a[k] != b[k]}
    assert differing == FORMULATION_KEYS


def test_learners_share_the_same_primitives():
    for name in ("adam_apply", "backward", "trace_forward", "mse_loss", "soft_update", "AdamState", "BoxHead"):
        assert getattr(agent, name) is getattr(nn, name) is getattr(ddpg, name)


def test_one_update_makes_the_same_calls(monkeypatch):
    calls = {}
    for algo, module, cls in (("sasrl", agent, SasrlLearner), ("ddpg", ddpg, DdpgLearner)):
        counter = Counter()
        for name in ("adam_apply", "soft_update", "mse_loss"):
            real = getattr(nn, name)

            def wrapped(*args, _real=real, _name=name, **kw):
                counter[_name] += 1
                return _real(*args, **kw)
            monkeypatch.setattr(module, name, wrapped)
        env = make_env("gridworld")
        learner = cls(env, SasrlConfig(), np.random.default_rng(0))
        rng = np.random.default_rng(1)
        s = rng.uniform(size=(64, 2))
        learner.update(Batch(s, s, rng.uniform(-0.1, 0.1, (64, 2)), rng.normal(size=64), np.zeros(64, bool)))
        calls[algo] = counter
    assert calls["sasrl"] == calls["ddpg"] == Counter(adam_apply=2, soft_update=2, mse_loss=1)


def test_ddpg_train_is_reproducible():
    cfg = SasrlConfig(max_iterations=200, eval_interval=100, eval_episodes=2, prefill=200, collect_steps=50)
    a, b = ddpg_train("gridworld", cfg, 5), ddpg_train("gridworld", cfg, 5)
    assert a.curve.rows == b.curve.rows and len(a.curve) == 2


def test_ddpg_exploration_snaps_to_discrete_set():
    env = make_env("gridworld")
    learner = DdpgLearner(env, SasrlConfig(granularity="coarse"), np.random.default_rng(0))
    pick = learner.exploring(np.random.default_rng(1))
    a = pick(np.array([0.2, 0.2]))
    assert np.linalg.norm(a) == pytest.approx(0.15)
