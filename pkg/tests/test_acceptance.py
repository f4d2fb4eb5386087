"""Acceptance suite. Each test is one criterion; a summary line per criterion is
printed at the end of the pytest run. The training experiments take tens of
minutes on one CPU."""

import time

import numpy as np
from hypothesis import given, settings, strategies as st

from sasrl import nn
from sasrl.agent import NextStatePolicy, StvCritic, actor_gradient, actor_objective, actor_step, critic_step
from sasrl.behavior import behavior_policy
from sasrl.core import Batch, ReplayBuffer, TransitionSample
from sasrl.curve import LearningCurve
from sasrl.envs import make_env
from sasrl.harness import build_config, random_policy_return, run_experiment
from sasrl.probe import Discretizer, OccupancyStats, accumulate, estimate_k
from sasrl.training import collect
from sasrl.transition import TransitionModel, fit, predict

# ---------------------------------------------------------------- helpers


def fd_param_grad(f, net, h=1e-6):
    theta = net.flat()
    out = np.empty_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        net.set_flat(up)
        fu = f()
        net.set_flat(dn)
        out[i] = (fu - f()) / (2 * h)
    net.set_flat(theta)
    return out


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-10))


def final_returns(out, seeds):
    return np.array([LearningCurve.from_csv(out / f"seed{s}.csv").rows[-1][1] for s in seeds])


def plateaus(out, seeds):
    return np.array([LearningCurve.from_csv(out / f"seed{s}.csv").plateau() for s in seeds])


# ---------------------------------------------------------------- 1


def test_criterion_01_gradient_oracles(record_property):
    rng = np.random.default_rng(2024)
    worst_param, worst_chain, probes = 0.0, 0.0, 0
    t0 = time.time()
    for _ in range(25):
        # critic: parameters and inputs of sum(Phi * g)
        critic = StvCritic(2, rng, hidden=(8, 8))
        x = rng.uniform(-1, 1, size=(5, 4))
        g = rng.normal(size=(5, 1))
        tape = nn.backward(critic.net, x, g)
        worst_param = max(worst_param, rel(tape.flat(), fd_param_grad(lambda: np.sum(nn.forward(critic.net, x) * g),
                                                                       critic.net)))
        num_in = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            up, dn = x.copy(), x.copy()
            up[idx] += 1e-6
            dn[idx] -= 1e-6
            num_in[idx] = (np.sum(nn.forward(critic.net, up) * g) - np.sum(nn.forward(critic.net, dn) * g)) / 2e-6
        worst_param = max(worst_param, rel(tape.input_gradient, num_in))
        probes += 2

        # actor chain rule: directional derivative of mean Phi(s, mu(s))
        policy = NextStatePolicy(np.zeros(2), np.array([1.0, 2.0]), rng, hidden=(8, 8))
        s = rng.uniform(0, 1, size=(6, 2))
        atape, _ = actor_gradient(policy, critic, s)
        theta = policy.net.flat()
        u = rng.normal(size=theta.size)
        u /= np.linalg.norm(u)
        policy.net.set_flat(theta + 1e-5 * u)
        jp = actor_objective(policy, critic, s)
        policy.net.set_flat(theta - 1e-5 * u)
        jm = actor_objective(policy, critic, s)
        policy.net.set_flat(theta)
        fd = (jp - jm) / 2e-5
        worst_chain = max(worst_chain, abs(fd - atape.flat() @ u) / max(abs(fd), 1e-8))
        probes += 1

        # transition-model loss, both loss kinds
        for kind in ("mse_continuous", "bce_binary"):
            model = TransitionModel(np.zeros(2), np.ones(2), np.zeros(2), np.ones(2), rng, hidden=(8, 8), loss_kind=kind)
            xs = model.encode_inputs(rng.uniform(size=(7, 2)), rng.uniform(size=(7, 2)))
            ys = model.encode_targets(rng.uniform(size=(7, 2)))
            tr = nn.trace_forward(model.net, xs)
            _, gout = model.loss(tr.output, ys)
            mtape = nn.backward(model.net, xs, gout, tr)
            num = fd_param_grad(lambda: model.loss(nn.forward(model.net, xs), ys)[0], model.net)
            worst_param = max(worst_param, rel(mtape.flat(), num))
            probes += 1
    elapsed = time.time() - t0
    record_property("measured", f"probes={probes} param_rel={worst_param:.2e} chain_rel={worst_chain:.2e} "
                                f"time={elapsed:.0f}s")
    assert probes >= 100
    assert worst_param < 1e-4
    assert worst_chain < 1e-3
    assert elapsed < 60


# ---------------------------------------------------------------- 2


def test_criterion_02_tabular_fixed_point(record_property):
    n, gamma = 5, 0.9
    successor = [1, 2, 3, 4, 4]

    class FixedPolicy:
        def __call__(self, s, target=False):
            return np.eye(n)[[successor[i] for i in np.argmax(np.atleast_2d(s), 1)]]

    rng = np.random.default_rng(7)
    pairs = [(i, i + 1) for i in range(4)] + [(i, i) for i in range(4)] + [(0, 2), (1, 3)]
    reward = {p: float(rng.uniform(-1, 1)) for p in pairs}
    terminal = {p: p[1] == 4 for p in pairs}
    # iterate the fixed-point equation to 1e-10
    phi = {p: 0.0 for p in pairs}
    while True:
        new = {p: reward[p] + (0.0 if terminal[p] else gamma * phi[(p[1], successor[p[1]])]) for p in pairs}
        delta = max(abs(new[p] - phi[p]) for p in pairs)
        phi = new
        if delta < 1e-10:
            break
    eye = np.eye(n)
    batch = Batch(eye[[p[0] for p in pairs]], eye[[p[1] for p in pairs]], np.zeros((len(pairs), 1)),
                  np.array([reward[p] for p in pairs]), np.array([terminal[p] for p in pairs]))
    critic, policy = StvCritic(n, np.random.default_rng(1)), FixedPolicy()
    t0 = time.time()
    for _ in range(50_000):
        critic_step(critic, policy, batch, gamma)
        nn.soft_update(critic.net, critic.target_net, 0.005)
    err = float(np.max(np.abs(critic.value(batch.s, batch.s_next) - np.array([phi[p] for p in pairs]))))
    elapsed = time.time() - t0
    record_property("measured", f"max|Phi-oracle|={err:.2e} steps=50000 time={elapsed:.0f}s")
    assert err < 1e-2
    assert elapsed < 120


# ---------------------------------------------------------------- 3


def test_criterion_03_synthetic_actor_optimum(record_property):
    c = np.array([0.7, 0.25])

    class Frozen:
        def value_and_grad(self, s, s_next):
            diff = np.atleast_2d(s_next) - c
            return -np.sum(diff ** 2, axis=1), -2 * diff

    rng = np.random.default_rng(3)
    policy = NextStatePolicy(np.zeros(2), np.ones(2), rng, hidden=(32, 32), learning_rate=1e-3)
    t0 = time.time()
    for _ in range(4000):
        s = rng.uniform(size=(64, 2))
        actor_step(policy, Frozen(), Batch(s, s, s, np.zeros(64), np.zeros(64, bool)))
    grid = np.stack(np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 1, 11)), -1).reshape(-1, 2)
    err = float(np.max(np.abs(policy(grid) - c)))
    record_property("measured", f"max|mu(s)-c|={err:.2e} time={time.time() - t0:.0f}s")
    assert err < 1e-2


# ---------------------------------------------------------------- 4


def _three_action(n, seed):
    rng = np.random.default_rng(seed)
    acts = rng.choice(3, size=n, p=[0.1, 0.4, 0.5])
    centres = np.array([1 / 6, 1 / 2, 5 / 6])
    return Batch(np.full((n, 1), centres[0]), centres[np.where(acts == 2, 2, 1)][:, None], centres[acts][:, None],
                 np.zeros(n), np.zeros(n, bool))


def _symmetric_chain(n, seed):
    rng = np.random.default_rng(seed)
    acts = rng.integers(0, 2, size=n)
    states = np.concatenate([[0], acts[:-1]])
    centres = np.array([0.25, 0.75])
    return Batch(centres[states][:, None], centres[acts][:, None], centres[acts][:, None], np.zeros(n), np.zeros(n, bool))


def _k(batch, bins):
    disc = Discretizer(np.zeros(1), np.ones(1), np.zeros(1), np.ones(1), bins, bins)
    stats = OccupancyStats()
    accumulate(stats, batch, disc)
    return estimate_k(stats)[2]


def test_criterion_04_k_estimator(record_property):
    t0 = time.time()
    k5 = _k(_three_action(100_000, 0), 3)
    k1 = _k(_symmetric_chain(100_000, 1), 2)
    errs = [np.mean([abs(_k(_three_action(w, 97 * w + r), 3) - 5.0) for r in range(20)])
            for w in (1_000, 10_000, 100_000)]
    record_property("measured", f"k3action={k5:.3f} ksym={k1:.3f} mean_err={' '.join(f'{e:.4f}' for e in errs)} "
                                f"time={time.time() - t0:.0f}s")
    assert abs(k5 - 5.0) <= 0.25
    assert abs(k1 - 1.0) <= 0.05
    assert errs[0] > errs[1] > errs[2]


# ---------------------------------------------------------------- 5


def test_criterion_05_efficient_training_condition(record_property):
    t0 = time.time()
    ks = {}
    for name in ("gridworld", "berzerk", "slot"):
        env = make_env(name, seed=11)
        samples = collect(env, behavior_policy("continuous", env, np.random.default_rng(12)), 100_000)
        stats = OccupancyStats()
        accumulate(stats, samples, Discretizer.for_env(env))
        ks[name] = estimate_k(stats)[2]
    record_property("measured", " ".join(f"{n}:k={k:.3f}" for n, k in ks.items()) + f" W=1e5 "
                                f"time={time.time() - t0:.0f}s")
    assert all(k > 1 for k in ks.values()), ks


# ---------------------------------------------------------------- 6


def test_criterion_06_learning_progress(tmp_path, record_property):
    seeds = list(range(10))
    cfg = build_config({"algo": "sasrl", "env": "gridworld", "seeds": ",".join(map(str, seeds)),
                        "max_gradient_steps": "20000", "out_dir": str(tmp_path)})
    t0 = time.time()
    out = run_experiment(cfg)
    baseline = random_policy_return("gridworld", episodes=cfg.eval_episodes)
    final = final_returns(out, seeds)
    good = int(np.sum(final >= baseline + 5.0))
    record_property("measured", f"random={baseline:.2f} finals={np.round(final, 2).tolist()} "
                                f"seeds_ok={good}/10 time={time.time() - t0:.0f}s")
    assert good >= 8


# ---------------------------------------------------------------- 7


def test_criterion_07_slot_sasrl_vs_ddpg(tmp_path, record_property):
    seeds = "0,1,2,3,4"
    t0 = time.time()
    result = {}
    for algo in ("sasrl", "ddpg"):
        cfg = build_config({"algo": algo, "env": "slot", "seeds": seeds, "max_gradient_steps": "20000",
                            "out_dir": str(tmp_path)})
        out = run_experiment(cfg)
        result[algo] = plateaus(out, cfg.seeds)
    s, d = result["sasrl"].mean(), result["ddpg"].mean()
    record_property("measured", f"plateau sasrl={s:.2f} ddpg={d:.2f} improvement={(s - d) / abs(d) * 100:+.0f}% "
                                f"time={time.time() - t0:.0f}s")
    assert s >= d


# ---------------------------------------------------------------- 8


def test_criterion_08_transition_model_replay(record_property):
    t0 = time.time()
    slot = make_env("slot", seed=21)
    data = Batch.from_samples(collect(slot, behavior_policy("continuous", slot, np.random.default_rng(22)), 25_000))
    split = int(0.8 * len(data))
    held = data.s[split:]
    model = TransitionModel.for_env(slot, np.random.default_rng(23))
    fit(model, Batch(data.s[:split], data.s_next[:split], data.a[:split], data.r[:split], data.done[:split]),
        rng=np.random.default_rng(24))
    a = predict(model, held, data.s_next[split:])
    replay = slot.transition(held, a)[0]
    hit = float(np.mean(np.all(replay == data.s_next[split:], axis=1)))

    grid = make_env("gridworld", seed=31)
    d = grid.cfg.move_limit
    gdata = Batch.from_samples(collect(grid, behavior_policy("continuous", grid, np.random.default_rng(32)), 25_000))
    split = int(0.8 * len(gdata))
    gmodel = TransitionModel.for_env(grid, np.random.default_rng(33))
    fit(gmodel, Batch(gdata.s[:split], gdata.s_next[:split], gdata.a[:split], gdata.r[:split], gdata.done[:split]),
        epochs=600, rng=np.random.default_rng(34))
    truth = gdata.s_next[split:] - gdata.s[split:]
    err = float(np.mean(np.linalg.norm(predict(gmodel, gdata.s[split:], gdata.s_next[split:]) - truth, axis=1)))
    record_property("measured", f"slot_replay={hit:.3f} grid_err={err / d:.4f}d time={time.time() - t0:.0f}s")
    assert hit >= 0.9
    assert err < 0.01 * d


# ---------------------------------------------------------------- 9


def test_criterion_09_granularity_ablation(tmp_path, record_property):
    seeds = "0,1,2,3,4"
    t0 = time.time()
    result = {}
    for gran in ("continuous", "coarse"):
        cfg = build_config({"algo": "sasrl", "env": "gridworld", "seeds": seeds, "granularity": gran,
                            "max_gradient_steps": "20000", "out_dir": str(tmp_path)})
        out = run_experiment(cfg)
        result[gran] = final_returns(out, cfg.seeds)
    c, k = result["continuous"].mean(), result["coarse"].mean()
    record_property("measured", f"final continuous={c:.2f} coarse={k:.2f} time={time.time() - t0:.0f}s")
    assert c >= k


# ---------------------------------------------------------------- 10


@given(st.floats(0, 1), st.integers(0, 2**31))
@settings(max_examples=100, deadline=None)
def _soft_update_exact(eps, seed):
    rng = np.random.default_rng(seed)
    net, target = nn.Mlp.create([3, 5, 2], rng), nn.Mlp.create([3, 5, 2], rng)
    expected = [eps * p + (1.0 - eps) * q for p, q in zip(net.params(), target.params())]
    nn.soft_update(net, target, eps)
    assert all(np.array_equal(e, q) for e, q in zip(expected, target.params()))


@given(st.integers(1, 16), st.lists(st.integers(-1000, 1000), max_size=64))
@settings(max_examples=100, deadline=None)
def _replay_fifo(capacity, rewards):
    buf = ReplayBuffer(capacity, 1, 1)
    for r in rewards:
        buf.push(TransitionSample(np.zeros(1), np.zeros(1), np.zeros(1), float(r), False))
    assert [x.r for x in buf.contents()] == [float(r) for r in rewards][-capacity:]
    assert len(buf) == min(capacity, len(rewards))


def test_criterion_10_mechanical_exactness(tmp_path, record_property):
    t0 = time.time()
    _soft_update_exact()
    _replay_fifo()
    values = {"seeds": "3,4", "max_gradient_steps": "400", "eval_interval": "100", "eval_episodes": "3",
              "prefill": "300", "collect_steps": "100"}
    a = run_experiment(build_config({**values, "out_dir": str(tmp_path / "a")}))
    b = run_experiment(build_config({**values, "out_dir": str(tmp_path / "b")}))
    same = all((a / f).read_bytes() == (b / f).read_bytes() for f in ("seed3.csv", "seed4.csv", "aggregate.csv"))
    record_property("measured", f"identical_csvs={same} time={time.time() - t0:.0f}s")
    assert same
