import numpy as np
import pytest
from hypothesis import given, strategies as st

from sasrl.core import (Batch, BufferNotReady, InvalidSample, ReplayBuffer, TransitionSample, discounted_return,
                        read_trajectory_log, rollout, write_trajectory_log)
from sasrl.envs import make_env


def sample(i, width=2):
    return TransitionSample(np.full(width, float(i)), np.full(width, i + 0.5), np.array([float(i)]), float(i), False)


@given(st.integers(1, 20), st.integers(0, 60))
def test_buffer_keeps_the_most_recent_in_order(capacity, n):
    buf = ReplayBuffer(capacity, 2, 1)
    for i in range(n):
        buf.push(sample(i))
    kept = [x.r for x in buf.contents()]
    assert kept == [float(i) for i in range(max(0, n - capacity), n)]
    assert len(buf) == min(n, capacity)


def test_buffer_rejects_bad_samples():
    buf = ReplayBuffer(4, 2, 1)
    with pytest.raises(InvalidSample):
        buf.push(TransitionSample(np.zeros(3), np.zeros(3), np.zeros(1), 0.0, False))
    with pytest.raises(InvalidSample):
        buf.push(TransitionSample(np.zeros(2), np.array([0.0, np.nan]), np.zeros(1), 0.0, False))
    with pytest.raises(InvalidSample):
        buf.push(TransitionSample(np.zeros(2), np.zeros(2), np.zeros(1), np.inf, False))
    assert len(buf) == 0


def test_empty_buffer_cannot_be_sampled():
    with pytest.raises(BufferNotReady):
        ReplayBuffer(4, 2, 1).sample(1)


def test_sampling_is_uniform():
    n, draws = 10, 200_000
    buf = ReplayBuffer(n, 2, 1, seed=11)
    buf.extend(sample(i) for i in range(n))
    counts = np.bincount(buf.sample(draws).r.astype(int), minlength=n)
    p = 1.0 / n
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) < 5 * sigma)


def test_sampling_is_seeded():
    a, b = ReplayBuffer(8, 2, 1, seed=3), ReplayBuffer(8, 2, 1, seed=3)
    for buf in (a, b):
        buf.extend(sample(i) for i in range(8))
    assert np.array_equal(a.sample(16).r, b.sample(16).r)


def test_discounted_return():
    assert discounted_return([1.0, 1.0, 1.0], 0.5) == pytest.approx(1.75)
    assert discounted_return([], 0.9) == 0.0
    assert discounted_return([0.0, 0.0, 10.0], 0.9) == pytest.approx(8.1)


def test_rollout_is_deterministic_given_seed():
    env = make_env("gridworld", seed=4)
    policy = lambda s: np.array([0.1, 0.1])
    a, ra = rollout(env, policy, 50, rng_seed=9)
    b, rb = rollout(env, policy, 50, rng_seed=9)
    assert ra == rb and len(a) == len(b)
    assert all(np.array_equal(x.s, y.s) for x, y in zip(a, b))


def test_rollout_records_the_applied_action():
    env = make_env("gridworld", seed=0)
    samples, _ = rollout(env, lambda s: np.array([5.0, 5.0]), 3, rng_seed=1)
    for x in samples:
        assert np.allclose(x.s + x.a, x.s_next)
        assert np.linalg.norm(x.a) <= env.cfg.move_limit + 1e-12


def test_trajectory_log_round_trip(tmp_path):
    samples, _ = rollout(make_env("slot", seed=0), lambda s: np.array([0.1, 0.5, 0.9]), 1, rng_seed=2)
    samples += [sample(3), sample(4)]
    samples[-1] = TransitionSample(np.zeros(24), np.ones(24), np.array([0.1, 0.2, 0.3]), -1.5, True)
    samples = samples[:1] + samples[-1:]
    path = tmp_path / "t.log"
    write_trajectory_log(path, samples)
    back = read_trajectory_log(path)
    assert len(back) == 2
    for x, y in zip(samples, back):
        assert np.array_equal(x.s, y.s) and np.array_equal(x.a, y.a) and np.array_equal(x.s_next, y.s_next)
        assert x.r == y.r and x.done == y.done


def test_batch_round_trip():
    items = [sample(i) for i in range(3)]
    batch = Batch.from_samples(items)
    assert len(batch) == 3
    assert [x.r for x in batch] == [0.0, 1.0, 2.0]
    assert Batch.from_samples(batch) is batch
