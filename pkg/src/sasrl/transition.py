"""Supervised inverse model (s, s') -> action, used where no analytic inverse exists."""

from __future__ import annotations

import numpy as np

from .core import Batch, ReplayBuffer
from .nn import AdamState, BoxHead, Mlp, NonFiniteError, adam_apply, backward, bce_loss, mse_loss, trace_forward

LOSS_KINDS = ("mse_continuous", "bce_binary")


class TransitionModel:
    def __init__(self, state_low, state_high, action_low, action_high, rng: np.random.Generator,
                 hidden=(64, 64), loss_kind="mse_continuous", learning_rate=1e-3):
        if loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        self.state_box = BoxHead(state_low, state_high)
        self.action_box = BoxHead(action_low, action_high)
        self.loss_kind = loss_kind
        d = len(self.state_box.low)
        out_act = "tanh" if loss_kind == "mse_continuous" else "sigmoid"
        self.net = Mlp.create([2 * d, *hidden, len(self.action_box.low)], rng, "relu", out_act)
        self.opt = AdamState.for_net(self.net, learning_rate)

    @classmethod
    def for_env(cls, env, rng, **kw) -> "TransitionModel":
        return cls(env.state_low, env.state_high, env.action_low, env.action_high, rng, **kw)

    def encode_inputs(self, s, s_next) -> np.ndarray:
        s = np.atleast_2d(s)
        s_next = np.atleast_2d(s_next)
        return np.concatenate([self.state_box.unscale(s), self.state_box.unscale(s_next)], axis=1)

    def encode_targets(self, a) -> np.ndarray:
        a = np.atleast_2d(a)
        if self.loss_kind == "mse_continuous":
            return np.clip(self.action_box.unscale(a), -1.0, 1.0)
        return (a > 0.5).astype(np.float64)

    def decode_outputs(self, y) -> np.ndarray:
        if self.loss_kind == "mse_continuous":
            return self.action_box.clip(self.action_box.scale(y))
        return y

    def loss(self, pred, target):
        return mse_loss(pred, target) if self.loss_kind == "mse_continuous" else bce_loss(pred, target)


def dedupe(batch: Batch) -> Batch:
    """Keep one sample per exact (s, s'): highest reward, first seen on ties."""
    best: dict[bytes, int] = {}
    for i in range(len(batch)):
        key = batch.s[i].tobytes() + batch.s_next[i].tobytes()
        j = best.get(key)
        if j is None or batch.r[i] > batch.r[j]:
            best[key] = i
    idx = np.array(sorted(best.values()), dtype=np.int64)
    return Batch(batch.s[idx], batch.s_next[idx], batch.a[idx], batch.r[idx], batch.done[idx])


def preprocess_batch(model: TransitionModel, batch) -> tuple[np.ndarray, np.ndarray]:
    batch = dedupe(Batch.from_samples(batch))
    return model.encode_inputs(batch.s, batch.s_next), model.encode_targets(batch.a)


def train_step(model: TransitionModel, x: np.ndarray, y: np.ndarray) -> float:
    tr = trace_forward(model.net, x)
    loss, grad = model.loss(tr.output, y)
    if not np.isfinite(loss):
        raise NonFiniteError(f"transition-model loss is {loss}")
    adam_apply(model.net, model.opt, backward(model.net, x, grad, tr), "minimize")
    return loss


def fit(model: TransitionModel, data, epochs: int = 50, batch_size: int = 128, rng=None) -> float:
    """Minibatch supervised fit; returns the mean loss of the final epoch.

    ``data`` is a ReplayBuffer, a Batch or a list of samples.
    """
    if isinstance(data, ReplayBuffer):
        data = data.as_batch()
    x, y = preprocess_batch(model, data)
    if epochs <= 0:
        return float(model.loss(_predict_raw(model, x), y)[0])
    rng = rng if rng is not None else np.random.default_rng(0)
    last = np.nan
    for _ in range(epochs):
        order = rng.permutation(len(x))
        losses, weights = [], []
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            losses.append(train_step(model, x[idx], y[idx]))
            weights.append(len(idx))
        last = float(np.average(losses, weights=weights))
    return last


def _predict_raw(model: TransitionModel, x: np.ndarray) -> np.ndarray:
    return trace_forward(model.net, x).output


def predict(model: TransitionModel, s, s_target) -> np.ndarray:
    """Action that should carry ``s`` to ``s_target``; batched if given 2-D input."""
    single = np.ndim(s) == 1
    out = model.decode_outputs(_predict_raw(model, model.encode_inputs(s, s_target)))
    return out[0] if single else out
