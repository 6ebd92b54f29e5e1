"""Dual-channel MLP preference model.

Two small MLPs map a user feature vector and a content feature vector into a
shared latent space; the request probability is the sigmoid of their inner
product. Training minimizes mean binary cross entropy with Adam and a
per-epoch learning-rate decay. Parameters can be flattened into a single
vector (user channel first, then content channel; each layer's weight matrix
row-major, then its bias), which is the currency of the federation code.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ValidationError
from .util import PROB_FLOOR, sigmoid, substream

LATENT_DIM_DEFAULT = 16
HIDDEN_DIMS_DEFAULT = (64,)


@dataclass
class MlpParams:
    """Weights/biases per layer; ReLU on hidden layers, identity on the last."""

    layers: list[tuple[np.ndarray, np.ndarray]]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[1],) + tuple(w.shape[0] for w, _ in self.layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward (n, d_in) -> (n, d_out)."""
        h = x
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            h = h @ w.T + b
            if k != last:
                np.maximum(h, 0.0, out=h)
        return h


@dataclass
class DcnnModel:
    user_channel: MlpParams
    item_channel: MlpParams

    @property
    def shape_spec(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return (self.user_channel.dims, self.item_channel.dims)


@dataclass(frozen=True)
class TrainingSample:
    x: np.ndarray
    chi: np.ndarray
    y: int


@dataclass
class TrainingSet:
    """Gathered sample matrices: user rows, content rows, binary labels."""

    user_x: np.ndarray
    item_x: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, k: int) -> TrainingSample:
        return TrainingSample(self.user_x[k], self.item_x[k], int(self.labels[k]))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    decay: float = 0.97
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 5
    batch_size: int = 32
    negative_ratio: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0,1]")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ConfigError("Adam betas must lie in (0,1)")
        if self.epochs < 0 or self.batch_size < 1 or self.negative_ratio < 0:
            raise ConfigError("epochs/batch_size/negative_ratio out of range")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int
    lr: float

    @classmethod
    def fresh(cls, size: int, lr: float) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0, lr=lr)


def init_model(d_user: int, d_item: int, hidden_dims=HIDDEN_DIMS_DEFAULT,
               latent_dim: int = LATENT_DIM_DEFAULT, seed: int = 0) -> DcnnModel:
    """Glorot-uniform weights, zero biases; deterministic given the seed."""
    if not hidden_dims:
        raise ConfigError("need at least one hidden layer")
    if latent_dim < 1:
        raise ConfigError("latent dimension must be positive")
    rng = substream(seed, "init")

    def channel(d_in: int) -> MlpParams:
        dims = (d_in,) + tuple(hidden_dims) + (latent_dim,)
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            layers.append((w, np.zeros(fan_out)))
        return MlpParams(layers=layers)

    return DcnnModel(user_channel=channel(d_user), item_channel=channel(d_item))


def predict(model: DcnnModel, x: np.ndarray, chi: np.ndarray) -> float:
    """sigmoid(latent(user) . latent(content))."""
    x = np.asarray(x, dtype=np.float64)
    chi = np.asarray(chi, dtype=np.float64)
    if x.shape != (model.user_channel.dims[0],):
        raise ValidationError(f"user input has shape {x.shape}")
    if chi.shape != (model.item_channel.dims[0],):
        raise ValidationError(f"content input has shape {chi.shape}")
    u = model.user_channel.forward(x[None, :])[0]
    v = model.item_channel.forward(chi[None, :])[0]
    return float(sigmoid(u @ v))


def predict_batch(model: DcnnModel, user_x: np.ndarray, item_x: np.ndarray) -> np.ndarray:
    u = model.user_channel.forward(user_x)
    v = model.item_channel.forward(item_x)
    return sigmoid(np.sum(u * v, axis=1))


def bce_loss(p: float, y: int) -> float:
    """Binary cross entropy with probabilities clamped away from {0,1}."""
    p = min(max(p, PROB_FLOOR), 1.0 - PROB_FLOOR)
    return -(y * np.log(p) + (1 - y) * np.log(1.0 - p))


def _channel_backward(channel: MlpParams, x: np.ndarray, d_out: np.ndarray,
                      pre_acts: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """Accumulate flat per-layer gradients (weight row-major, then bias)."""
    last = len(channel.layers) - 1
    acts = [x]
    for k, z in enumerate(pre_acts[:-1]):
        acts.append(np.maximum(z, 0.0))
    d = d_out
    for k in range(last, -1, -1):
        w, _b = channel.layers[k]
        a_in = acts[k]
        grads.append(d.sum(axis=0))          # bias
        grads.append((d.T @ a_in).ravel())   # weight
        if k > 0:
            d = (d @ w) * (pre_acts[k - 1] > 0.0)


def _forward_cached(channel: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    """Pre-activations of every layer for a batch input."""
    pre = []
    h = x
    last = len(channel.layers) - 1
    for k, (w, b) in enumerate(channel.layers):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if k != last else z
    return pre


def batch_gradient(model: DcnnModel, user_x: np.ndarray, item_x: np.ndarray,
                   labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Flat gradient of the mean BCE over a batch, plus the loss value."""
    n = len(labels)
    pre_u = _forward_cached(model.user_channel, user_x)
    pre_v = _forward_cached(model.item_channel, item_x)
    lat_u, lat_v = pre_u[-1], pre_v[-1]
    p = sigmoid(np.sum(lat_u * lat_v, axis=1))
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    loss = float(-np.mean(labels * np.log(pc) + (1.0 - labels) * np.log(1.0 - pc)))

    ds = (p - labels)[:, None] / n
    chunks: list[np.ndarray] = []
    rev_u: list[np.ndarray] = []
    _channel_backward(model.user_channel, user_x, ds * lat_v, pre_u, rev_u)
    rev_i: list[np.ndarray] = []
    _channel_backward(model.item_channel, item_x, ds * lat_u, pre_v, rev_i)
    for rev, ch in ((rev_u, model.user_channel), (rev_i, model.item_channel)):
        per_layer = list(reversed([rev[i:i + 2] for i in range(0, len(rev), 2)]))
        for bias_g, weight_g in per_layer:
            chunks.append(weight_g)
            chunks.append(bias_g)
    return np.concatenate(chunks), loss


def backprop(model: DcnnModel, sample: TrainingSample) -> np.ndarray:
    """Flat gradient of bce_loss(predict(model, x, chi), y) for one sample."""
    g, _ = batch_gradient(
        model,
        np.asarray(sample.x, dtype=np.float64)[None, :],
        np.asarray(sample.chi, dtype=np.float64)[None, :],
        np.array([float(sample.y)]),
    )
    return g


def flatten(model: DcnnModel) -> np.ndarray:
    """Canonical flat view: user channel then content channel, W row-major then b."""
    chunks = []
    for ch in (model.user_channel, model.item_channel):
        for w, b in ch.layers:
            chunks.append(w.ravel())
            chunks.append(b)
    return np.concatenate(chunks)


def param_count(shape_spec) -> int:
    total = 0
    for dims in shape_spec:
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            total += d_out * d_in + d_out
    return total


def unflatten(vector: np.ndarray, shape_spec) -> DcnnModel:
    """Inverse of :func:`flatten` for the given (user dims, content dims)."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or len(vector) != param_count(shape_spec):
        raise ValidationError(
            f"flat vector length {vector.shape} does not match shape spec {shape_spec}"
        )
    pos = 0
    channels = []
    for dims in shape_spec:
        layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            w = vector[pos:pos + d_out * d_in].reshape(d_out, d_in).copy()
            pos += d_out * d_in
            b = vector[pos:pos + d_out].copy()
            pos += d_out
            layers.append((w, b))
        channels.append(MlpParams(layers=layers))
    return DcnnModel(user_channel=channels[0], item_channel=channels[1])


def adam_step(params: np.ndarray, gradient: np.ndarray, state: AdamState,
              config: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """One Adam update on flat vectors; returns new params and state."""
    if params.shape != gradient.shape:
        raise ValidationError("parameter/gradient shapes differ")
    t = state.step + 1
    m = config.adam_beta1 * state.m + (1.0 - config.adam_beta1) * gradient
    v = config.adam_beta2 * state.v + (1.0 - config.adam_beta2) * gradient * gradient
    m_hat = m / (1.0 - config.adam_beta1 ** t)
    v_hat = v / (1.0 - config.adam_beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new_params, AdamState(m=m, v=v, step=t, lr=state.lr)


def build_training_set(requests, features, negative_ratio: int, seed: int) -> TrainingSet:
    """Positives from the request log plus sampled unrequested negatives.

    One positive per logged request; per user, ``negative_ratio`` negatives
    per positive are drawn uniformly without replacement from the contents
    the user never requested (fewer if the complement runs out). Sample
    order: all positives in log order, then negatives grouped by user id.
    """
    if negative_ratio < 0:
        raise ValidationError("negative_ratio must be non-negative")
    rng = substream(seed, "sampling")
    user_rows, item_rows, labels = [], [], []
    requested: dict[int, set[int]] = {}
    pos_count: dict[int, int] = {}
    for r in requests:
        user_rows.append(features.user_features[r.user_id])
        item_rows.append(features.content_features[r.content_id])
        labels.append(1.0)
        requested.setdefault(r.user_id, set()).add(r.content_id)
        pos_count[r.user_id] = pos_count.get(r.user_id, 0) + 1

    all_contents = sorted(features.content_features)
    for uid in sorted(requested):
        pool = [c for c in all_contents if c not in requested[uid]]
        want = min(negative_ratio * pos_count[uid], len(pool))
        if want == 0:
            continue
        picks = rng.choice(len(pool), size=want, replace=False)
        for k in sorted(picks.tolist()):
            user_rows.append(features.user_features[uid])
            item_rows.append(features.content_features[pool[k]])
            labels.append(0.0)

    if not user_rows:
        return TrainingSet(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0))
    return TrainingSet(
        user_x=np.asarray(user_rows, dtype=np.float64),
        item_x=np.asarray(item_rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.float64),
    )


def mean_loss(model: DcnnModel, samples: TrainingSet) -> float:
    p = np.clip(predict_batch(model, samples.user_x, samples.item_x),
                PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = samples.labels
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def local_train(model: DcnnModel, samples: TrainingSet,
                config: TrainConfig) -> tuple[DcnnModel, np.ndarray]:
    """Mini-batch Adam over shuffled samples; returns (model', theta' - theta).

    The learning rate is multiplied by ``config.decay`` after each epoch.
    """
    if len(samples) == 0:
        raise ValidationError("cannot train on an empty sample set")
    spec = model.shape_spec
    theta0 = flatten(model)
    theta = theta0.copy()
    state = AdamState.fresh(len(theta), config.learning_rate)
    rng = substream(config.seed, "shuffle")
    n = len(samples)
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            cur = unflatten(theta, spec)
            grad, _ = batch_gradient(cur, samples.user_x[idx], samples.item_x[idx],
                                     samples.labels[idx])
            theta, state = adam_step(theta, grad, state, config)
        state = replace(state, lr=state.lr * config.decay)
    return unflatten(theta, spec), theta - theta0


def save_model(path, model: DcnnModel) -> None:
    """Versioned checkpoint: shape spec + flat parameters (lossless)."""
    np.savez(
        path,
        format=np.array("fogcache-model-v1"),
        user_dims=np.asarray(model.shape_spec[0], dtype=np.int64),
        item_dims=np.asarray(model.shape_spec[1], dtype=np.int64),
        theta=flatten(model),
    )


def load_model(path) -> DcnnModel:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != "fogcache-model-v1":
            raise ValidationError(f"unrecognized checkpoint format in {path}")
        spec = (tuple(int(d) for d in z["user_dims"]), tuple(int(d) for d in z["item_dims"]))
        return unflatten(z["theta"], spec)
