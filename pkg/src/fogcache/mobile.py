"""On-device preference learning for mobile users.

Each mobile user fits a sparse logistic model over raw content information
vectors with per-coordinate FTRL-Proximal updates, entirely on their own
request history. Access points never see that history: the only artifact
crossing the boundary is a vector of predicted request probabilities over
the library (see :class:`MobileReport`), and the per-point mobile popularity
is just the mean of the currently associated users' reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError
from .util import PROB_FLOOR, sigmoid, substream

STALENESS_DEFAULT = 0.8


@dataclass
class FtrlConfig:
    alpha: float = 0.1
    beta: float = 1.0
    l1: float = 1e-3
    l2: float = 1e-3
    passes: int = 1
    negative_ratio: int = 4

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError("FTRL step-size parameters must be positive")
        if self.l1 < 0 or self.l2 < 0:
            raise ValidationError("FTRL regularizers must be non-negative")
        if self.passes < 1 or self.negative_ratio < 0:
            raise ValidationError("passes/negative_ratio out of range")


@dataclass
class FtrlState:
    """Accumulated per-coordinate state; ``n`` only ever grows."""

    z: np.ndarray
    n: np.ndarray

    @classmethod
    def fresh(cls, dim: int) -> "FtrlState":
        return cls(z=np.zeros(dim), n=np.zeros(dim))

    def copy(self) -> "FtrlState":
        return FtrlState(z=self.z.copy(), n=self.n.copy())


@dataclass(frozen=True)
class MobileSample:
    zeta: np.ndarray
    y: int


@dataclass
class MobileSampleSet:
    """Gathered (content vector, label) pairs for one user."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, k: int) -> MobileSample:
        return MobileSample(self.features[k], int(self.labels[k]))


@dataclass
class MobileReport:
    """The only mobile-to-infrastructure message: predicted probabilities."""

    fap_id: int
    window: int
    user_id: int
    q_hat: np.ndarray


def weights_from(state: FtrlState, config: FtrlConfig) -> np.ndarray:
    """Closed-form weights for the accumulated state (0 inside the L1 band)."""
    z, n = state.z, state.n
    return np.where(
        np.abs(z) <= config.l1,
        0.0,
        -(z - np.sign(z) * config.l1) / ((config.beta + np.sqrt(n)) / config.alpha + config.l2),
    )


def predict_preference(preference: np.ndarray, zeta: np.ndarray) -> float:
    """sigmoid(preference . content vector)."""
    preference = np.asarray(preference, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    if preference.shape != zeta.shape:
        raise ValidationError("preference/content dimensions differ")
    return float(sigmoid(preference @ zeta))


def preference_nll(preference: np.ndarray, samples: MobileSampleSet) -> float:
    """Mean negative log-likelihood over a sample set (clamped)."""
    if len(samples) == 0:
        raise ValidationError("cannot evaluate on an empty sample set")
    q = sigmoid(samples.features @ np.asarray(preference, dtype=np.float64))
    q = np.clip(q, PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = samples.labels
    return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)))


def ftrl_update(state: FtrlState, weights: np.ndarray, zeta: np.ndarray, y: int,
                config: FtrlConfig) -> tuple[FtrlState, np.ndarray]:
    """One-sample FTRL-Proximal step (pure; returns new state and weights)."""
    zeta = np.asarray(zeta, dtype=np.float64)
    q = predict_preference(weights, zeta)
    g = (q - y) * zeta
    new = state.copy()
    sigma = (np.sqrt(new.n + g * g) - np.sqrt(new.n)) / config.alpha
    new.z += g - sigma * weights
    new.n += g * g
    return new, weights_from(new, config)


def build_preference_samples(requested_ids, contents: dict[int, np.ndarray],
                             negative_ratio: int, seed: int) -> MobileSampleSet:
    """Positives for each requested content; negatives sampled from the rest.

    Mirrors the model-side sampling policy: ``negative_ratio`` negatives per
    positive, uniform without replacement from never-requested contents.
    """
    requested_ids = list(requested_ids)
    rng = substream(seed, "sampling")
    rows = [contents[c] for c in requested_ids]
    labels = [1.0] * len(rows)
    pool = [c for c in sorted(contents) if c not in set(requested_ids)]
    want = min(negative_ratio * len(requested_ids), len(pool))
    if want > 0:
        picks = rng.choice(len(pool), size=want, replace=False)
        for k in sorted(picks.tolist()):
            rows.append(contents[pool[k]])
            labels.append(0.0)
    if not rows:
        return MobileSampleSet(np.zeros((0, 0)), np.zeros(0))
    return MobileSampleSet(
        features=np.asarray(rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.float64),
    )


def fit_ftrl(samples: MobileSampleSet, config: FtrlConfig, seed: int,
             state: FtrlState | None = None) -> tuple[np.ndarray, FtrlState]:
    """Shuffled-pass FTRL over a sample set, continuing from ``state`` if given."""
    if len(samples) == 0:
        raise ValidationError("cannot train on an empty sample set")
    dim = samples.features.shape[1]
    state = FtrlState.fresh(dim) if state is None else state.copy()
    rng = substream(seed, "ftrl-shuffle")
    for _ in range(config.passes):
        order = rng.permutation(len(samples)).astype(np.int64)
        kernels.ftrl_fit(state.z, state.n, samples.features, samples.labels,
                         order, config.alpha, config.beta, config.l1, config.l2)
    return weights_from(state, config), state


def train_preference(samples: MobileSampleSet, config: FtrlConfig, seed: int) -> np.ndarray:
    """Train a preference vector from scratch; deterministic given the seed."""
    weights, _state = fit_ftrl(samples, config, seed)
    return weights


def retrain_if_stale(preference: np.ndarray, state: FtrlState,
                     recent_samples: MobileSampleSet, config: FtrlConfig,
                     seed: int, threshold: float = STALENESS_DEFAULT
                     ) -> tuple[np.ndarray, FtrlState]:
    """Continue training on recent samples iff their NLL exceeds the threshold."""
    if preference_nll(preference, recent_samples) <= threshold:
        return preference, state
    return fit_ftrl(recent_samples, config, seed, state=state)


def preference_report(preference: np.ndarray, content_matrix: np.ndarray) -> np.ndarray:
    """Predicted request probability for every library row."""
    return sigmoid(content_matrix @ np.asarray(preference, dtype=np.float64))


def mobile_popularity(reports, content_count: int) -> tuple[np.ndarray, bool]:
    """Mean of associated users' probability reports.

    Returns ``(values, defined)``; with no associated mobile users the values
    are all zero and ``defined`` is False, which downstream integration maps
    to a zero mobile weight.
    """
    reports = list(reports)
    if not reports:
        return np.zeros(content_count), False
    acc = np.zeros(content_count)
    for q in reports:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (content_count,):
            raise ValidationError("report length does not match the library")
        acc += q
    return acc / len(reports), True
