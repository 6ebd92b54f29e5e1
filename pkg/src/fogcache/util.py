"""Shared numeric helpers and the named-substream RNG scheme.

All randomness in the package flows from a single root seed. Components
draw from named substreams (``substream(seed, "topology")`` etc.) so that
re-running any stage with the same root seed reproduces it exactly, and
stages can be re-seeded independently of each other.
"""

from __future__ import annotations

import zlib

import numpy as np

# Probabilities are clamped into [PROB_FLOOR, 1 - PROB_FLOOR] before logs
# so cross-entropy losses stay finite.
PROB_FLOOR = 1e-7


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return a Generator for the named substream of the root seed.

    The stream identity is (seed, crc32(name), *indices); crc32 is stable
    across platforms and Python versions, unlike ``hash``.
    """
    entropy = [int(seed), zlib.crc32(name.encode("utf-8")), *[int(i) for i in indices]]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, name: str, *indices: int) -> int:
    """A derived integer seed for the same (seed, name, indices) identity.

    Used where an API takes a seed rather than a Generator; mixing matches
    :func:`substream` so derived and direct streams never collide.
    """
    entropy = [int(seed), zlib.crc32(name.encode("utf-8")), *[int(i) for i in indices]]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def log_loss(p, y):
    """Clamped binary cross entropy -[y log p + (1-y) log(1-p)], elementwise."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    if out.ndim == 0:
        return float(out)
    return out


def rms_norm(v: np.ndarray) -> float:
    """Euclidean norm scaled by sqrt(len); comparable across model sizes."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v) / np.sqrt(v.size))
