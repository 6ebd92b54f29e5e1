"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
``FOGCACHE_KERNELS=python``). The similarity kernel deliberately takes a
different computational route (dense matmul identities instead of sparse
merge loops), which doubles as a cross-check of the compiled code.
"""

from __future__ import annotations

import numpy as np


def pair_similarity(indptr: np.ndarray, indices: np.ndarray, data: np.ndarray,
                    col_weights: np.ndarray) -> np.ndarray:
    """Weighted rating-distance similarity between all row pairs of a CSR matrix.

    For rows a, b with common columns C:
    ``S[a,b] = 1 / (1 + sqrt(sum_{k in C} w_k (r_ak - r_bk)^2 / |C|))``,
    and 0 when C is empty. Diagonal is 0 (entities are not their own
    neighbors). Column values must be nonzero where present.
    """
    n = len(indptr) - 1
    n_cols = len(col_weights)
    dense = np.zeros((n, n_cols))
    for a in range(n):
        dense[a, indices[indptr[a]:indptr[a + 1]]] = data[indptr[a]:indptr[a + 1]]
    mask = (dense != 0.0).astype(np.float64)

    # sum_k w_k M_ak M_bk (r_ak - r_bk)^2 expands into three matmuls;
    # the presence masks ride along inside the rating matrices.
    sq = dense * dense * col_weights
    cross = (dense * col_weights) @ dense.T
    d2 = sq @ mask.T
    d2 = d2 + d2.T - 2.0 * cross
    counts = mask @ mask.T

    with np.errstate(divide="ignore", invalid="ignore"):
        sim = 1.0 / (1.0 + np.sqrt(np.maximum(d2, 0.0) / counts))
    sim[counts == 0] = 0.0
    np.fill_diagonal(sim, 0.0)
    return sim


def _stable_sigmoid(v: float) -> float:
    if v >= 0.0:
        return 1.0 / (1.0 + np.exp(-v))
    e = np.exp(v)
    return e / (1.0 + e)


def ftrl_fit(z: np.ndarray, n_acc: np.ndarray, X: np.ndarray, y: np.ndarray,
             order: np.ndarray, alpha: float, beta: float,
             l1: float, l2: float) -> np.ndarray:
    """Run follow-the-regularized-leader (proximal) over samples in ``order``.

    ``z`` and ``n_acc`` are mutated in place. Returns the probability
    predicted for each visited sample *before* its update (progressive
    validation order).
    """
    preds = np.empty(len(order))
    for t, i in enumerate(order):
        x = X[i]
        active = np.flatnonzero(x)
        za = z[active]
        na = n_acc[active]
        w = np.where(
            np.abs(za) <= l1,
            0.0,
            -(za - np.sign(za) * l1) / ((beta + np.sqrt(na)) / alpha + l2),
        )
        p = _stable_sigmoid(float(w @ x[active]))
        preds[t] = p
        g = (p - y[i]) * x[active]
        sigma = (np.sqrt(na + g * g) - np.sqrt(na)) / alpha
        z[active] += g - sigma * w
        n_acc[active] += g * g
    return preds
