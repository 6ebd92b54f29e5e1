"""Per-access-point popularity: activity shares, model-predicted local
popularity, normalization, local/mobile integration, and cache selection.

Local popularity is a total-probability sum: each local user's predicted
request probability for a content, weighted by that user's share of the
point's request volume. The mobile side arrives pre-aggregated (see the
mobile module); the two are normalized separately and combined convexly
with the current mobile-user fraction as the mobile weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dcnn import DcnnModel
from .errors import ValidationError
from .util import sigmoid


@dataclass
class ActivityProfile:
    """Local users' request shares within one access point."""

    shares: dict[int, float]
    counts: dict[int, int]


@dataclass
class PopularityTable:
    """One access point's popularity vectors for one evaluation window."""

    fap_id: int
    window: int
    local: np.ndarray
    local_defined: bool
    mobile: np.ndarray
    mobile_defined: bool
    mobile_weight: float
    integrated: np.ndarray


def activity_levels(fap_train_requests, local_user_ids) -> ActivityProfile:
    """Request-count shares per local user; zero-request users get share 0."""
    counts = {u: 0 for u in sorted(local_user_ids)}
    for r in fap_train_requests:
        if r.user_id not in counts:
            raise ValidationError(f"request by non-local user {r.user_id}")
        counts[r.user_id] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValidationError("access point has no local training requests")
    return ActivityProfile(
        shares={u: c / total for u, c in counts.items()},
        counts=counts,
    )


def local_popularity(model: DcnnModel, feature_table, activity: ActivityProfile,
                     content_ids) -> np.ndarray:
    """Activity-weighted predicted request probabilities over the library.

    Vectorized over (active users x contents); exact users-with-zero-share
    contribute nothing and are skipped.
    """
    content_ids = sorted(content_ids)
    active = [u for u in sorted(activity.shares) if activity.shares[u] > 0.0]
    missing = [u for u in active if u not in feature_table.user_features]
    if missing:
        raise ValidationError(f"missing feature vectors for users {missing}")
    user_mat = np.asarray([feature_table.user_features[u] for u in active])
    item_mat = np.asarray([feature_table.content_features[c] for c in content_ids])
    shares = np.asarray([activity.shares[u] for u in active])
    user_latent = model.user_channel.forward(user_mat)
    item_latent = model.item_channel.forward(item_mat)
    probs = sigmoid(user_latent @ item_latent.T)
    return shares @ probs


def normalize(values: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scale to unit sum; an all-zero vector stays zero and is flagged undefined."""
    values = np.asarray(values, dtype=np.float64)
    if np.any(values < 0):
        raise ValidationError("popularity values must be non-negative")
    total = values.sum()
    if total == 0.0:
        return values.copy(), False
    return values / total, True


def mobile_weight(mobile_count: int, local_count: int) -> float:
    """Share of currently associated mobiles among all users at the point."""
    if mobile_count < 0 or local_count < 0:
        raise ValidationError("negative user counts")
    if mobile_count + local_count == 0:
        return 0.0
    return mobile_count / (mobile_count + local_count)


def integrate(local_norm: np.ndarray, mobile_norm: np.ndarray, weight: float,
              local_defined: bool = True, mobile_defined: bool = True
              ) -> tuple[np.ndarray, float]:
    """Convex combination of the two normalized popularity vectors.

    An undefined side forces the weight to the defined side (0 if the mobile
    part is undefined, 1 if the local part is); both undefined is an error.
    The returned weight is the one actually applied.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValidationError(f"mobile weight {weight} outside [0,1]")
    if not local_defined and not mobile_defined:
        raise ValidationError("no popularity signal: both parts undefined")
    if not mobile_defined:
        weight = 0.0
    elif not local_defined:
        weight = 1.0
    return (1.0 - weight) * local_norm + weight * mobile_norm, weight


def rank_contents(values: np.ndarray, content_ids) -> np.ndarray:
    """Content ids ordered by descending value, ties to the lower id."""
    ids = np.asarray(sorted(content_ids), dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != ids.shape:
        raise ValidationError("value/content-id lengths differ")
    order = np.lexsort((ids, -values))
    return ids[order]


def select_cache(values: np.ndarray, content_ids, capacity: int
                 ) -> tuple[set[int], np.ndarray]:
    """Top-capacity contents and the 0/1 cache indicator over sorted ids."""
    if capacity < 0:
        raise ValidationError("capacity must be non-negative")
    ids = np.asarray(sorted(content_ids), dtype=np.int64)
    ranked = rank_contents(values, ids)
    chosen = set(ranked[:capacity].tolist())
    psi = np.array([1.0 if c in chosen else 0.0 for c in ids.tolist()])
    return chosen, psi


def dump_popularity_csv(tables, cached_sets, content_ids) -> str:
    """Debug CSV: fap,window,content,local,mobile,integrated,cached."""
    ids = sorted(content_ids)
    lines = ["fap,window,content,local,mobile,integrated,cached"]
    for table in tables:
        cache = cached_sets.get((table.fap_id, table.window), set())
        for k, cid in enumerate(ids):
            lines.append(
                f"{table.fap_id},{table.window},{cid},"
                f"{table.local[k]:.10e},{table.mobile[k]:.10e},"
                f"{table.integrated[k]:.10e},{int(cid in cache)}"
            )
    return "\n".join(lines) + "\n"
