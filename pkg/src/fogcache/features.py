"""Neighbor-enhanced initial features, computed per access point.

Raw one-hot user vectors and multi-hot content vectors are blended with the
mean vector of each entity's most similar neighbors. Similarity is a
weighted Euclidean rating distance over co-requested contents (for users)
or co-requesting users (for contents), mapped to [0,1] by d -> 1/(1+d).
The weights are inverse-request-frequency terms: rarely requested contents
discriminate user taste more, and low-activity users discriminate content
audiences more, so both get larger weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import ValidationError

NEIGHBOR_COUNT_DEFAULT = 20
SELF_WEIGHT_DEFAULT = 0.5


@dataclass
class NeighborSet:
    """Top neighbors of one entity: (id, similarity), descending similarity."""

    owner: int
    members: list[tuple[int, float]]


@dataclass
class FeatureTable:
    """Initial feature vectors for one access point's scope."""

    user_features: dict[int, np.ndarray]
    content_features: dict[int, np.ndarray]
    user_neighbors: dict[int, NeighborSet] = field(default_factory=dict)
    content_neighbors: dict[int, NeighborSet] = field(default_factory=dict)


def rating_profiles(requests) -> dict[int, dict[int, float]]:
    """Per-user map content -> rating/5. Re-requests keep the latest rating."""
    stamp: dict[int, dict[int, int]] = {}
    out: dict[int, dict[int, float]] = {}
    for r in requests:
        prof = out.setdefault(r.user_id, {})
        seen = stamp.setdefault(r.user_id, {})
        if r.content_id not in seen or r.timestamp >= seen[r.content_id]:
            seen[r.content_id] = r.timestamp
            prof[r.content_id] = r.rating / 5.0
    return out


def irfu(content_id: int, requests, total_users: int) -> float:
    """ln(total_users / requester count) for one content within an access point."""
    requesters = {r.user_id for r in requests if r.content_id == content_id}
    if not requesters:
        raise ValidationError(f"content {content_id} has no requesters in scope")
    return math.log(total_users / len(requesters))


def irfc(user_id: int, requests, library_size: int) -> float:
    """ln(library_size / distinct contents requested) for one user."""
    contents = {r.content_id for r in requests if r.user_id == user_id}
    if not contents:
        raise ValidationError(f"user {user_id} has no requests in scope")
    return math.log(library_size / len(contents))


def user_similarity(u: int, v: int, requests, total_users: int) -> float:
    """Reference pairwise form of the matrix computation (see module docstring)."""
    if u == v:
        raise ValidationError("self-similarity is excluded")
    profiles = rating_profiles(requests)
    pu, pv = profiles.get(u, {}), profiles.get(v, {})
    common = sorted(set(pu) & set(pv))
    if not common:
        return 0.0
    d2 = sum(irfu(i, requests, total_users) * (pu[i] - pv[i]) ** 2 for i in common)
    return 1.0 / (1.0 + math.sqrt(d2 / len(common)))


def content_similarity(i: int, j: int, requests, library_size: int) -> float:
    """Mirror of :func:`user_similarity` over co-requesting users."""
    if i == j:
        raise ValidationError("self-similarity is excluded")
    profiles = rating_profiles(requests)
    pi = {u: prof[i] for u, prof in profiles.items() if i in prof}
    pj = {u: prof[j] for u, prof in profiles.items() if j in prof}
    common = sorted(set(pi) & set(pj))
    if not common:
        return 0.0
    d2 = sum(irfc(u, requests, library_size) * (pi[u] - pj[u]) ** 2 for u in common)
    return 1.0 / (1.0 + math.sqrt(d2 / len(common)))


def select_neighbors(owner: int, candidates: dict[int, float], top_t: int) -> NeighborSet:
    """Top-``top_t`` by similarity; ties to the lower id; zero scores dropped."""
    ranked = sorted(
        ((cid, s) for cid, s in candidates.items() if s > 0.0 and cid != owner),
        key=lambda kv: (-kv[1], kv[0]),
    )
    return NeighborSet(owner=owner, members=ranked[:top_t])


def _blend(self_vec: np.ndarray, neighbor_vecs, self_weight: float) -> np.ndarray:
    if not 0.0 <= self_weight <= 1.0:
        raise ValidationError(f"self weight {self_weight} outside [0,1]")
    vecs = list(neighbor_vecs)
    if not vecs:
        return self_vec.astype(np.float64).copy()
    stacked = np.asarray(vecs, dtype=np.float64)
    if stacked.shape[1] != len(self_vec):
        raise ValidationError(
            f"neighbor dimension {stacked.shape[1]} != self dimension {len(self_vec)}"
        )
    return self_weight * np.asarray(self_vec, dtype=np.float64) + (1.0 - self_weight) * stacked.mean(axis=0)


def initial_user_feature(self_info, neighbor_infos, self_weight: float) -> np.ndarray:
    """Blend a user's own vector with its neighbors' mean; no neighbors -> own vector."""
    return _blend(self_info, neighbor_infos, self_weight)


def initial_content_feature(self_info, neighbor_infos, self_weight: float) -> np.ndarray:
    """Content-side counterpart of :func:`initial_user_feature`."""
    return _blend(self_info, neighbor_infos, self_weight)


def _profiles_to_csr(row_ids, profiles, col_index):
    """Build a sorted-column CSR triple from per-row {col_id: value} maps."""
    indptr = np.zeros(len(row_ids) + 1, dtype=np.int64)
    cols: list[int] = []
    vals: list[float] = []
    for k, rid in enumerate(row_ids):
        prof = profiles.get(rid, {})
        entries = sorted((col_index[c], v) for c, v in prof.items())
        cols.extend(c for c, _ in entries)
        vals.extend(v for _, v in entries)
        indptr[k + 1] = len(cols)
    return (
        indptr,
        np.asarray(cols, dtype=np.int64),
        np.asarray(vals, dtype=np.float64),
    )


def similarity_matrices(dataset: Dataset, user_ids) -> tuple[np.ndarray, list[int], np.ndarray, list[int]]:
    """All-pairs user and content similarities within one access point's scope.

    Returns ``(user_sim, sorted_user_ids, content_sim, rated_content_ids)``.
    Contents never requested in scope are excluded from the content matrix
    (they have no co-requesters, hence no nonzero similarities).
    """
    user_ids = sorted(user_ids)
    scope = set(user_ids)
    requests = [r for r in dataset.requests if r.user_id in scope]
    profiles = rating_profiles(requests)

    rated = sorted({r.content_id for r in requests})
    content_col = {c: k for k, c in enumerate(rated)}
    requester_count = np.zeros(len(rated))
    by_content: dict[int, dict[int, float]] = {c: {} for c in rated}
    for uid in user_ids:
        for c, val in profiles.get(uid, {}).items():
            by_content[c][uid] = val
    for c in rated:
        requester_count[content_col[c]] = len(by_content[c])

    total_users = len(user_ids)
    with np.errstate(divide="ignore"):
        irfu_w = np.where(requester_count > 0, np.log(total_users / np.maximum(requester_count, 1)), 0.0)
    indptr, indices, data = _profiles_to_csr(user_ids, profiles, content_col)
    user_sim = kernels.pair_similarity(indptr, indices, data, irfu_w)

    user_col = {u: k for k, u in enumerate(user_ids)}
    library = dataset.library_size
    irfc_w = np.zeros(len(user_ids))
    for k, uid in enumerate(user_ids):
        n = len(profiles.get(uid, {}))
        irfc_w[k] = math.log(library / n) if n else 0.0
    indptr, indices, data = _profiles_to_csr(rated, by_content, user_col)
    content_sim = kernels.pair_similarity(indptr, indices, data, irfc_w)

    return user_sim, user_ids, content_sim, rated


def fap_feature_table(dataset: Dataset, user_ids,
                      self_weight: float = SELF_WEIGHT_DEFAULT,
                      top_t: int = NEIGHBOR_COUNT_DEFAULT) -> FeatureTable:
    """Initial features for every user in scope and every library content.

    Users with no in-scope requests, and contents never requested in scope,
    fall back to their raw information vectors (no neighbors to blend).
    """
    if top_t < 0:
        raise ValidationError("neighbor count must be non-negative")
    user_sim, uids, content_sim, rated = similarity_matrices(dataset, user_ids)

    table = FeatureTable(user_features={}, content_features={})
    for k, uid in enumerate(uids):
        cands = {uids[j]: user_sim[k, j] for j in range(len(uids)) if j != k}
        ns = select_neighbors(uid, cands, top_t)
        table.user_neighbors[uid] = ns
        table.user_features[uid] = initial_user_feature(
            dataset.users[uid], [dataset.users[v] for v, _ in ns.members], self_weight
        )

    rated_pos = {c: k for k, c in enumerate(rated)}
    for cid in sorted(dataset.contents):
        if cid in rated_pos:
            k = rated_pos[cid]
            cands = {rated[j]: content_sim[k, j] for j in range(len(rated)) if j != k}
            ns = select_neighbors(cid, cands, top_t)
        else:
            ns = NeighborSet(owner=cid, members=[])
        table.content_neighbors[cid] = ns
        table.content_features[cid] = initial_content_feature(
            dataset.contents[cid], [dataset.contents[j] for j, _ in ns.members], self_weight
        )
    return table


def dump_neighbors(table: FeatureTable) -> str:
    """Debug CSV of the selected neighbor sets: scope,owner,neighbor,similarity."""
    lines = ["scope,owner,neighbor,similarity"]
    for scope, sets in (("user", table.user_neighbors), ("content", table.content_neighbors)):
        for owner in sorted(sets):
            for nid, s in sets[owner].members:
                lines.append(f"{scope},{owner},{nid},{s:.10f}")
    return "\n".join(lines) + "\n"
