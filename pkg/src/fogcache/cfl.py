"""Federated averaging and clustered federation over flat parameter vectors.

Plain federation repeats broadcast -> local train -> sample-weighted
aggregate until the aggregate update is small. Clustered federation starts
from one all-members cluster and recursively bipartitions any cluster whose
aggregate update has stalled while individual members still move (the
signature of members pulling toward different optima); the cut minimizes the
maximum cross-pair cosine similarity of member updates. After the partition
is (possibly) refined, each member adds the unweighted mean update of its
current cluster — note the deliberate asymmetry: the stall test uses the
sample-weighted combination, the parameter update the uniform one.

All norm thresholds compare root-mean-square norms (Euclidean norm divided
by sqrt(parameter count)) so configured epsilons are architecture-size
independent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .util import rms_norm

MAX_EXHAUSTIVE_SPLIT = 20


@dataclass
class ClientState:
    """One federation participant: parameters, last update, data size."""

    fap_id: int
    theta: np.ndarray
    delta: np.ndarray
    sample_count: int


@dataclass
class CflConfig:
    stop_eps: float = 0.05       # aggregate-update norm below this = stalled
    split_eps: float = 0.4       # member-update norm above this = still moving
    max_rounds: int = 200

    def __post_init__(self):
        if self.stop_eps < 0 or self.split_eps < 0:
            raise ConfigError("epsilons must be non-negative")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be positive")
        if self.split_eps <= self.stop_eps:
            warnings.warn(
                "split_eps <= stop_eps: clusters may split while already converged",
                stacklevel=2,
            )


@dataclass
class ClusterPartition:
    """Disjoint cover of the access points with one parameter vector each."""

    clusters: list[tuple[int, ...]]
    thetas: list[np.ndarray]

    def cluster_of(self, fap_id: int) -> int:
        for g, members in enumerate(self.clusters):
            if fap_id in members:
                return g
        raise ValidationError(f"access point {fap_id} not in partition")

    def theta_of(self, fap_id: int) -> np.ndarray:
        return self.thetas[self.cluster_of(fap_id)]

    def validate(self, all_faps) -> None:
        seen: set[int] = set()
        for members in self.clusters:
            if not members:
                raise ValidationError("empty cluster in partition")
            if seen & set(members):
                raise ValidationError("clusters overlap")
            seen |= set(members)
        if seen != set(all_faps):
            raise ValidationError("partition does not cover all access points")


@dataclass
class RoundRow:
    """One round-log entry for one cluster."""

    round_index: int
    cluster_id: int
    members: tuple[int, ...]
    update_norm: float
    max_member_norm: float
    split: bool


@dataclass
class FlResult:
    theta: np.ndarray
    rounds: int
    reason: str                      # "stop_eps" or "max_rounds"
    update_norms: list[float] = field(default_factory=list)


@dataclass
class CflResult:
    partition: ClusterPartition
    rounds: int
    reason: str                      # "converged" or "max_rounds"
    split_events: list[tuple[int, tuple[int, ...], tuple[int, ...], tuple[int, ...]]] = field(default_factory=list)
    round_log: list[RoundRow] = field(default_factory=list)


def weighted_update(clients) -> np.ndarray:
    """Sample-count-weighted combination of member updates."""
    clients = list(clients)
    if not clients:
        raise ValidationError("cannot aggregate an empty cluster")
    total = sum(c.sample_count for c in clients)
    if total <= 0:
        raise ValidationError("cluster has no training samples")
    out = np.zeros_like(clients[0].delta)
    for c in clients:
        if c.delta.shape != out.shape:
            raise ValidationError("client update lengths differ")
        out += (c.sample_count / total) * c.delta
    return out


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two updates; zero-norm input -> 0 (warned)."""
    if a.shape != b.shape:
        raise ValidationError("update lengths differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine similarity of a zero update is undefined; using 0",
                      stacklevel=2)
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def should_split(clients, stop_eps: float, split_eps: float) -> bool:
    """Stalled in aggregate but not individually, and at least two members."""
    clients = list(clients)
    if len(clients) < 2:
        return False
    agg = rms_norm(weighted_update(clients))
    max_member = max(rms_norm(c.delta) for c in clients)
    return agg < stop_eps and max_member > split_eps


def pairwise_cosine(clients) -> tuple[np.ndarray, list[int]]:
    """Symmetric cosine-similarity matrix of member updates (diagonal 1)."""
    clients = sorted(clients, key=lambda c: c.fap_id)
    ids = [c.fap_id for c in clients]
    n = len(clients)
    alpha = np.eye(n)
    for a in range(n):
        for b in range(a + 1, n):
            alpha[a, b] = alpha[b, a] = cosine_similarity(clients[a].delta, clients[b].delta)
    return alpha, ids


def optimal_bipartition(alpha: np.ndarray, members) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Exhaustive min-max cut of a cluster by update similarity.

    Scans every non-trivial bipartition (2^(n-1) - 1 candidates) and keeps
    the one minimizing the maximum cross-pair similarity. Ties prefer the
    more balanced cut, then the lexicographically smallest side containing
    the lowest member id.
    """
    members = tuple(sorted(members))
    n = len(members)
    if n < 2:
        raise ValidationError("cannot bipartition fewer than two members")
    if n > MAX_EXHAUSTIVE_SPLIT:
        raise ValidationError(
            f"refusing exhaustive bipartition of {n} members; reduce cluster sizes"
        )
    alpha = np.asarray(alpha)
    if alpha.shape != (n, n):
        raise ValidationError("similarity matrix does not match member count")

    best = None
    # Keep members[0] on side one so each cut is enumerated exactly once.
    for mask in range(1, 1 << (n - 1)):
        side2 = [k + 1 for k in range(n - 1) if mask >> k & 1]
        side1 = [k for k in range(n) if k == 0 or not (mask >> (k - 1) & 1)]
        worst = max(alpha[a, b] for a in side1 for b in side2)
        key = (worst, -min(len(side1), len(side2)), tuple(members[k] for k in side1))
        if best is None or key < best[0]:
            best = (key, side1, side2)
    _, side1, side2 = best
    return tuple(members[k] for k in side1), tuple(members[k] for k in side2)


def cluster_aggregate(thetas: dict[int, np.ndarray], deltas: dict[int, np.ndarray],
                      members) -> dict[int, np.ndarray]:
    """Each member adds the unweighted mean of the members' updates."""
    members = sorted(members)
    if not members:
        raise ValidationError("cannot aggregate an empty cluster")
    mean = np.zeros_like(deltas[members[0]])
    for m in members:
        mean += deltas[m]
    mean /= len(members)
    return {m: thetas[m] + mean for m in members}


def _check_finite(vec: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(vec)):
        raise ValidationError(f"non-finite values in {what}; training diverged")


def run_fl(fap_ids, theta_init: np.ndarray, train_fn, sample_counts,
           config: CflConfig) -> FlResult:
    """Plain federated averaging over one fixed member set.

    ``train_fn(theta, fap_id, round_index) -> delta`` runs one local
    optimization pass. Stops when the sample-weighted aggregate update's RMS
    norm drops below ``config.stop_eps``, or at ``config.max_rounds``.
    """
    fap_ids = sorted(fap_ids)
    if not fap_ids:
        raise ValidationError("no participants")
    theta = theta_init.copy()
    norms: list[float] = []
    reason = "max_rounds"
    rounds = 0
    for rnd in range(config.max_rounds):
        rounds = rnd + 1
        clients = []
        for m in fap_ids:
            delta = train_fn(theta, m, rnd)
            _check_finite(delta, f"update of access point {m}")
            clients.append(ClientState(m, theta, delta, sample_counts[m]))
        agg = weighted_update(clients)
        theta = theta + agg
        _check_finite(theta, "aggregated parameters")
        norms.append(rms_norm(agg))
        if norms[-1] < config.stop_eps:
            reason = "stop_eps"
            break
    return FlResult(theta=theta, rounds=rounds, reason=reason, update_norms=norms)


def run_cfl(fap_ids, theta_init: np.ndarray, train_fn, sample_counts,
            config: CflConfig) -> CflResult:
    """Recursive clustered federation (see module docstring for the scheme).

    Finishes when every cluster's members all have RMS update norm below
    ``config.split_eps`` (the convergence certificate), or at max_rounds.
    """
    fap_ids = sorted(fap_ids)
    if not fap_ids:
        raise ValidationError("no participants")
    clusters: list[tuple[int, ...]] = [tuple(fap_ids)]
    cluster_ids = [0]
    next_cluster_id = 1
    thetas: dict[int, np.ndarray] = {m: theta_init.copy() for m in fap_ids}

    result = CflResult(partition=ClusterPartition([], []), rounds=0, reason="max_rounds")
    for rnd in range(config.max_rounds):
        result.rounds = rnd + 1
        deltas: dict[int, np.ndarray] = {}
        for m in fap_ids:
            deltas[m] = train_fn(thetas[m], m, rnd)
            _check_finite(deltas[m], f"update of access point {m}")
        member_norm = {m: rms_norm(deltas[m]) for m in fap_ids}

        new_clusters: list[tuple[int, ...]] = []
        new_ids: list[int] = []
        for members, cid in zip(clusters, cluster_ids):
            clients = [ClientState(m, thetas[m], deltas[m], sample_counts[m]) for m in members]
            agg_norm = rms_norm(weighted_update(clients))
            max_norm = max(member_norm[m] for m in members)
            split = should_split(clients, config.stop_eps, config.split_eps)
            result.round_log.append(RoundRow(rnd, cid, members, agg_norm, max_norm, split))
            if split:
                alpha, ids = pairwise_cosine(clients)
                side1, side2 = optimal_bipartition(alpha, ids)
                result.split_events.append((rnd, members, side1, side2))
                new_clusters.extend([side1, side2])
                new_ids.extend([next_cluster_id, next_cluster_id + 1])
                next_cluster_id += 2
            else:
                new_clusters.append(members)
                new_ids.append(cid)
        clusters, cluster_ids = new_clusters, new_ids

        for members in clusters:
            updated = cluster_aggregate(thetas, deltas, members)
            for m, vec in updated.items():
                _check_finite(vec, f"parameters of access point {m}")
                thetas[m] = vec

        if all(max(member_norm[m] for m in members) < config.split_eps
               for members in clusters):
            result.reason = "converged"
            break

    # Members of one cluster share identical parameters by construction.
    result.partition = ClusterPartition(
        clusters=[tuple(sorted(ms)) for ms in clusters],
        thetas=[thetas[min(ms)] for ms in clusters],
    )
    result.partition.validate(fap_ids)
    return result


def render_round_log(rows) -> str:
    """CSV round log: round,cluster_id,member_ids,update_norm,max_member_norm,split."""
    lines = ["round,cluster_id,member_ids,update_norm,max_member_norm,split"]
    for r in rows:
        members = ";".join(str(m) for m in r.members)
        lines.append(
            f"{r.round_index},{r.cluster_id},{members},"
            f"{r.update_norm:.10e},{r.max_member_norm:.10e},{int(r.split)}"
        )
    return "\n".join(lines) + "\n"


def save_partition(path, partition: ClusterPartition, shape_spec) -> None:
    """Versioned checkpoint of a partition and its per-cluster parameters."""
    fap_ids, cluster_of = [], []
    for g, members in enumerate(partition.clusters):
        for m in members:
            fap_ids.append(m)
            cluster_of.append(g)
    np.savez(
        path,
        format=np.array("fogcache-partition-v1"),
        user_dims=np.asarray(shape_spec[0], dtype=np.int64),
        item_dims=np.asarray(shape_spec[1], dtype=np.int64),
        fap_ids=np.asarray(fap_ids, dtype=np.int64),
        cluster_of=np.asarray(cluster_of, dtype=np.int64),
        thetas=np.stack(partition.thetas),
    )


def load_partition(path) -> tuple[ClusterPartition, tuple[tuple[int, ...], tuple[int, ...]]]:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != "fogcache-partition-v1":
            raise ValidationError(f"unrecognized partition checkpoint in {path}")
        spec = (tuple(int(d) for d in z["user_dims"]), tuple(int(d) for d in z["item_dims"]))
        groups: dict[int, list[int]] = {}
        for m, g in zip(z["fap_ids"].tolist(), z["cluster_of"].tolist()):
            groups.setdefault(g, []).append(m)
        clusters = [tuple(sorted(groups[g])) for g in sorted(groups)]
        thetas = [z["thetas"][g].copy() for g in sorted(groups)]
        return ClusterPartition(clusters=clusters, thetas=thetas), spec
