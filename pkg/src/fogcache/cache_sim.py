"""Windowed cache replay over held-out requests.

The test split is sliced chronologically into equal-count windows. Each
mobile user visits one uniformly drawn access point per window; every test
request is attributed to exactly one point (a local user's home point, or
the point its mobile author visits that window). Policies fill each point's
cache per window, and hit rate is simply the fraction of attributed requests
found in the cache.

Policies: three model-based variants differing only in training scope
(clustered federation / global federation / isolated local training), all
integrating mobile popularity, plus frequency (LFU) and recency (LRU)
baselines warm-started from training history. A policy is ``prepared`` once
(training and per-window content rankings) and can then be replayed at any
capacity, since every cache is a prefix of a fixed ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from . import cfl, dcnn, mobile, popularity
from .config import ExperimentConfig, KNOWN_POLICIES
from .dataset import Dataset, Topology, split_train_test
from .errors import ConfigError, ValidationError
from .features import fap_feature_table
from .util import derive_seed, substream

POLICIES = KNOWN_POLICIES


@dataclass
class EvalWindow:
    """One evaluation slice: attributed requests and mobile associations."""

    index: int
    fap_requests: dict[int, list]
    associations: dict[int, set[int]]


@dataclass
class ResultCell:
    fap: int
    window: int
    hits: int
    requests: int

    @property
    def hit_rate(self) -> float:
        return self.hits / self.requests if self.requests else math.nan


@dataclass
class PolicyResult:
    policy: str
    capacity: int
    mobile_ratio: float
    cells: list[ResultCell]

    @property
    def total_hits(self) -> int:
        return sum(c.hits for c in self.cells)

    @property
    def total_requests(self) -> int:
        return sum(c.requests for c in self.cells)

    @property
    def aggregate_hit_rate(self) -> float:
        total = self.total_requests
        return self.total_hits / total if total else math.nan


@dataclass
class PreparedPolicy:
    """Capacity-independent state: per-(point, window) content rankings."""

    policy: str
    mobile_ratio: float
    fap_ids: list[int]
    windows: list[EvalWindow]
    ranked: dict[tuple[int, int], np.ndarray]
    tables: list = field(default_factory=list)
    federation: object = None
    test_request_count: int = 0


def hit_rate(cache_set, window_requests) -> float:
    """Fraction of the window's requests served from cache; NaN if none."""
    reqs = list(window_requests)
    if not reqs:
        return math.nan
    return sum(1 for r in reqs if r.content_id in cache_set) / len(reqs)


def simulate_mobility(topology: Topology, n_windows: int, seed: int
                      ) -> list[dict[int, set[int]]]:
    """Uniform independent per-window access-point draw for every mobile."""
    if n_windows < 1:
        raise ConfigError("need at least one window")
    rng = substream(seed, "mobility")
    fap_ids = sorted(topology.local_users)
    out = []
    for _w in range(n_windows):
        assoc: dict[int, set[int]] = {m: set() for m in fap_ids}
        for uid in sorted(topology.mobile_users):
            assoc[int(rng.integers(1, topology.fap_count + 1))].add(uid)
        out.append(assoc)
    return out


def build_windows(test: Dataset, topology: Topology,
                  associations: list[dict[int, set[int]]]) -> list[EvalWindow]:
    """Chronological equal-count slices with per-request point attribution."""
    fap_ids = sorted(topology.local_users)
    fap_of = topology.fap_of()
    reqs = test.requests
    order = sorted(
        range(len(reqs)),
        key=lambda i: (reqs[i].timestamp, reqs[i].user_id, reqs[i].content_id, i),
    )
    chunks = np.array_split(np.asarray(order, dtype=np.int64), len(associations))
    windows = []
    for w, chunk in enumerate(chunks):
        visiting = {u: m for m, users in associations[w].items() for u in users}
        per_fap: dict[int, list] = {m: [] for m in fap_ids}
        for i in chunk.tolist():
            r = reqs[i]
            if r.user_id in fap_of:
                per_fap[fap_of[r.user_id]].append(r)
            elif r.user_id in visiting:
                per_fap[visiting[r.user_id]].append(r)
            else:
                raise ValidationError(f"request by unknown user {r.user_id}")
        windows.append(EvalWindow(index=w, fap_requests=per_fap,
                                  associations=associations[w]))
    return windows


def _lfu_rank(history) -> np.ndarray:
    counts: dict[int, int] = {}
    for r in history:
        counts[r.content_id] = counts.get(r.content_id, 0) + 1
    ordered = sorted(counts, key=lambda c: (-counts[c], c))
    return np.asarray(ordered, dtype=np.int64)


def _lru_rank(history) -> np.ndarray:
    latest: dict[int, int] = {}
    for r in history:
        if r.content_id not in latest or r.timestamp > latest[r.content_id]:
            latest[r.content_id] = r.timestamp
    ordered = sorted(latest, key=lambda c: (-latest[c], c))
    return np.asarray(ordered, dtype=np.int64)


def lfu_policy(history, capacity: int) -> set[int]:
    """Most frequently requested contents in the history (ties: lower id)."""
    if capacity < 0:
        raise ValidationError("capacity must be non-negative")
    return set(_lfu_rank(history)[:capacity].tolist())


def lru_policy(history, capacity: int) -> set[int]:
    """Most recently requested contents by latest timestamp (ties: lower id)."""
    if capacity < 0:
        raise ValidationError("capacity must be non-negative")
    return set(_lru_rank(history)[:capacity].tolist())


def _fap_train_requests(train: Dataset, topology: Topology) -> dict[int, list]:
    fap_of = topology.fap_of()
    out: dict[int, list] = {m: [] for m in sorted(topology.local_users)}
    for r in train.requests:
        m = fap_of.get(r.user_id)
        if m is not None:
            out[m].append(r)
    return out


def _prepare_baseline(policy_id, windows, fap_train, fap_ids):
    rank_fn = _lfu_rank if policy_id == "lfu" else _lru_rank
    ranked = {}
    history = {m: list(fap_train[m]) for m in fap_ids}
    for win in windows:
        for m in fap_ids:
            ranked[(m, win.index)] = rank_fn(history[m])
        for m in fap_ids:
            history[m].extend(win.fap_requests.get(m, []))
    return ranked


def _prepare_dcnn(policy_id, dataset, train, topology, windows,
                  config: ExperimentConfig):
    fap_ids = sorted(topology.local_users)
    content_ids = sorted(dataset.contents)
    library = len(content_ids)
    seed = config.seed
    fap_train = _fap_train_requests(train, topology)
    active = [m for m in fap_ids if fap_train[m]]
    if not active:
        raise ValidationError("no access point has local training data")

    features = {
        m: fap_feature_table(train, topology.local_users[m],
                             config.self_weight, config.neighbor_count)
        for m in active
    }
    tsets = {
        m: dcnn.build_training_set(fap_train[m], features[m],
                                   config.negative_ratio,
                                   derive_seed(seed, "negatives", m))
        for m in active
    }
    counts = {m: len(tsets[m]) for m in active}
    d_user = len(dataset.users[next(iter(dataset.users))])
    d_item = len(dataset.contents[next(iter(dataset.contents))])
    model0 = dcnn.init_model(d_user, d_item, config.hidden_dims,
                             config.latent_dim, derive_seed(seed, "init"))
    theta0 = dcnn.flatten(model0)
    shape_spec = model0.shape_spec
    base_tc = config.train_config(0)

    def train_fn(theta, fap_id, round_idx):
        cfg = dc_replace(base_tc, seed=derive_seed(seed, "round", fap_id, round_idx))
        _, delta = dcnn.local_train(dcnn.unflatten(theta, shape_spec), tsets[fap_id], cfg)
        return delta

    cfl_cfg = config.cfl_config()
    theta_of: dict[int, np.ndarray] = {}
    if policy_id == "dcnn-cfl":
        federation = cfl.run_cfl(active, theta0, train_fn, counts, cfl_cfg)
        for m in active:
            theta_of[m] = federation.partition.theta_of(m)
    elif policy_id == "dcnn-fl":
        federation = cfl.run_fl(active, theta0, train_fn, counts, cfl_cfg)
        for m in active:
            theta_of[m] = federation.theta
    else:  # dcnn-lc: each point federates with itself only
        federation = {}
        for m in active:
            res = cfl.run_cfl([m], theta0, train_fn, counts, cfl_cfg)
            federation[m] = res
            theta_of[m] = res.partition.thetas[0]

    local_norm: dict[int, np.ndarray] = {}
    local_defined: dict[int, bool] = {}
    for m in fap_ids:
        if m in theta_of:
            model_m = dcnn.unflatten(theta_of[m], shape_spec)
            act = popularity.activity_levels(fap_train[m], topology.local_users[m])
            vec = popularity.local_popularity(model_m, features[m], act, content_ids)
            local_norm[m], local_defined[m] = popularity.normalize(vec)
        else:
            local_norm[m], local_defined[m] = np.zeros(library), False

    # Mobile users train privately on their own histories and report only
    # predicted probabilities over the library.
    content_matrix = np.asarray([dataset.contents[c] for c in content_ids])
    train_by_user = train.requests_by_user()
    ftrl_cfg = config.ftrl_config()
    reports: dict[int, np.ndarray] = {}
    for uid in sorted(topology.mobile_users):
        hist = train_by_user.get(uid, [])
        if not hist:
            continue
        samples = mobile.build_preference_samples(
            sorted({r.content_id for r in hist}), dataset.contents,
            ftrl_cfg.negative_ratio, derive_seed(seed, "ftrl", uid))
        pref, _state = mobile.fit_ftrl(samples, ftrl_cfg,
                                       derive_seed(seed, "ftrl-fit", uid))
        reports[uid] = mobile.preference_report(pref, content_matrix)

    ranked: dict[tuple[int, int], np.ndarray] = {}
    tables: list[popularity.PopularityTable] = []
    for win in windows:
        for m in fap_ids:
            associated = sorted(win.associations.get(m, set()))
            present = [u for u in associated if u in reports]
            q_vec, q_defined = mobile.mobile_popularity(
                [reports[u] for u in present], library)
            if q_defined:
                q_norm, q_defined = popularity.normalize(q_vec)
            else:
                q_norm = q_vec
            weight = popularity.mobile_weight(len(associated),
                                              len(topology.local_users[m]))
            if not local_defined[m] and not q_defined:
                ranked[(m, win.index)] = np.empty(0, dtype=np.int64)
                continue
            integrated, w_used = popularity.integrate(
                local_norm[m], q_norm, weight,
                local_defined=local_defined[m], mobile_defined=q_defined)
            ranked[(m, win.index)] = popularity.rank_contents(integrated, content_ids)
            tables.append(popularity.PopularityTable(
                fap_id=m, window=win.index, local=local_norm[m],
                local_defined=local_defined[m], mobile=q_norm,
                mobile_defined=q_defined, mobile_weight=w_used,
                integrated=integrated))
    return ranked, tables, federation


def prepare_policy(policy_id: str, dataset: Dataset, topology: Topology,
                   config: ExperimentConfig) -> PreparedPolicy:
    """Train (if the policy needs it) and rank contents per point and window."""
    if policy_id not in POLICIES:
        raise ConfigError(f"unknown policy {policy_id!r}")
    train, test = split_train_test(dataset, config.train_fraction)
    associations = simulate_mobility(topology, config.windows, config.seed)
    windows = build_windows(test, topology, associations)
    fap_ids = sorted(topology.local_users)

    tables: list = []
    federation: object = None
    if policy_id in ("lfu", "lru"):
        fap_train = _fap_train_requests(train, topology)
        ranked = _prepare_baseline(policy_id, windows, fap_train, fap_ids)
    else:
        ranked, tables, federation = _prepare_dcnn(
            policy_id, dataset, train, topology, windows, config)
    return PreparedPolicy(
        policy=policy_id, mobile_ratio=config.mobile_ratio, fap_ids=fap_ids,
        windows=windows, ranked=ranked, tables=tables, federation=federation,
        test_request_count=len(test.requests),
    )


def per_fap_capacity(config: ExperimentConfig, fap_count: int) -> int:
    if config.capacity < 0:
        raise ConfigError("capacity must be non-negative")
    if config.capacity_scope == "total":
        return config.capacity // fap_count
    return config.capacity


def replay(prepared: PreparedPolicy, capacity: int, scope: str = "total") -> PolicyResult:
    """Hit/request counts per point and window at one capacity setting."""
    fap_count = len(prepared.fap_ids)
    per_fap = capacity // fap_count if scope == "total" else capacity
    if per_fap < 0:
        raise ConfigError("capacity must be non-negative")
    cells = []
    for win in prepared.windows:
        for m in prepared.fap_ids:
            reqs = win.fap_requests.get(m, [])
            ids = prepared.ranked.get((m, win.index))
            cache = set(ids[:per_fap].tolist()) if ids is not None else set()
            cells.append(ResultCell(fap=m, window=win.index,
                                    hits=sum(1 for r in reqs if r.content_id in cache),
                                    requests=len(reqs)))
    return PolicyResult(policy=prepared.policy, capacity=capacity,
                        mobile_ratio=prepared.mobile_ratio, cells=cells)


def run_policy(policy_id: str, dataset: Dataset, topology: Topology,
               config: ExperimentConfig) -> PolicyResult:
    """Train, fill caches per window, and replay the test split once."""
    prepared = prepare_policy(policy_id, dataset, topology, config)
    return replay(prepared, config.capacity, config.capacity_scope)


def sweep_policy(policy_id: str, dataset: Dataset, topology: Topology,
                 config: ExperimentConfig, capacities) -> list[PolicyResult]:
    """One preparation, replayed at each capacity (rankings are reused)."""
    prepared = prepare_policy(policy_id, dataset, topology, config)
    return [replay(prepared, int(c), config.capacity_scope) for c in capacities]


def results_csv(results) -> str:
    """The results table: policy,capacity,mobile_ratio,fap,window,hits,requests,hit_rate."""
    lines = ["policy,capacity,mobile_ratio,fap,window,hits,requests,hit_rate"]
    for res in results:
        for c in res.cells:
            rate = f"{c.hits / c.requests:.10f}" if c.requests else "nan"
            lines.append(
                f"{res.policy},{res.capacity},{res.mobile_ratio:g},"
                f"{c.fap},{c.window},{c.hits},{c.requests},{rate}"
            )
    return "\n".join(lines) + "\n"
