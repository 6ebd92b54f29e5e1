"""Request-log ingestion, user/content encoding, topology and splits.

Two corpus sources are supported and produce identical structures:

* MovieLens-1M formatted files (``ratings.dat``/``users.dat``/``movies.dat``
  with ``::`` separators, ``|``-separated genres, latin-1 tolerant decoding);
* a synthetic generator that plants per-region genre-preference profiles
  across access points and also reports the planted clustering, so recovery
  can be checked against ground truth.

Users are split into *local* users, permanently attached to one access
point, and *mobile* users, which visit a random access point per
evaluation window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .util import substream

GENDER_CODES = ("F", "M")
AGE_CODES = (1, 18, 25, 35, 45, 50, 56)
OCCUPATION_COUNT = 21
GENRES = (
    "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
    "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)
USER_INFO_DIM = len(GENDER_CODES) + len(AGE_CODES) + OCCUPATION_COUNT  # 30
CONTENT_INFO_DIM = len(GENRES)  # 18

_GENRE_INDEX = {g: i for i, g in enumerate(GENRES)}
_AGE_INDEX = {a: i for i, a in enumerate(AGE_CODES)}


@dataclass(frozen=True)
class RequestRecord:
    """One user->content request event."""

    user_id: int
    content_id: int
    rating: int
    timestamp: int


@dataclass
class Dataset:
    """A request log plus the user/content information vectors it references."""

    requests: list[RequestRecord]
    users: dict[int, np.ndarray]
    contents: dict[int, np.ndarray]

    @property
    def library_size(self) -> int:
        return len(self.contents)

    def requests_by_user(self) -> dict[int, list[RequestRecord]]:
        """Requests grouped per user, preserving log order."""
        out: dict[int, list[RequestRecord]] = {}
        for r in self.requests:
            out.setdefault(r.user_id, []).append(r)
        return out


@dataclass
class Topology:
    """Assignment of users to access points.

    ``local_users`` maps 1-based access-point ids to their permanent users;
    ``mobile_users`` roam. ``associations`` (one map per evaluation window)
    is filled in by the mobility simulation.
    """

    fap_count: int
    local_users: dict[int, set[int]]
    mobile_users: set[int]
    associations: list[dict[int, set[int]]] | None = field(default=None)

    def fap_of(self) -> dict[int, int]:
        """Map each local user id to its access point."""
        out = {}
        for fap, users in self.local_users.items():
            for u in users:
                out[u] = fap
        return out

    def validate(self) -> None:
        seen: set[int] = set()
        for fap, users in self.local_users.items():
            if not 1 <= fap <= self.fap_count:
                raise ValidationError(f"access point id {fap} out of range")
            overlap = seen & users
            if overlap:
                raise ValidationError(f"users {sorted(overlap)} assigned to two access points")
            seen |= users
        if seen & self.mobile_users:
            raise ValidationError("local and mobile user sets overlap")


def encode_user_info(gender: str, age: int, occupation: int) -> np.ndarray:
    """One-hot encode (gender, age bin, occupation) into a length-30 vector."""
    if gender not in GENDER_CODES:
        raise ValidationError(f"unknown gender code {gender!r}")
    if age not in _AGE_INDEX:
        raise ValidationError(f"unknown age code {age!r}")
    if not 0 <= occupation < OCCUPATION_COUNT:
        raise ValidationError(f"unknown occupation code {occupation!r}")
    vec = np.zeros(USER_INFO_DIM)
    vec[GENDER_CODES.index(gender)] = 1.0
    vec[len(GENDER_CODES) + _AGE_INDEX[age]] = 1.0
    vec[len(GENDER_CODES) + len(AGE_CODES) + occupation] = 1.0
    return vec


def encode_content_info(genres) -> np.ndarray:
    """Multi-hot encode a genre list into a length-18 vector."""
    if not genres:
        raise ValidationError("content must carry at least one genre")
    vec = np.zeros(CONTENT_INFO_DIM)
    for g in genres:
        if g not in _GENRE_INDEX:
            raise ValidationError(f"unknown genre {g!r}")
        if vec[_GENRE_INDEX[g]]:
            raise ValidationError(f"duplicate genre {g!r}")
        vec[_GENRE_INDEX[g]] = 1.0
    return vec


def decode_user_info(vec: np.ndarray) -> tuple[str, int, int]:
    """Invert :func:`encode_user_info`."""
    g = len(GENDER_CODES)
    a = len(AGE_CODES)
    gender_block, age_block, occ_block = vec[:g], vec[g:g + a], vec[g + a:]
    if int(vec.sum()) != 3 or gender_block.sum() != 1 or age_block.sum() != 1:
        raise ValidationError("not a valid one-hot user vector")
    return (
        GENDER_CODES[int(np.argmax(gender_block))],
        AGE_CODES[int(np.argmax(age_block))],
        int(np.argmax(occ_block)),
    )


def decode_content_info(vec: np.ndarray) -> list[str]:
    """Invert :func:`encode_content_info`."""
    return [GENRES[i] for i in np.flatnonzero(vec)]


def _split_line(line: str, n_fields: int, kind: str, lineno: int) -> list[str]:
    parts = line.split("::")
    if kind == "movies" and len(parts) > n_fields:
        # titles may themselves contain '::'; re-join the middle
        parts = [parts[0], "::".join(parts[1:-1]), parts[-1]]
    if len(parts) != n_fields:
        raise ParseError(f"{kind} record has {len(parts)} fields, expected {n_fields}", lineno)
    return parts


def _parse_int(text: str, what: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{what} {text!r} is not an integer", lineno) from None


def parse_movielens(ratings_text: str, users_text: str, movies_text: str) -> Dataset:
    """Parse MovieLens-1M formatted text into a :class:`Dataset`.

    Raises :class:`ParseError` (naming the line) for malformed records and
    :class:`ValidationError` for out-of-range ratings or dangling references.
    Movies never rated still enter the library.
    """
    contents: dict[int, np.ndarray] = {}
    for lineno, line in enumerate(movies_text.splitlines(), start=1):
        if not line.strip():
            continue
        mid_s, _title, genres_s = _split_line(line, 3, "movies", lineno)
        mid = _parse_int(mid_s, "movie id", lineno)
        if mid <= 0 or mid in contents:
            raise ValidationError(f"movies line {lineno}: bad or duplicate movie id {mid}")
        try:
            contents[mid] = encode_content_info(genres_s.split("|"))
        except ValidationError as e:
            raise ValidationError(f"movies line {lineno}: {e}") from None

    users: dict[int, np.ndarray] = {}
    for lineno, line in enumerate(users_text.splitlines(), start=1):
        if not line.strip():
            continue
        uid_s, gender, age_s, occ_s, _zip = _split_line(line, 5, "users", lineno)
        uid = _parse_int(uid_s, "user id", lineno)
        if uid <= 0 or uid in users:
            raise ValidationError(f"users line {lineno}: bad or duplicate user id {uid}")
        try:
            users[uid] = encode_user_info(
                gender, _parse_int(age_s, "age", lineno), _parse_int(occ_s, "occupation", lineno)
            )
        except ValidationError as e:
            raise ValidationError(f"users line {lineno}: {e}") from None

    requests: list[RequestRecord] = []
    for lineno, line in enumerate(ratings_text.splitlines(), start=1):
        if not line.strip():
            continue
        uid_s, mid_s, rating_s, ts_s = _split_line(line, 4, "ratings", lineno)
        uid = _parse_int(uid_s, "user id", lineno)
        mid = _parse_int(mid_s, "movie id", lineno)
        rating = _parse_int(rating_s, "rating", lineno)
        ts = _parse_int(ts_s, "timestamp", lineno)
        if not 1 <= rating <= 5:
            raise ValidationError(f"ratings line {lineno}: rating {rating} outside [1,5]")
        if ts < 0:
            raise ValidationError(f"ratings line {lineno}: negative timestamp")
        if uid not in users:
            raise ValidationError(f"ratings line {lineno}: unknown user {uid}")
        if mid not in contents:
            raise ValidationError(f"ratings line {lineno}: unknown movie {mid}")
        requests.append(RequestRecord(uid, mid, rating, ts))

    return Dataset(requests=requests, users=users, contents=contents)


def load_movielens(directory) -> Dataset:
    """Read ratings.dat/users.dat/movies.dat from a directory (latin-1 tolerant)."""
    from pathlib import Path

    d = Path(directory)
    texts = []
    for name in ("ratings.dat", "users.dat", "movies.dat"):
        path = d / name
        if not path.exists():
            raise ConfigError(f"dataset directory {d} is missing {name}")
        texts.append(path.read_bytes().decode("iso-8859-1"))
    return parse_movielens(*texts)


def serialize_ratings(dataset: Dataset) -> str:
    """Re-emit the ratings file; parse -> serialize is line-for-line stable."""
    lines = [f"{r.user_id}::{r.content_id}::{r.rating}::{r.timestamp}" for r in dataset.requests]
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_movielens(dataset: Dataset) -> tuple[str, str, str]:
    """Emit (ratings, users, movies) texts in MovieLens-1M format.

    User demographic codes and genre lists are recovered from the encoded
    vectors; zip codes and titles are not retained and get placeholders.
    """
    users_lines = []
    for uid in sorted(dataset.users):
        gender, age, occ = decode_user_info(dataset.users[uid])
        users_lines.append(f"{uid}::{gender}::{age}::{occ}::00000")
    movies_lines = []
    for mid in sorted(dataset.contents):
        genres = "|".join(decode_content_info(dataset.contents[mid]))
        movies_lines.append(f"{mid}::Movie {mid} (2000)::{genres}")
    join = lambda ls: "\n".join(ls) + ("\n" if ls else "")
    return serialize_ratings(dataset), join(users_lines), join(movies_lines)


def build_topology(dataset: Dataset, fap_count: int, mobile_ratio: float,
                   skew_mode: str = "uniform", seed: int = 0) -> Topology:
    """Designate mobile users and assign the remaining locals to access points.

    ``skew_mode="uniform"`` deals locals out in random order, balanced across
    access points. ``skew_mode="genre"`` groups locals by their most-requested
    genre (ties to the lower genre index) and round-robins whole groups over
    access points, which makes the per-point request distributions incongruent.
    Deterministic given the seed.
    """
    if fap_count < 1:
        raise ConfigError("need at least one access point")
    if not 0.0 <= mobile_ratio <= 1.0:
        raise ConfigError(f"mobile_ratio {mobile_ratio} outside [0,1]")
    if skew_mode not in ("uniform", "genre"):
        raise ConfigError(f"unknown skew mode {skew_mode!r}")

    rng = substream(seed, "topology")
    all_users = np.array(sorted(dataset.users), dtype=np.int64)
    n_mobile = int(math.floor(mobile_ratio * len(all_users)))
    mobile = set(rng.choice(all_users, size=n_mobile, replace=False).tolist()) if n_mobile else set()
    locals_ = [u for u in all_users.tolist() if u not in mobile]
    if fap_count > len(locals_):
        raise ConfigError(
            f"{fap_count} access points but only {len(locals_)} local users"
        )

    local_sets: dict[int, set[int]] = {m: set() for m in range(1, fap_count + 1)}
    if skew_mode == "uniform":
        order = rng.permutation(len(locals_))
        for k, idx in enumerate(order):
            local_sets[k % fap_count + 1].add(locals_[idx])
    else:
        counts = {u: np.zeros(CONTENT_INFO_DIM) for u in locals_}
        for r in dataset.requests:
            if r.user_id in counts:
                counts[r.user_id] += dataset.contents[r.content_id]
        groups: dict[int, list[int]] = {}
        for u in locals_:
            groups.setdefault(int(np.argmax(counts[u])), []).append(u)
        for k, genre_idx in enumerate(sorted(groups)):
            local_sets[k % fap_count + 1].update(groups[genre_idx])

    topo = Topology(fap_count=fap_count, local_users=local_sets, mobile_users=mobile)
    topo.validate()
    return topo


def split_train_test(dataset: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """Per-user chronological split.

    The earliest ceil(train_fraction * n_u) requests of each user go to
    train; users with fewer than two requests stay entirely in train. Both
    halves share the user and content tables.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction {train_fraction} outside (0,1)")

    # Per user, order request positions by (timestamp, log position).
    positions: dict[int, list[int]] = {}
    for idx, r in enumerate(dataset.requests):
        positions.setdefault(r.user_id, []).append(idx)
    in_train = np.ones(len(dataset.requests), dtype=bool)
    for _u, idxs in positions.items():
        if len(idxs) < 2:
            continue
        ordered = sorted(idxs, key=lambda i: (dataset.requests[i].timestamp, i))
        n_train = math.ceil(train_fraction * len(ordered) - 1e-9)
        for i in ordered[n_train:]:
            in_train[i] = False

    train = [r for i, r in enumerate(dataset.requests) if in_train[i]]
    test = [r for i, r in enumerate(dataset.requests) if not in_train[i]]
    return (
        Dataset(requests=train, users=dataset.users, contents=dataset.contents),
        Dataset(requests=test, users=dataset.users, contents=dataset.contents),
    )


def top_subset(dataset: Dataset, n_users: int, n_contents: int) -> Dataset:
    """Restrict to the n_users/n_contents with the most requests (ties: lower id)."""
    ucount: dict[int, int] = {u: 0 for u in dataset.users}
    ccount: dict[int, int] = {c: 0 for c in dataset.contents}
    for r in dataset.requests:
        ucount[r.user_id] += 1
        ccount[r.content_id] += 1
    keep_u = set(sorted(ucount, key=lambda u: (-ucount[u], u))[:n_users])
    keep_c = set(sorted(ccount, key=lambda c: (-ccount[c], c))[:n_contents])
    return Dataset(
        requests=[r for r in dataset.requests if r.user_id in keep_u and r.content_id in keep_c],
        users={u: dataset.users[u] for u in sorted(keep_u)},
        contents={c: dataset.contents[c] for c in sorted(keep_c)},
    )


def synthesize_dataset(user_count: int, content_count: int, fap_count: int,
                       cluster_count: int, seed: int,
                       requests_per_user: int = 40,
                       mobile_ratio: float = 0.0):
    """Generate a request log with planted per-cluster genre profiles.

    Access points are grouped into ``cluster_count`` equal blocks; each block
    gets a latent genre-affinity profile and its local users sample requests
    from that profile. A couple of genres form a globally shared head (equal
    strong affinity in every profile), the rest are cluster-specific, and a
    mild heavy-tailed per-content quality factor shapes popularity within a
    genre. Popularity is thus a function of genre sets and quality only, so
    a feature-based predictor can in principle represent it.

    Returns ``(dataset, topology, planted_clusters)`` where the last item is
    the list of access-point id sets sharing a profile, for recovery checks.
    """
    if fap_count < 1 or user_count < 1 or content_count < 1:
        raise ConfigError("counts must be positive")
    if cluster_count > fap_count:
        raise ConfigError(f"cluster_count {cluster_count} exceeds fap_count {fap_count}")
    if cluster_count < 1 or fap_count % cluster_count != 0:
        raise ConfigError(f"cluster_count {cluster_count} must divide fap_count {fap_count}")
    if requests_per_user > content_count:
        raise ConfigError("requests_per_user cannot exceed content_count (no repeat requests)")

    n_genres = CONTENT_INFO_DIM
    rng_prof = substream(seed, "synth-profiles")
    rng_cont = substream(seed, "synth-contents")
    rng_user = substream(seed, "synth-users")
    rng_req = substream(seed, "synth-requests")

    # Latent genre-affinity profiles. The first few genres are globally
    # popular with identical strong affinity in every cluster (every real
    # request log shares a blockbuster head); the remaining genres are dealt
    # round-robin to the clusters as cluster-specific "home" genres with a
    # ~5x affinity spread, and everything else sits at a small floor. The
    # shared head keeps visiting users servable anywhere while the home
    # genres carry the disagreement that makes the clusters separable.
    n_global = 2 if cluster_count > 1 else 0
    affinity = np.full((cluster_count, n_genres), 0.015)
    global_aff = np.exp2(rng_prof.uniform(0.5, 1.6, n_global))
    affinity[:, :n_global] = global_aff
    klass = np.zeros(n_genres, dtype=np.int64)       # 0 = global head
    klass[n_global:] = (np.arange(n_genres - n_global) % cluster_count) + 1
    for c in range(cluster_count):
        home = klass == c + 1
        affinity[c, home] = np.exp2(rng_prof.uniform(-1.8, 1.8, home.sum()))

    # Contents: 1-3 genres each, multi-hot matrix for vectorized scoring.
    # Extra genres usually stay in the first genre's class (global head or
    # one cluster's home set), so most contents appeal to either everyone
    # or exactly one profile; the profiles then disagree on the home mass.
    content_ids = list(range(1, content_count + 1))
    genre_matrix = np.zeros((content_count, n_genres))
    for j in range(content_count):
        k = int(rng_cont.choice([1, 2, 3], p=[0.25, 0.45, 0.30]))
        first = int(rng_cont.integers(n_genres))
        chosen = [first]
        while len(chosen) < k:
            same_class = rng_cont.random() < 0.8
            pool = [g for g in range(n_genres)
                    if g not in chosen and (klass[g] == klass[first]) == same_class]
            if not pool:
                pool = [g for g in range(n_genres) if g not in chosen]
            chosen.append(int(pool[int(rng_cont.integers(len(pool)))]))
        genre_matrix[j, chosen] = 1.0
    genre_counts = genre_matrix.sum(axis=1)

    # Within-genre popularity is heavy-tailed in real request logs, so each
    # content carries a shuffled Zipf quality factor on top of its genre
    # appeal. The very top of every ranking is then unambiguous (all policies
    # agree on the head) while the mid-tail keeps enough diversity for the
    # ranking quality of the predictors to matter.
    quality = (1.0 + np.arange(content_count)) ** -0.1
    rng_cont.shuffle(quality)

    faps_per_cluster = fap_count // cluster_count
    cluster_of_fap = {m: (m - 1) // faps_per_cluster for m in range(1, fap_count + 1)}
    planted = [
        frozenset(m for m in range(1, fap_count + 1) if cluster_of_fap[m] == c)
        for c in range(cluster_count)
    ]

    users: dict[int, np.ndarray] = {}
    contents = {cid: genre_matrix[cid - 1].copy() for cid in content_ids}
    requests: list[RequestRecord] = []
    local_sets: dict[int, set[int]] = {m: set() for m in range(1, fap_count + 1)}

    for idx in range(user_count):
        uid = idx + 1
        fap = idx % fap_count + 1
        local_sets[fap].add(uid)
        cluster = cluster_of_fap[fap]

        gender = GENDER_CODES[int(rng_user.integers(2))]
        age = AGE_CODES[int(rng_user.integers(len(AGE_CODES)))]
        occ = int(rng_user.integers(OCCUPATION_COUNT))
        users[uid] = encode_user_info(gender, age, occ)

        user_aff = affinity[cluster]
        liked_mask = (user_aff > 0.5).astype(float)

        scores = (genre_matrix @ user_aff) / genre_counts * quality
        dist = scores / scores.sum()
        picks = rng_req.choice(content_count, size=requests_per_user,
                               replace=False, p=dist)
        stamps = np.sort(rng_req.integers(0, 10_000_000, size=requests_per_user))
        favored = genre_matrix[picks] @ liked_mask > 0
        for k, (j, ts) in enumerate(zip(picks.tolist(), stamps.tolist())):
            probs = [0.02, 0.08, 0.20, 0.35, 0.35] if favored[k] else [0.10, 0.25, 0.35, 0.20, 0.10]
            rating = int(rng_req.choice([1, 2, 3, 4, 5], p=probs))
            requests.append(RequestRecord(uid, j + 1, rating, int(ts)))

    mobile: set[int] = set()
    n_mobile = int(math.floor(mobile_ratio * user_count))
    if n_mobile:
        rng_mob = substream(seed, "synth-mobiles")
        mobile = set(rng_mob.choice(np.arange(1, user_count + 1), size=n_mobile,
                                    replace=False).tolist())
        for m in local_sets:
            local_sets[m] -= mobile

    dataset = Dataset(requests=requests, users=users, contents=contents)
    topo = Topology(fap_count=fap_count, local_users=local_sets, mobile_users=mobile)
    topo.validate()
    return dataset, topo, planted
