"""Federated averaging, cluster splitting, and the bipartition search."""

from __future__ import annotations

import numpy as np
import pytest

from fogcache.cfl import (CflConfig, ClientState, ClusterPartition,
                          cluster_aggregate, cosine_similarity,
                          load_partition, optimal_bipartition, pairwise_cosine,
                          render_round_log, run_cfl, run_fl, save_partition,
                          should_split, weighted_update)
from fogcache.errors import ConfigError, ValidationError

from oracles import brute_force_bipartition


def client(fap_id, delta, count=1):
    delta = np.asarray(delta, dtype=np.float64)
    return ClientState(fap_id=fap_id, theta=np.zeros_like(delta), delta=delta,
                       sample_count=count)


class TestWeightedUpdate:
    def test_hand_arithmetic_counts_one_and_three(self):
        agg = weighted_update([client(1, [4.0, 0.0], 1), client(2, [0.0, 8.0], 3)])
        assert np.array_equal(agg, np.array([1.0, 6.0]))

    def test_equal_and_opposite_cancel_exactly(self):
        d = np.array([0.3, -1.7, 2.5])
        agg = weighted_update([client(1, d, 2), client(2, -d, 2)])
        assert np.all(agg == 0.0)

    def test_errors(self):
        with pytest.raises(ValidationError):
            weighted_update([])
        with pytest.raises(ValidationError):
            weighted_update([client(1, [1.0], 0)])
        with pytest.raises(ValidationError):
            weighted_update([client(1, [1.0], 1), client(2, [1.0, 2.0], 1)])


class TestCosine:
    def test_known_angles(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 2.0])
        assert cosine_similarity(a, b) == 0.0
        assert cosine_similarity(a, 3 * a) == pytest.approx(1.0)
        assert cosine_similarity(a, -a) == pytest.approx(-1.0)

    def test_zero_norm_warns_and_returns_zero(self):
        with pytest.warns(UserWarning, match="zero update"):
            assert cosine_similarity(np.zeros(2), np.ones(2)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            cosine_similarity(np.ones(2), np.ones(3))

    def test_pairwise_matrix(self):
        clients = [client(3, [1.0, 0.0]), client(1, [0.0, 1.0]), client(2, [1.0, 1.0])]
        alpha, ids = pairwise_cosine(clients)
        assert ids == [1, 2, 3]
        assert np.allclose(np.diag(alpha), 1.0)
        assert np.allclose(alpha, alpha.T)
        assert alpha[0, 2] == pytest.approx(0.0)          # faps 1 vs 3
        assert alpha[0, 1] == pytest.approx(1 / np.sqrt(2))


class TestShouldSplit:
    def test_singleton_never_splits(self):
        assert not should_split([client(1, [9.0, 9.0])], 0.5, 1.0)

    def test_stalled_but_moving_splits(self):
        d = np.array([2.0, 0.0])
        assert should_split([client(1, d), client(2, -d)], 0.1, 0.5)

    def test_aggregate_still_moving_does_not_split(self):
        d = np.array([2.0, 0.0])
        assert not should_split([client(1, d), client(2, d)], 0.1, 0.5)

    def test_members_settled_does_not_split(self):
        d = np.array([1e-4, 0.0])
        assert not should_split([client(1, d), client(2, -d)], 0.1, 0.5)


class TestBipartition:
    def test_two_blocks_hand_case(self):
        # members {1,2} and {5,6} agree within blocks, disagree across
        alpha = np.array([
            [1.0, 0.9, -0.8, -0.7],
            [0.9, 1.0, -0.6, -0.9],
            [-0.8, -0.6, 1.0, 0.95],
            [-0.7, -0.9, 0.95, 1.0],
        ])
        side1, side2 = optimal_bipartition(alpha, [5, 1, 6, 2])
        assert side1 == (1, 2) and side2 == (5, 6)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(123)
        for trial in range(30):
            n = int(rng.integers(2, 8))
            raw = rng.uniform(-1.0, 1.0, size=(n, n))
            alpha = (raw + raw.T) / 2.0
            np.fill_diagonal(alpha, 1.0)
            members = sorted(rng.choice(100, size=n, replace=False).tolist())
            assert optimal_bipartition(alpha, members) == \
                brute_force_bipartition(alpha, members)

    def test_tie_prefers_balance_then_lex(self):
        alpha = np.full((4, 4), 0.5)
        np.fill_diagonal(alpha, 1.0)
        # all cuts share worst=0.5 -> 2/2 cuts win; smallest side1 is (1,2)
        assert optimal_bipartition(alpha, [1, 2, 3, 4]) == ((1, 2), (3, 4))

    def test_errors(self):
        with pytest.raises(ValidationError):
            optimal_bipartition(np.eye(1), [1])
        with pytest.raises(ValidationError):
            optimal_bipartition(np.eye(3), [1, 2])
        with pytest.raises(ValidationError):
            optimal_bipartition(np.eye(21), list(range(21)))


class TestClusterAggregate:
    def test_uniform_mean_added(self):
        thetas = {1: np.array([1.0, 1.0]), 2: np.array([2.0, 2.0])}
        deltas = {1: np.array([1.0, 0.0]), 2: np.array([0.0, 3.0])}
        out = cluster_aggregate(thetas, deltas, [1, 2])
        assert np.array_equal(out[1], np.array([1.5, 2.5]))
        assert np.array_equal(out[2], np.array([2.5, 3.5]))

    def test_empty_raises(self):
        with pytest.raises(ValidationError):
            cluster_aggregate({}, {}, [])


def pull_train_fn(targets, rate=0.3):
    """Each participant's local step moves a fixed fraction toward its target."""
    def train_fn(theta, fap_id, rnd):
        return rate * (targets[fap_id] - theta)
    return train_fn


class TestRunFl:
    def test_singleton_equals_sequential_local_training(self):
        target = {1: np.array([2.0, -1.0, 0.5, 4.0])}
        fn = pull_train_fn(target)
        config = CflConfig(stop_eps=1e-3, split_eps=1e-2, max_rounds=100)
        result = run_fl([1], np.zeros(4), fn, {1: 5}, config)

        theta = np.zeros(4)
        rounds = 0
        for _ in range(100):
            rounds += 1
            delta = fn(theta, 1, rounds - 1)
            theta = theta + delta
            if np.linalg.norm(delta) / 2.0 < 1e-3:
                break
        assert np.array_equal(result.theta, theta)
        assert result.rounds == rounds
        assert result.reason == "stop_eps"

    def test_two_clients_move_to_weighted_fixed_point(self):
        targets = {1: np.array([4.0, 0.0]), 2: np.array([0.0, 4.0])}
        counts = {1: 3, 2: 1}
        config = CflConfig(stop_eps=1e-6, split_eps=1e-5, max_rounds=500)
        result = run_fl([1, 2], np.zeros(2), pull_train_fn(targets), counts, config)
        expect = 0.75 * targets[1] + 0.25 * targets[2]
        assert np.allclose(result.theta, expect, atol=1e-4)

    def test_max_rounds_reason(self):
        targets = {1: np.array([1000.0, 0.0])}
        # the geometric approach cannot push the update norm to 1e-9 in
        # seven rounds, so the budget runs out first
        config = CflConfig(stop_eps=1e-9, split_eps=1e-8, max_rounds=7)
        result = run_fl([1], np.zeros(2), pull_train_fn(targets), {1: 1}, config)
        assert result.rounds == 7 and result.reason == "max_rounds"
        assert len(result.update_norms) == 7

    def test_non_finite_update_rejected(self):
        def bad_fn(theta, fap_id, rnd):
            return np.array([np.nan, 0.0])
        with pytest.raises(ValidationError, match="non-finite"):
            run_fl([1], np.zeros(2), bad_fn, {1: 1}, CflConfig())

    def test_empty_participants(self):
        with pytest.raises(ValidationError):
            run_fl([], np.zeros(2), lambda *a: np.zeros(2), {}, CflConfig())


class TestRunCfl:
    def test_recovers_planted_groups(self):
        targets = {1: np.array([2.0, 0.0, 0.0, 0.0]),
                   2: np.array([2.0, 0.1, 0.0, 0.0]),
                   3: np.array([-2.0, 0.0, 0.1, 0.0]),
                   4: np.array([-2.0, 0.0, 0.0, 0.1])}
        counts = {m: 1 for m in targets}
        config = CflConfig(stop_eps=0.05, split_eps=0.1, max_rounds=100)
        result = run_cfl([1, 2, 3, 4], np.zeros(4), pull_train_fn(targets),
                         counts, config)
        assert sorted(result.partition.clusters) == [(1, 2), (3, 4)]
        assert result.reason == "converged"
        assert len(result.split_events) == 1
        rnd, parent, side1, side2 = result.split_events[0]
        assert parent == (1, 2, 3, 4) and {side1, side2} == {(1, 2), (3, 4)}
        # each cluster's parameters get pulled toward its own side's targets
        assert result.partition.theta_of(1)[0] > 1.0
        assert result.partition.theta_of(3)[0] < -1.0

    def test_homogeneous_members_stay_together(self):
        targets = {m: np.array([1.0, 1.0]) for m in (1, 2, 3)}
        config = CflConfig(stop_eps=1e-4, split_eps=1e-3, max_rounds=200)
        result = run_cfl([1, 2, 3], np.zeros(2), pull_train_fn(targets),
                         {m: 2 for m in targets}, config)
        assert result.partition.clusters == [(1, 2, 3)]
        assert result.split_events == []
        assert result.reason == "converged"

    def test_members_of_cluster_share_parameters(self):
        targets = {1: np.array([3.0, 0.0]), 2: np.array([3.0, 0.2]),
                   3: np.array([-3.0, 0.0]), 4: np.array([-3.0, 0.2])}
        config = CflConfig(stop_eps=0.05, split_eps=0.1, max_rounds=100)
        result = run_cfl([1, 2, 3, 4], np.zeros(2), pull_train_fn(targets),
                         {m: 1 for m in targets}, config)
        for members in result.partition.clusters:
            ref = result.partition.theta_of(members[0])
            for m in members[1:]:
                assert np.array_equal(result.partition.theta_of(m), ref)

    def test_round_log_renders(self):
        targets = {1: np.array([1.0, 0.0]), 2: np.array([-1.0, 0.0])}
        config = CflConfig(stop_eps=0.05, split_eps=0.1, max_rounds=50)
        result = run_cfl([1, 2], np.zeros(2), pull_train_fn(targets),
                         {1: 1, 2: 1}, config)
        text = render_round_log(result.round_log)
        lines = text.splitlines()
        assert lines[0] == "round,cluster_id,member_ids,update_norm,max_member_norm,split"
        assert len(lines) == len(result.round_log) + 1
        fields = lines[1].split(",")
        assert fields[0] == "0" and fields[5] in ("0", "1")


class TestPartition:
    def test_validate_catches_problems(self):
        theta = np.zeros(2)
        with pytest.raises(ValidationError, match="empty"):
            ClusterPartition([()], [theta]).validate([1])
        with pytest.raises(ValidationError, match="overlap"):
            ClusterPartition([(1, 2), (2,)], [theta, theta]).validate([1, 2])
        with pytest.raises(ValidationError, match="cover"):
            ClusterPartition([(1,)], [theta]).validate([1, 2])

    def test_lookup(self):
        part = ClusterPartition([(1, 3), (2,)], [np.array([1.0]), np.array([2.0])])
        assert part.cluster_of(3) == 0
        assert part.theta_of(2)[0] == 2.0
        with pytest.raises(ValidationError):
            part.cluster_of(9)

    def test_save_load_round_trip(self, tmp_path):
        part = ClusterPartition([(1, 3), (2,)],
                                [np.arange(4.0), np.arange(4.0) * 2])
        spec = ((3, 2, 1), (2, 2, 1))
        path = tmp_path / "part.npz"
        save_partition(path, part, spec)
        loaded, spec2 = load_partition(path)
        assert spec2 == spec
        assert loaded.clusters == part.clusters
        for a, b in zip(loaded.thetas, part.thetas):
            assert np.array_equal(a, b)

    def test_load_rejects_unknown_format(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, format=np.array("nope"))
        with pytest.raises(ValidationError):
            load_partition(path)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            CflConfig(stop_eps=-1.0)
        with pytest.raises(ConfigError):
            CflConfig(max_rounds=0)

    def test_warns_on_inverted_thresholds(self):
        with pytest.warns(UserWarning, match="split_eps"):
            CflConfig(stop_eps=0.5, split_eps=0.1)
