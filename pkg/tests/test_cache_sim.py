"""Windowed cache replay: attribution, baselines, conservation, monotonicity."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fogcache.cache_sim import (EvalWindow, PolicyResult, ResultCell,
                                build_windows, hit_rate, lfu_policy,
                                lru_policy, prepare_policy, replay,
                                results_csv, run_policy, simulate_mobility,
                                sweep_policy)
from fogcache.config import ExperimentConfig
from fogcache.dataset import (Dataset, RequestRecord, Topology,
                              encode_content_info, encode_user_info)
from fogcache.errors import ConfigError, ValidationError


def micro_corpus():
    """One access point, two users, four contents; every hit hand-checkable."""
    users = {1: encode_user_info("F", 25, 1), 2: encode_user_info("M", 35, 2)}
    contents = {c: encode_content_info([g]) for c, g in
                zip((1, 2, 3, 4), ("Comedy", "Action", "Drama", "Horror"))}
    reqs = [
        RequestRecord(1, 1, 4, 1), RequestRecord(1, 1, 4, 2),
        RequestRecord(1, 2, 3, 3), RequestRecord(1, 3, 4, 10),
        RequestRecord(2, 2, 4, 1), RequestRecord(2, 2, 4, 2),
        RequestRecord(2, 1, 3, 3), RequestRecord(2, 1, 4, 11),
    ]
    dataset = Dataset(requests=reqs, users=users, contents=contents)
    topology = Topology(fap_count=1, local_users={1: {1, 2}}, mobile_users=set())
    config = ExperimentConfig(synthetic="", dataset_dir="x", fap_count=1,
                              windows=2, mobile_ratio=0.0, seed=0,
                              train_fraction=0.75)
    return dataset, topology, config


class TestMobility:
    def test_deterministic_and_in_range(self):
        topo = Topology(fap_count=3, local_users={1: {1}, 2: {2}, 3: {3}},
                        mobile_users={7, 8, 9})
        a = simulate_mobility(topo, 5, seed=4)
        b = simulate_mobility(topo, 5, seed=4)
        assert a == b
        assert len(a) == 5
        for assoc in a:
            placed = [u for users in assoc.values() for u in users]
            assert sorted(placed) == [7, 8, 9]  # each mobile exactly once
            assert set(assoc) == {1, 2, 3}

    def test_varies_across_windows(self):
        topo = Topology(fap_count=4, local_users={m: set() for m in (1, 2, 3, 4)},
                        mobile_users=set(range(10, 30)))
        assoc = simulate_mobility(topo, 3, seed=1)
        assert assoc[0] != assoc[1] or assoc[1] != assoc[2]

    def test_needs_a_window(self):
        topo = Topology(fap_count=1, local_users={1: set()}, mobile_users=set())
        with pytest.raises(ConfigError):
            simulate_mobility(topo, 0, seed=0)


class TestWindows:
    def test_attribution_and_conservation(self):
        users = {u: encode_user_info("F", 25, 1) for u in (1, 2, 9)}
        contents = {1: encode_content_info(["Drama"])}
        reqs = [RequestRecord(1, 1, 3, t) for t in (1, 2)]
        reqs += [RequestRecord(2, 1, 3, 3), RequestRecord(9, 1, 3, 4)]
        test = Dataset(requests=reqs, users=users, contents=contents)
        topo = Topology(fap_count=2, local_users={1: {1}, 2: {2}},
                        mobile_users={9})
        associations = [{1: {9}, 2: set()}, {1: set(), 2: {9}}]
        wins = build_windows(test, topo, associations)
        assert len(wins) == 2
        total = sum(len(rs) for w in wins for rs in w.fap_requests.values())
        assert total == len(reqs)
        # chronological: window 0 gets the two earliest
        assert [r.timestamp for r in wins[0].fap_requests[1]] == [1, 2]
        # the mobile's request (t=4) lands in window 1, at its visited point 2
        assert [r.user_id for r in wins[1].fap_requests[2]] == [2, 9]

    def test_unknown_requester_rejected(self):
        users = {1: encode_user_info("F", 25, 1)}
        contents = {1: encode_content_info(["Drama"])}
        test = Dataset(requests=[RequestRecord(1, 1, 3, 0)], users=users,
                       contents=contents)
        topo = Topology(fap_count=1, local_users={1: set()}, mobile_users=set())
        with pytest.raises(ValidationError, match="unknown user"):
            build_windows(test, topo, [{1: set()}])


class TestBaselineRanks:
    HISTORY = [RequestRecord(1, 5, 3, 1), RequestRecord(1, 5, 3, 2),
               RequestRecord(1, 7, 3, 3), RequestRecord(1, 9, 3, 4),
               RequestRecord(1, 7, 3, 5)]

    def test_lfu_counts_with_tie_to_lower_id(self):
        assert lfu_policy(self.HISTORY, 2) == {5, 7}
        assert lfu_policy(self.HISTORY, 3) == {5, 7, 9}
        history = self.HISTORY + [RequestRecord(1, 9, 3, 6)]
        # 5 and 7 and 9 all have two requests; lower ids win
        assert lfu_policy(history, 2) == {5, 7}

    def test_lru_latest_timestamp(self):
        assert lru_policy(self.HISTORY, 1) == {7}   # last touched at t=5
        assert lru_policy(self.HISTORY, 2) == {7, 9}

    def test_lru_tie_to_lower_id(self):
        history = [RequestRecord(1, 8, 3, 1), RequestRecord(1, 2, 3, 1)]
        assert lru_policy(history, 1) == {2}

    def test_capacity_handling(self):
        assert lfu_policy(self.HISTORY, 0) == set()
        assert lfu_policy(self.HISTORY, 99) == {5, 7, 9}
        with pytest.raises(ValidationError):
            lfu_policy(self.HISTORY, -1)
        with pytest.raises(ValidationError):
            lru_policy(self.HISTORY, -1)


class TestMicroReplay:
    def test_lfu_hand_computed(self):
        dataset, topo, config = micro_corpus()
        prepared = prepare_policy("lfu", dataset, topo, config)
        assert prepared.test_request_count == 2
        result = replay(prepared, 1, "total")
        # window 0 cache {1} (counts c1:3,c2:3, tie->1): request c3 misses;
        # window 1 history adds c3, cache stays {1}: request c1 hits
        assert result.total_requests == 2
        assert result.total_hits == 1
        assert result.aggregate_hit_rate == 0.5

    def test_lru_hand_computed(self):
        dataset, topo, config = micro_corpus()
        prepared = prepare_policy("lru", dataset, topo, config)
        result = replay(prepared, 1, "total")
        # window 0 cache {1} (both touched at t=3, tie->1): c3 misses;
        # window 1: c3 now latest (t=10), cache {3}: request c1 misses
        assert result.total_hits == 0

    def test_warm_start_uses_training_history(self):
        dataset, topo, config = micro_corpus()
        prepared = prepare_policy("lfu", dataset, topo, config)
        # window-0 ranking exists before any test request is seen
        assert prepared.ranked[(1, 0)].tolist() == [1, 2]
        assert prepared.ranked[(1, 1)].tolist() == [1, 2, 3]


@pytest.fixture(scope="module")
def prepared_lfu(tiny_corpus):
    dataset, topology, _planted, config = tiny_corpus
    return prepare_policy("lfu", dataset, topology, config)


class TestPreparedReplay:
    def test_conservation_every_request_counted_once(self, prepared_lfu):
        result = replay(prepared_lfu, 30, "total")
        assert result.total_requests == prepared_lfu.test_request_count

    def test_monotone_in_capacity(self, prepared_lfu):
        rates = [replay(prepared_lfu, c, "total").aggregate_hit_rate
                 for c in range(15, 165, 15)]
        assert all(b >= a - 1e-15 for a, b in zip(rates, rates[1:]))

    def test_scope_equivalence(self, prepared_lfu):
        total = replay(prepared_lfu, 30, "total")
        per_fap = replay(prepared_lfu, 10, "per-fap")
        assert total.cells == per_fap.cells

    def test_sweep_matches_individual_replays(self, tiny_corpus):
        dataset, topology, _planted, config = tiny_corpus
        caps = (15, 45, 90)
        swept = sweep_policy("lru", dataset, topology, config, caps)
        for cap, res in zip(caps, swept):
            assert res.capacity == cap
            single = replay(prepare_policy("lru", dataset, topology, config),
                            cap, config.capacity_scope)
            assert res.cells == single.cells

    def test_unknown_policy(self, tiny_corpus):
        dataset, topology, _planted, config = tiny_corpus
        with pytest.raises(ConfigError, match="unknown policy"):
            prepare_policy("belady", dataset, topology, config)


class TestModelPolicies:
    def test_dcnn_lc_runs_and_conserves(self, tiny_corpus):
        dataset, topology, _planted, config = tiny_corpus
        prepared = prepare_policy("dcnn-lc", dataset, topology, config)
        assert set(prepared.federation) == set(prepared.fap_ids)
        result = replay(prepared, 30, "total")
        assert result.total_requests == prepared.test_request_count
        rates = [replay(prepared, c, "total").aggregate_hit_rate
                 for c in (15, 30, 60, 120)]
        assert all(b >= a - 1e-15 for a, b in zip(rates, rates[1:]))
        assert prepared.tables, "popularity tables should be recorded"

    def test_deterministic_results_csv(self, tiny_corpus):
        dataset, topology, _planted, config = tiny_corpus
        def once():
            res = sweep_policy("dcnn-lc", dataset, topology, config, (30, 60))
            return results_csv(res)
        assert once() == once()

    def test_inactive_point_gets_empty_ranking(self):
        users = {1: encode_user_info("F", 25, 1), 2: encode_user_info("M", 35, 2),
                 3: encode_user_info("F", 45, 3)}
        contents = {c: encode_content_info([g]) for c, g in
                    zip((1, 2, 3), ("Comedy", "Action", "Drama"))}
        reqs = [RequestRecord(1, 1, 4, t) for t in range(1, 5)]
        reqs += [RequestRecord(2, 2, 4, t) for t in range(1, 5)]
        # user 3 never requests anything, so point 2 has no training data
        dataset = Dataset(requests=reqs, users=users, contents=contents)
        topo = Topology(fap_count=2, local_users={1: {1, 2}, 2: {3}},
                        mobile_users=set())
        config = ExperimentConfig(synthetic="", dataset_dir="x", fap_count=2,
                                  windows=2, mobile_ratio=0.0, seed=0)
        prepared = prepare_policy("dcnn-lc", dataset, topo, config)
        for w in range(2):
            assert prepared.ranked[(2, w)].size == 0
        result = replay(prepared, 2, "total")
        fap2 = [c for c in result.cells if c.fap == 2]
        assert all(c.requests == 0 and c.hits == 0 for c in fap2)
        assert math.isnan(fap2[0].hit_rate)

    def test_run_policy_is_prepare_plus_replay(self):
        dataset, topo, config = micro_corpus()
        direct = run_policy("lfu", dataset, topo, config)
        via = replay(prepare_policy("lfu", dataset, topo, config),
                     config.capacity, config.capacity_scope)
        assert direct.cells == via.cells


class TestResultsCsv:
    def test_schema_and_nan(self):
        res = PolicyResult(policy="lfu", capacity=10, mobile_ratio=0.25,
                           cells=[ResultCell(fap=1, window=0, hits=3, requests=4),
                                  ResultCell(fap=2, window=0, hits=0, requests=0)])
        text = results_csv([res])
        lines = text.splitlines()
        assert lines[0] == "policy,capacity,mobile_ratio,fap,window,hits,requests,hit_rate"
        assert lines[1] == "lfu,10,0.25,1,0,3,4,0.7500000000"
        assert lines[2] == "lfu,10,0.25,2,0,0,0,nan"

    def test_hit_rate_helper(self):
        assert math.isnan(hit_rate({1}, []))
        reqs = [RequestRecord(1, 1, 3, 0), RequestRecord(1, 2, 3, 1)]
        assert hit_rate({1}, reqs) == 0.5
