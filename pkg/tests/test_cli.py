"""Command-line sweep driver: outputs, reproducibility, failure handling."""

from __future__ import annotations

import numpy as np
import pytest

from fogcache import cli
from fogcache.cache_sim import results_csv
from fogcache.config import (ExperimentConfig, parse_kv_text, resolve_config)

RATINGS = "1::10::5::100\n2::10::3::90\n1::20::4::200\n2::20::2::300\n"
USERS = "1::F::25::4::55117\n2::M::56::16::70072\n"
MOVIES = "10::Some Film (1999)::Comedy|Romance\n20::Other Film (1994)::Action\n"


def tiny_args(out_dir, extra=()):
    return ["run",
            "--synthetic", "users=60,contents=80,clusters=1,requests=10",
            "--faps", "2", "--policies", "lfu,lru",
            "--capacities", "10,20", "--mobile-ratios", "0,0.25",
            "--windows", "2", "--out", str(out_dir), *extra]


class TestRunCommand:
    def test_writes_all_outputs(self, tmp_path, capsys):
        assert cli.main(tiny_args(tmp_path / "out")) == 0
        out = tmp_path / "out"
        for name in ("manifest.txt", "results.csv", "summary.txt",
                     "fig2.dat", "fig3.dat"):
            assert (out / name).exists(), name
        lines = (out / "results.csv").read_text().splitlines()
        # header + ratios(2) x policies(2) x caps(2) x faps(2) x windows(2)
        assert len(lines) == 1 + 2 * 2 * 2 * 2 * 2
        assert capsys.readouterr().out.startswith("policy")

    def test_manifest_reproduces_run(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(tiny_args(out)) == 0
        config = resolve_config(parse_kv_text((out / "manifest.txt").read_text()))
        results, failures = cli.run_experiment(config)
        assert not failures
        assert results_csv(results) == (out / "results.csv").read_text()

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        assert cli.main(tiny_args(tmp_path / "a")) == 0
        assert cli.main(tiny_args(tmp_path / "b")) == 0
        assert (tmp_path / "a" / "results.csv").read_text() == \
            (tmp_path / "b" / "results.csv").read_text()

    def test_dataset_directory_path(self, tmp_path, capsys):
        data = tmp_path / "ml"
        data.mkdir()
        (data / "ratings.dat").write_text(RATINGS)
        (data / "users.dat").write_text(USERS)
        (data / "movies.dat").write_text(MOVIES)
        code = cli.main(["run", "--dataset", str(data), "--synthetic", "",
                         "--faps", "1", "--policies", "lfu",
                         "--capacities", "1", "--mobile-ratios", "0",
                         "--windows", "1", "--subset-users", "2",
                         "--subset-contents", "2",
                         "--out", str(tmp_path / "out")])
        assert code == 0
        text = (tmp_path / "out" / "results.csv").read_text()
        assert text.splitlines()[0].startswith("policy,")

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("synthetic = users=60,contents=80,clusters=1,requests=10\n"
                       "fap_count = 2\npolicies = lfu\ncapacities = 10\n"
                       "mobile_ratios = 0\nwindows = 2\nseed = 3\n")
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(cfg), "--seed", "9",
                         "--out", str(out)]) == 0
        manifest = parse_kv_text((out / "manifest.txt").read_text())
        assert manifest["seed"] == "9"          # flag beat the file
        assert manifest["fap_count"] == "2"     # file survived

    def test_bad_config_path_exits_2(self, tmp_path, capsys):
        assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("velocity = 3\n")
        assert cli.main(["run", "--config", str(cfg)]) == 2

    def test_all_cells_failing_exits_1(self, tmp_path, capsys):
        code = cli.main(["run", "--synthetic",
                         "users=10,contents=5,clusters=1,requests=9",
                         "--faps", "1", "--policies", "lfu",
                         "--capacities", "1", "--mobile-ratios", "0",
                         "--out", str(tmp_path / "out")])
        assert code == 1
        err = capsys.readouterr().err
        assert "corpus construction failed" in err


class TestRunExperiment:
    CONFIG = ExperimentConfig(
        synthetic="users=60,contents=80,clusters=1,requests=10",
        fap_count=2, policies=("lfu", "lru"), capacities=(10, 20),
        mobile_ratios=(0.0, 0.25), windows=2, seed=0)

    def test_worker_count_does_not_change_results(self):
        serial, f1 = cli.run_experiment(self.CONFIG, workers=1)
        pooled, f2 = cli.run_experiment(self.CONFIG, workers=4)
        assert not f1 and not f2
        assert results_csv(serial) == results_csv(pooled)

    def test_results_in_sweep_order(self):
        results, _ = cli.run_experiment(self.CONFIG, workers=3)
        keys = [(r.mobile_ratio, r.policy, r.capacity) for r in results]
        expect = [(ratio, policy, cap)
                  for ratio in (0.0, 0.25) for policy in ("lfu", "lru")
                  for cap in (10, 20)]
        assert keys == expect

    def test_failing_cell_skipped(self, monkeypatch):
        real = cli.prepare_policy

        def flaky(policy_id, dataset, topology, config):
            if policy_id == "lru":
                raise RuntimeError("boom")
            return real(policy_id, dataset, topology, config)

        monkeypatch.setattr(cli, "prepare_policy", flaky)
        results, failures = cli.run_experiment(self.CONFIG, workers=2)
        assert len(failures) == 2          # lru failed at both ratios
        assert all("policy=lru" in f and "boom" in f for f in failures)
        assert {r.policy for r in results} == {"lfu"}
        assert len(results) == 4           # 2 ratios x 2 capacities


class TestSummarize:
    def _csv(self):
        return ("policy,capacity,mobile_ratio,fap,window,hits,requests,hit_rate\n"
                "lfu,10,0,1,0,1,4,0.2500000000\n"
                "lfu,20,0,1,0,2,4,0.5000000000\n"
                "lru,10,0,1,0,0,4,0.0000000000\n"
                "lru,20,0,1,0,1,4,0.2500000000\n"
                "lfu,10,0.5,1,0,2,4,0.5000000000\n"
                "lfu,20,0.5,1,0,3,4,0.7500000000\n"
                "lru,10,0.5,1,0,1,4,0.2500000000\n"
                "lru,20,0.5,1,0,2,4,0.5000000000\n")

    def test_series_contents(self):
        fig2, fig3 = cli.summarize(self._csv())
        assert fig2.splitlines()[0] == "# x lfu lru"
        # fig2 at default ratio 0 (0.25 absent): capacity axis
        assert fig2.splitlines()[1].split() == ["10", "0.250000", "0.000000"]
        assert fig2.splitlines()[2].split() == ["20", "0.500000", "0.250000"]
        # fig3 at default capacity 20 (600 absent -> largest): ratio axis
        assert fig3.splitlines()[1].split() == ["0", "0.500000", "0.250000"]
        assert fig3.splitlines()[2].split() == ["0.5", "0.750000", "0.500000"]

    def test_explicit_slice_selection(self):
        fig2, fig3 = cli.summarize(self._csv(), fig2_ratio=0.5, fig3_capacity=10)
        assert fig2.splitlines()[1].split() == ["10", "0.500000", "0.250000"]
        assert fig3.splitlines()[1].split() == ["0", "0.250000", "0.000000"]

    def test_empty_csv_warns(self, capsys):
        fig2, fig3 = cli.summarize("policy,capacity,mobile_ratio,fap,window,hits,requests,hit_rate\n")
        assert fig2 == "# x\n" and fig3 == "# x\n"
        assert "empty results" in capsys.readouterr().err

    def test_summarize_command_round_trip(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(tiny_args(out)) == 0
        redone = tmp_path / "redone"
        assert cli.main(["summarize", str(out / "results.csv"),
                         "--out", str(redone)]) == 0
        assert (redone / "fig2.dat").read_text() == (out / "fig2.dat").read_text()
        assert (redone / "fig3.dat").read_text() == (out / "fig3.dat").read_text()
