"""Experiment sweep command line.

``fogcache run`` sweeps (mobile ratio x policy x capacity) on a MovieLens
directory or a synthetic corpus, writing a results CSV, a run manifest, a
readable summary, and gnuplot-style series files. ``fogcache summarize``
rebuilds the series files from an existing results CSV. A failing sweep
cell is reported and skipped; the rest of the sweep continues.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .cache_sim import prepare_policy, replay, results_csv
from .config import (ExperimentConfig, parse_kv_text, parse_synthetic_spec,
                     render_manifest, resolve_config)
from .dataset import build_topology, load_movielens, synthesize_dataset, top_subset
from .errors import FogcacheError


def _corpus(config: ExperimentConfig, mobile_ratio: float):
    """(dataset, topology) for one sweep ratio; requests do not depend on it."""
    if config.dataset_dir:
        dataset = load_movielens(config.dataset_dir)
        if config.subset_users or config.subset_contents:
            dataset = top_subset(
                dataset,
                config.subset_users or len(dataset.users),
                config.subset_contents or len(dataset.contents),
            )
        topology = build_topology(dataset, config.fap_count, mobile_ratio,
                                  config.skew_mode, config.seed)
        return dataset, topology
    spec = parse_synthetic_spec(config.synthetic)
    dataset, topology, _planted = synthesize_dataset(
        user_count=spec["users"], content_count=spec["contents"],
        fap_count=config.fap_count, cluster_count=spec["clusters"],
        seed=config.seed, requests_per_user=spec["requests"],
        mobile_ratio=mobile_ratio,
    )
    return dataset, topology


def run_experiment(config: ExperimentConfig, workers: int | None = None):
    """Execute the sweep; returns (results, failures).

    A (mobile ratio, policy) pair is one independent job; a bounded thread
    pool runs them and the results are collected in deterministic sweep
    order regardless of scheduling, so output files do not depend on the
    worker count.
    """
    cells: list[tuple[float, str]] = []
    corpora: dict[float, tuple] = {}
    failures: list[str] = []
    for ratio in config.mobile_ratios:
        try:
            corpora[float(ratio)] = _corpus(config, float(ratio))
        except Exception as e:  # corpus failure kills every cell of this ratio
            failures.append(f"ratio={ratio:g}: corpus construction failed: {e}")
            continue
        cells.extend((float(ratio), policy) for policy in config.policies)

    def run_cell(cell):
        ratio, policy = cell
        dataset, topology = corpora[ratio]
        cell_cfg = replace(config, mobile_ratio=ratio)
        prepared = prepare_policy(policy, dataset, topology, cell_cfg)
        return [replay(prepared, int(cap), config.capacity_scope)
                for cap in config.capacities]

    if workers is None:
        workers = min(4, os.cpu_count() or 1, max(1, len(cells)))
    results = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [(cell, pool.submit(run_cell, cell)) for cell in cells]
        for (ratio, policy), fut in futures:
            try:
                results.extend(fut.result())
            except Exception as e:
                failures.append(f"policy={policy} ratio={ratio:g}: {e}")
    return results, failures


def summary_table(results) -> str:
    """Readable per-cell aggregate table."""
    lines = [f"{'policy':<10} {'ratio':>6} {'capacity':>8} {'hit_rate':>9} "
             f"{'hits':>8} {'requests':>9}"]
    for res in results:
        rate = f"{res.aggregate_hit_rate:.4f}" if res.total_requests else "nan"
        lines.append(
            f"{res.policy:<10} {res.mobile_ratio:>6g} {res.capacity:>8d} "
            f"{rate:>9} {res.total_hits:>8d} {res.total_requests:>9d}"
        )
    return "\n".join(lines) + "\n"


def _aggregate_rows(csv_text: str):
    """results CSV -> {(policy, capacity, ratio): (hits, requests)}, key orders."""
    lines = [ln for ln in csv_text.splitlines() if ln.strip()]
    agg: dict[tuple[str, int, float], list[int]] = {}
    policies: list[str] = []
    for ln in lines[1:]:
        policy, cap, ratio, _fap, _win, hits, reqs, _rate = ln.split(",")
        key = (policy, int(cap), float(ratio))
        cell = agg.setdefault(key, [0, 0])
        cell[0] += int(hits)
        cell[1] += int(reqs)
        if policy not in policies:
            policies.append(policy)
    return agg, policies


def _series_file(agg, policies, axis_values, fixed_pick, axis_of_key, fixed_of_key) -> str:
    lines = ["# " + " ".join(["x"] + policies)]
    for x in axis_values:
        row = [f"{x:g}"]
        for p in policies:
            hits_reqs = None
            for key, cell in agg.items():
                if key[0] == p and axis_of_key(key) == x and fixed_of_key(key) == fixed_pick:
                    hits_reqs = cell
                    break
            if hits_reqs and hits_reqs[1]:
                row.append(f"{hits_reqs[0] / hits_reqs[1]:.6f}")
            else:
                row.append("nan")
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def summarize(csv_text: str, fig2_ratio: float | None = None,
              fig3_capacity: int | None = None) -> tuple[str, str]:
    """Figure series from a results CSV.

    fig2: hit rate vs capacity at one mobile ratio (default 0.25 when
    present). fig3: hit rate vs mobile ratio at one capacity (default 600
    when present, else the largest). Values are request-weighted aggregates.
    """
    agg, policies = _aggregate_rows(csv_text)
    if not agg:
        print("warning: empty results CSV, emitting empty series", file=sys.stderr)
        return "# x\n", "# x\n"
    capacities = sorted({k[1] for k in agg})
    ratios = sorted({k[2] for k in agg})
    if fig2_ratio is None:
        fig2_ratio = 0.25 if 0.25 in ratios else ratios[0]
    if fig3_capacity is None:
        fig3_capacity = 600 if 600 in capacities else capacities[-1]
    fig2 = _series_file(agg, policies, capacities, float(fig2_ratio),
                        lambda k: k[1], lambda k: k[2])
    fig3 = _series_file(agg, policies, ratios, int(fig3_capacity),
                        lambda k: k[2], lambda k: k[1])
    return fig2, fig3


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    flag_to_key = {
        "--dataset": "dataset_dir", "--synthetic": "synthetic",
        "--faps": "fap_count", "--neighbors": "neighbor_count",
        "--self-weight": "self_weight", "--policies": "policies",
        "--capacities": "capacities", "--mobile-ratios": "mobile_ratios",
        "--capacity-scope": "capacity_scope", "--seed": "seed",
        "--out": "out_dir", "--eps1": "stop_eps", "--eps2": "split_eps",
        "--windows": "windows", "--train-fraction": "train_fraction",
        "--skew": "skew_mode", "--subset-users": "subset_users",
        "--subset-contents": "subset_contents", "--max-rounds": "max_rounds",
    }
    for flag, key in flag_to_key.items():
        parser.add_argument(flag, dest=key, default=None, metavar=key.upper())


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    skip = {"command", "config", "results", "fig2_ratio", "fig3_capacity"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fogcache",
        description="Popularity-driven edge-cache simulation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a policy/capacity/ratio sweep")
    _add_run_flags(run_p)

    sum_p = sub.add_parser("summarize", help="rebuild figure series from a results CSV")
    sum_p.add_argument("results", help="path to results.csv")
    sum_p.add_argument("--out", dest="out_dir", default=None)
    sum_p.add_argument("--fig2-ratio", dest="fig2_ratio", type=float, default=None)
    sum_p.add_argument("--fig3-capacity", dest="fig3_capacity", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "summarize":
            csv_path = Path(args.results)
            out_dir = Path(args.out_dir) if args.out_dir else csv_path.parent
            out_dir.mkdir(parents=True, exist_ok=True)
            fig2, fig3 = summarize(csv_path.read_text(),
                                   args.fig2_ratio, args.fig3_capacity)
            (out_dir / "fig2.dat").write_text(fig2)
            (out_dir / "fig3.dat").write_text(fig3)
            return 0

        file_values = parse_kv_text(Path(args.config).read_text()) if args.config else {}
        config = resolve_config(file_values, _collect_overrides(args))
    except (FogcacheError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.txt").write_text(render_manifest(config))

    results, failures = run_experiment(config)
    for f in failures:
        print(f"warning: sweep cell failed: {f}", file=sys.stderr)
    if not results:
        print("error: every sweep cell failed", file=sys.stderr)
        return 1

    (out_dir / "results.csv").write_text(results_csv(results))
    (out_dir / "summary.txt").write_text(summary_table(results))
    fig2, fig3 = summarize((out_dir / "results.csv").read_text())
    (out_dir / "fig2.dat").write_text(fig2)
    (out_dir / "fig3.dat").write_text(fig3)
    print(summary_table(results), end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
