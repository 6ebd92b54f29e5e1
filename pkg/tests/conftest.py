"""Shared fixtures and the acceptance-criterion reporting hook."""

from __future__ import annotations

import pytest

from fogcache.config import ExperimentConfig
from fogcache.dataset import synthesize_dataset

_CRITERION_LINES: list[tuple[int, str]] = []


@pytest.fixture
def criterion_report():
    """Record one summary line for an acceptance criterion.

    Usage: ``criterion_report(3, "PASS", "recovery 5/5 + 5/5, 41s")``. The
    lines are echoed after the test session so each criterion shows exactly
    one pass/fail line regardless of output capture.
    """

    def record(number: int, status: str, detail: str) -> None:
        _CRITERION_LINES.append((number, f"criterion {number:2d} [{status}] {detail}"))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _n, line in sorted(_CRITERION_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_corpus():
    """A 6-point, 2-cluster corpus big enough to behave, small enough to be quick."""
    dataset, topology, planted = synthesize_dataset(
        user_count=600, content_count=600, fap_count=6, cluster_count=2,
        seed=7, requests_per_user=48, mobile_ratio=0.25,
    )
    config = ExperimentConfig(synthetic="", dataset_dir="unused", fap_count=6,
                              mobile_ratio=0.25, seed=7)
    return dataset, topology, planted, config


@pytest.fixture(scope="session")
def tiny_corpus():
    """A minimal corpus for interface-level tests (seconds, not minutes)."""
    dataset, topology, planted = synthesize_dataset(
        user_count=120, content_count=150, fap_count=3, cluster_count=1,
        seed=3, requests_per_user=16, mobile_ratio=0.25,
    )
    config = ExperimentConfig(synthetic="", dataset_dir="unused", fap_count=3,
                              mobile_ratio=0.25, seed=3, windows=4)
    return dataset, topology, planted, config
