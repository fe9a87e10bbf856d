"""
Shared fixtures for all tests.
"""

import os
from pathlib import Path
from typing import Iterator, List

import pytest

from persuasion_iv.constants import ENV_PREFIX
from persuasion_iv.oracle_sim import (
    LatentDGP,
    PopulationMoments,
    dgp1,
    draw_sample,
    population_moments,
)
from persuasion_iv.sample_store import ObservedSample, write_csv


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="Run slow tests."
    )


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: Monte Carlo runs (need --run-slow)")


def pytest_collection_modifyitems(
    config: pytest.Config, items: List[pytest.Item]
) -> None:
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """
    Remove ``PERSUASION_*`` variables of the calling shell.
    """
    for name in list(os.environ):
        if name.startswith(ENV_PREFIX):
            monkeypatch.delenv(name)


@pytest.fixture
def reference_dgp() -> LatentDGP:
    """
    The reference DGP with one binary covariate.
    """
    return dgp1()


@pytest.fixture
def population(reference_dgp: LatentDGP) -> PopulationMoments:
    """
    Exact moments of the reference DGP.
    """
    return population_moments(reference_dgp, n=10_000)


@pytest.fixture
def sample(reference_dgp: LatentDGP) -> ObservedSample:
    """
    A sample of 4000 rows from the reference DGP.
    """
    return draw_sample(reference_dgp, 4000, seed=7)


@pytest.fixture
def sample_csv(sample: ObservedSample, tmp_path: Path) -> Path:
    """
    :func:`sample` written to a CSV file.
    """
    path = tmp_path.joinpath("sample.csv")
    write_csv(sample, path)
    return path


@pytest.fixture
def in_tmp_path(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Iterator[Path]:
    """
    Make *tmp_path* the cwd and stop config file searches there.
    """
    tmp_path.joinpath(".git").mkdir()
    monkeypatch.chdir(tmp_path)
    yield tmp_path
