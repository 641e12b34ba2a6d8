"""Pytest configuration and fixtures for the sampling tests"""

import os
import sys

import pytest

# Add backend directory to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from config import Config
from models import GeneratorSpec, SimConfig, Variant
from tests.fixtures.sample_streams import SCENARIO_TOML, SMALL_GRID


@pytest.fixture
def test_config(tmp_path):
    """Config with artifacts under a temporary directory and a small scan window"""
    return Config(
        DEFAULT_SEED=7,
        OUT_DIR=str(tmp_path / "results"),
        SCAN_BLOCK=64,
        WORKERS=1,
        MAX_STORED_RUNS=3,
        LOG_LEVEL="WARNING",
    )


@pytest.fixture
def small_sim_config():
    """A small variant-A config checked against the oracle every round"""
    return SimConfig(k=4, s=2, n=256, variant=Variant.A, seed=11, oracle_checks="every-round")


@pytest.fixture
def variant_b_config():
    """A variant-B config long enough to cross several epochs"""
    return SimConfig(
        k=4, s=3, n=4096, variant=Variant.B, r=2.0, seed=5,
        generator=GeneratorSpec(kind="uniform_random"),
    )


@pytest.fixture
def small_grid():
    """(k, s, n) triples small enough for every-round oracle checks"""
    return SMALL_GRID


@pytest.fixture
def scenario_file(tmp_path):
    """A valid scenario file on disk"""
    path = tmp_path / "tiny.toml"
    path.write_text(SCENARIO_TOML, encoding="utf-8")
    return path
