"""Tests for the experiment runner"""

import json

import pandas as pd
import pytest

from experiment import RUN_COLUMNS, ExperimentRunner
from models import BoundReport, GeneratorSpec, Scenario, ScenarioError, SimConfig, Variant
from scenarios import BUILTIN_SCENARIOS, parse_scenario
from simulator import derive_seed
from tests.fixtures.sample_streams import SCENARIO_TOML


class TestSweep:
    """Test cases for sweep expansion and per-point configs"""

    def test_sweep_points_order(self, test_config):
        """Test the k, s, n, r cross product order and indices"""
        scenario = Scenario(name="grid", sim=SimConfig(k=2, s=1, n=16), sweep={"n": [16, 32], "k": [2, 4]})

        points = ExperimentRunner(test_config).sweep_points(scenario)

        assert [p.values for p in points] == [
            {"k": 2, "n": 16}, {"k": 2, "n": 32}, {"k": 4, "n": 16}, {"k": 4, "n": 32},
        ]
        assert [p.index for p in points] == [0, 1, 2, 3]

    def test_no_sweep_is_one_point(self, test_config):
        """Test that a scenario without axes runs its template once"""
        scenario = Scenario(name="flat", sim=SimConfig(k=2, s=1, n=16))
        assert len(ExperimentRunner(test_config).sweep_points(scenario)) == 1

    def test_r_rule(self, test_config):
        """Test that r follows k when asked to"""
        scenario = BUILTIN_SCENARIOS["figure1-trend"]
        runner = ExperimentRunner(test_config)
        point = runner.sweep_points(scenario)[-1]

        cfg = runner.configure(scenario, point, Variant.B)

        assert cfg.k == 256
        assert cfg.r == 256.0
        assert cfg.n == 2**20


class TestRun:
    """Test cases for running scenarios"""

    def test_tiny_scenario_artifacts(self, test_config, tmp_path):
        """Test rows, reports and files of a small coupled scenario"""
        runner = ExperimentRunner(test_config)

        result = runner.run(parse_scenario(SCENARIO_TOML), out_dir=str(tmp_path))

        assert result.passed
        assert list(result.runs.columns) == RUN_COLUMNS
        assert len(result.runs) == 12
        assert result.runs["run_id"].is_monotonic_increasing
        assert {r.name for r in result.reports} == {"oracle[n=32]", "oracle[n=64]", "coupling[n=32]", "coupling[n=64]"}

        frame = pd.read_csv(tmp_path / "tiny" / "runs.csv")
        assert frame["run_id"].tolist() == result.runs["run_id"].tolist()
        payload = json.loads((tmp_path / "tiny" / "reports.json").read_text())
        assert payload["passed"] is True
        assert {"name", "theoretical", "empirical_mean", "ratio", "pass"} <= set(payload["reports"][0])

    def test_rows_are_reproducible(self, test_config, tmp_path):
        """Test that rerunning byte-reproduces runs.csv"""
        runner = ExperimentRunner(test_config)
        scenario = parse_scenario(SCENARIO_TOML)

        runner.run(scenario, out_dir=str(tmp_path / "a"))
        runner.run(scenario, out_dir=str(tmp_path / "b"))

        assert (tmp_path / "a" / "tiny" / "runs.csv").read_bytes() == (tmp_path / "b" / "tiny" / "runs.csv").read_bytes()

    def test_seeds_follow_sweep_and_trial(self, test_config):
        """Test that each row's seed is derive_seed(scenario seed, sweep index, trial index)"""
        result = ExperimentRunner(test_config).run(parse_scenario(SCENARIO_TOML), write=False)

        row = result.runs[result.runs["run_id"] == "tiny-p001-t000002-B"].iloc[0]
        assert row["seed"] == derive_seed(7, 1, 2)

    def test_overrides_and_no_checks(self, test_config):
        """Test trial and seed overrides with checks disabled"""
        result = ExperimentRunner(test_config).run(
            BUILTIN_SCENARIOS["smoke"], write=False, run_checks=False, trials=2, seed=3,
        )

        assert len(result.runs) == 4
        assert result.reports == []
        assert result.passed
        assert result.artifacts == {}

    def test_smoke_passes(self, test_config):
        """Test the smoke scenario at reduced trial count"""
        result = ExperimentRunner(test_config).run(BUILTIN_SCENARIOS["smoke"], write=False, trials=10)
        assert result.passed

    def test_coupling_needs_both_variants(self, test_config):
        """Test that a coupling check without A and B is a scenario error"""
        scenario = Scenario(name="half", sim=SimConfig(k=2, s=1, n=16), checks=["coupling"])
        with pytest.raises(ScenarioError):
            ExperimentRunner(test_config).run(scenario, write=False)

    def test_runner_cap(self, test_config):
        """Test that the configured run cap applies"""
        test_config.MAX_RUNS = 5
        with pytest.raises(ScenarioError):
            ExperimentRunner(test_config).run(parse_scenario(SCENARIO_TOML), write=False)

    def test_heavy_hitter_scenario(self, test_config):
        """Test the heavy-hitter path at reduced scale"""
        scenario = Scenario(
            name="hh",
            sim=SimConfig(k=4, s=1, n=2000, generator=GeneratorSpec(kind="uniform_random")),
            trials=5,
            params={"epsilon": 0.1, "planted": {"heavy": 0.12, "rare": 0.04}},
            checks=["heavy-hitters"],
        )

        result = ExperimentRunner(test_config).run(scenario, write=False)

        assert result.passed
        assert result.reports[0].empirical_mean == 1.0
        assert len(result.runs) == 5

    def test_failed_check_is_reported(self, test_config, mocker):
        """Test that a failing check marks the result failed and is logged"""
        mocker.patch(
            "experiment.coupling_check",
            side_effect=lambda pairs: BoundReport(
                name="coupling", theoretical=2.0, empirical_mean=3.0, ratio=1.5, passed=False,
            ),
        )
        scenario = parse_scenario(SCENARIO_TOML)

        result = ExperimentRunner(test_config).run(scenario, write=False)

        assert not result.passed

    def test_oracle_mismatch_recorded_per_run(self, test_config, mocker):
        """Test that a mismatch shows in the run rows and fails the oracle report"""
        from protocol_wor import Reply
        from sampling_core import THRESHOLD_ONE

        mocker.patch(
            "simulator.coord_on_upstream",
            side_effect=lambda coord, msg: (coord, Reply(site=msg.site, threshold=THRESHOLD_ONE)),
        )
        scenario = Scenario(name="broken", sim=SimConfig(k=2, s=1, n=16), trials=2, checks=["oracle"])

        result = ExperimentRunner(test_config).run(scenario, write=False)

        assert not result.passed
        assert not result.runs["oracle_ok"].any()
        assert result.reports[0].empirical_mean == 0
        assert "first failure" in result.reports[0].detail

    def test_runner_settings_reach_simulator(self, test_config):
        """Test that the runner's Config decides the oracle cadence"""
        test_config.ORACLE_EVERY_ROUND_MAX_N = 1
        scenario = Scenario(name="cadence", sim=SimConfig(k=4, s=2, n=256), trials=2, checks=["oracle"])

        result = ExperimentRunner(test_config).run(scenario, write=False)

        assert result.passed
        assert result.reports[0].detail == "2 rounds checked"

    def test_summary(self, test_config):
        """Test the summary handed to the run store"""
        result = ExperimentRunner(test_config).run(parse_scenario(SCENARIO_TOML), write=False)

        summary = result.to_summary("tiny_1")

        assert summary.run_id == "tiny_1"
        assert summary.runs == 12
        assert summary.passed
