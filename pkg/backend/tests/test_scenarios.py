"""Tests for builtin scenarios and the scenario-file loader"""

import re

import pytest

from models import Scenario, ScenarioError, Variant
from scenarios import BUILTIN_SCENARIOS, list_scenarios, load_scenario, parse_scenario
from tests.fixtures.sample_streams import (
    SCENARIO_BAD_SECTION,
    SCENARIO_BAD_SYNTAX,
    SCENARIO_BAD_TRIALS,
    SCENARIO_MISSPELT_HEADER,
    SCENARIO_MISSPELT_KEYS,
    SCENARIO_TOML,
    SCENARIO_UNKNOWN_CHECK,
)

EXPECTED_BUILTINS = [
    "smoke", "uniformity", "epochs", "bounds-wor",
    "bounds-wr", "figure1-trend", "heavy-hitters", "adversarial-lb",
]


class TestBuiltins:
    """Test cases for the builtin scenario table"""

    def test_list_names(self):
        """Test the eight builtin names in order"""
        assert [name for name, _ in list_scenarios()] == EXPECTED_BUILTINS

    def test_names_are_kebab_case(self):
        """Test that names are stable kebab-case identifiers"""
        for name, _ in list_scenarios():
            assert re.fullmatch(r"[a-z0-9]+(-[a-z0-9]+)*", name)

    def test_each_name_maps_to_one_scenario(self):
        """Test that every listed name resolves to a scenario of that name"""
        for name, description in list_scenarios():
            scenario = load_scenario(name)
            assert isinstance(scenario, Scenario)
            assert scenario.name == name
            assert description

    def test_smoke_shape(self):
        """Test the smoke scenario parameters"""
        smoke = BUILTIN_SCENARIOS["smoke"]

        assert (smoke.sim.k, smoke.sim.s, smoke.sim.n, smoke.trials) == (4, 2, 256, 100)
        assert smoke.variants == [Variant.A, Variant.B]
        assert smoke.checks == ["oracle", "coupling"]

    def test_figure1_grid(self):
        """Test that figure1-trend sweeps k and n with r tied to k"""
        scenario = BUILTIN_SCENARIOS["figure1-trend"]
        assert scenario.sweep_size() == 9
        assert scenario.params["r_rule"] == "k"


class TestParseScenario:
    """Test cases for TOML scenario files"""

    def test_valid_file(self):
        """Test that every section lands in the model"""
        scenario = parse_scenario(SCENARIO_TOML)

        assert scenario.name == "tiny"
        assert scenario.trials == 3
        assert scenario.seed == 7
        assert scenario.variants == [Variant.A, Variant.B]
        assert scenario.sim.k == 3
        assert scenario.sim.generator.kind == "round_robin"
        assert scenario.sweep == {"n": [32, 64]}
        assert scenario.checks == ["oracle", "coupling"]
        assert scenario.run_count() == 12

    def test_validation_error_names_line(self):
        """Test that a bad value is reported with its line"""
        with pytest.raises(ScenarioError) as excinfo:
            parse_scenario(SCENARIO_BAD_TRIALS, source="bad.toml")

        assert excinfo.value.line == 4
        assert str(excinfo.value).startswith("line 4: bad.toml")

    def test_syntax_error_names_line(self):
        """Test that TOML syntax errors carry the parser's line"""
        with pytest.raises(ScenarioError) as excinfo:
            parse_scenario(SCENARIO_BAD_SYNTAX)
        assert excinfo.value.line == 3

    def test_unknown_check(self):
        """Test that check names are validated"""
        with pytest.raises(ScenarioError) as excinfo:
            parse_scenario(SCENARIO_UNKNOWN_CHECK)
        assert "telepathy" in str(excinfo.value)
        assert excinfo.value.line == 7

    def test_misspelt_sim_key(self):
        """Test that an unknown sim key is refused instead of ignored"""
        with pytest.raises(ScenarioError) as excinfo:
            parse_scenario(SCENARIO_MISSPELT_KEYS)
        assert "oracle_check" in str(excinfo.value)
        assert excinfo.value.line == 5

    def test_misspelt_scenario_key(self):
        """Test that an unknown scenario key is refused with its line"""
        with pytest.raises(ScenarioError) as excinfo:
            parse_scenario(SCENARIO_MISSPELT_HEADER)
        assert "trails" in str(excinfo.value)
        assert excinfo.value.line == 3

    def test_unknown_section(self):
        """Test that stray sections are refused with their line"""
        with pytest.raises(ScenarioError) as excinfo:
            parse_scenario(SCENARIO_BAD_SECTION)
        assert excinfo.value.line == 6

    def test_missing_sim_section(self):
        """Test that [sim] is required"""
        with pytest.raises(ScenarioError):
            parse_scenario('[scenario]\nname = "x"\n')

    def test_run_cap(self):
        """Test that oversized sweeps are refused"""
        text = SCENARIO_TOML.replace("trials = 3", "trials = 1000000")
        with pytest.raises(ScenarioError):
            parse_scenario(text)


class TestLoadScenario:
    """Test cases for name-or-path resolution"""

    def test_load_from_path(self, scenario_file):
        """Test that a file path is parsed"""
        assert load_scenario(str(scenario_file)).name == "tiny"

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a scenario error"""
        with pytest.raises(ScenarioError):
            load_scenario(str(tmp_path / "nope.toml"))
