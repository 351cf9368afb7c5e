"""Scenario loading, validation and CLI overrides."""

import copy
import json

import numpy as np
import pytest
from conftest import SCENARIOS
from config import dumps, load_scenario, parse_scenario
from const import CheckName, Tolerances
from errors import ConfigError
from generators import Bump
from paths import Ctmc

MINIMAL = {
    "schema": 1,
    "name": "minimal",
    "process": {"kind": "brownian"},
    "coefficient": {"H": {"kind": "constant", "value": 1.0}, "t0": 1.0},
    "monte_carlo": {"N": 100},
}


def doc(**changes):
    data = copy.deepcopy(MINIMAL)
    data.update(changes)
    return data


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.json")), ids=lambda p: p.stem)
def test_bundled_scenarios_parse(path):
    scenario = load_scenario(path)
    assert scenario.name == path.stem
    assert scenario.monte_carlo.N >= 100
    assert scenario.tgrid[0] == 0.0 and scenario.tgrid[-1] <= scenario.model.t0


def test_defaults():
    scenario = parse_scenario(doc())
    assert scenario.checks == ()
    assert len(scenario.dictionary) == 8
    assert scenario.tgrid.size == 21
    assert scenario.tolerances == Tolerances()
    assert scenario.spacetime.s0 == (0.0, 0.3, 2.0)
    assert scenario.initial_law is None


def test_ctmc_scenario(scenario_data):
    scenario = parse_scenario(scenario_data("absorbing_ctmc"))
    assert isinstance(scenario.process, Ctmc)
    assert scenario.dictionary[0] == Bump(0.0, 1.5)
    assert scenario.checks == (CheckName.PATHWISE, CheckName.FP, CheckName.MARTINGALE)


def test_too_few_paths():
    with pytest.raises(ConfigError) as err:
        parse_scenario(doc(monte_carlo={"N": 50}))
    assert err.value.field == "monte_carlo.N"


@pytest.mark.parametrize(
    "changes, field",
    [
        ({"bogus": 1}, "bogus"),
        ({"coefficient": {"H": {"kind": "constant"}, "t0": 1.0, "extra": 2}}, "coefficient.extra"),
        ({"monte_carlo": {"N": 100, "paths": 3}}, "monte_carlo.paths"),
        ({"process": {"kind": "levy"}}, "process.kind"),
        ({"coefficient": {"H": {"kind": "nope"}, "t0": 1.0}}, "coefficient"),
        ({"tgrid": {"end": 2.0}}, "tgrid.end"),
        ({"checks": ["fp", "density"]}, "checks[1]"),
        ({"tolerances": {"solver_tolerance": 1e-6}}, "tolerances.solver_tolerance"),
        ({"tolerances": {"sub_grid_factor": "many"}}, "tolerances.sub_grid_factor"),
        ({"initial_law": {"atoms": [0.0], "weights": [0.3]}}, "initial_law"),
        ({"regularity": {"expect": "maybe"}}, "regularity.expect"),
        ({"spacetime": {"s0": [-1.0]}}, "spacetime.s0"),
        ({"dictionary": [{"family": "spline"}]}, "dictionary[0]"),
        ({"schema": 2}, "schema"),
    ],
)
def test_errors_name_the_field(changes, field):
    with pytest.raises(ConfigError) as err:
        parse_scenario(doc(**changes))
    assert err.value.field == field
    assert field in str(err.value)


def test_missing_required_field():
    data = doc()
    del data["monte_carlo"]
    with pytest.raises(ConfigError) as err:
        parse_scenario(data)
    assert err.value.field == "monte_carlo"


def test_json_syntax_error_has_position(tmp_path):
    target = tmp_path / "broken.json"
    target.write_text('{\n  "schema": 1,\n  "name": \n}\n', encoding="utf-8")
    with pytest.raises(ConfigError) as err:
        load_scenario(target)
    assert err.value.line == 4
    assert err.value.column is not None
    assert "line 4" in str(err.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.json")


def test_check_names_are_normalized():
    scenario = parse_scenario(doc(checks=["check-fp", "Pathwise", "fp"]))
    assert scenario.checks == (CheckName.FP, CheckName.PATHWISE)


def test_overrides_are_echoed():
    scenario = parse_scenario(doc())
    changed = scenario.with_overrides(seed=7, tolerances={"ks_alpha": "0.001", "verify_lipschitz": "true"},
                                      checks=(CheckName.FP,))
    assert changed.monte_carlo.master_seed == 7
    assert changed.tolerances.ks_alpha == 0.001
    assert changed.tolerances.verify_lipschitz is True
    assert changed.raw["monte_carlo"]["master_seed"] == 7
    assert changed.raw["tolerances"] == {"ks_alpha": 0.001, "verify_lipschitz": True}
    assert changed.raw["checks"] == ["fp"]
    assert "tolerances" not in scenario.raw
    assert scenario.monte_carlo.master_seed == 0


def test_unknown_override_is_rejected():
    with pytest.raises(ConfigError):
        parse_scenario(doc()).with_overrides(tolerances={"nope": 1})


def test_dumps_is_stable():
    payload = {"b": np.float64(1.5), "a": [np.int64(2)], "c": CheckName.FP, "d": np.arange(2)}
    text = dumps(payload, indent=None)
    assert text == '{"a": [2], "b": 1.5, "c": "fp", "d": [0, 1]}'
    assert json.loads(text)["c"] == "fp"
