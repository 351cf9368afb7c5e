"""Command line driver."""

import json

import pytest
from driver import COMMANDS, build_parser, main, parse_tolerances
from errors import ConfigError

SCENARIO = {
    "schema": 1,
    "name": "driver",
    "process": {"kind": "brownian", "x0": 0.0},
    "coefficient": {"H": {"kind": "constant", "value": 1.0}, "t0": 1.0},
    "dictionary": {"default": 2},
    "tgrid": {"points": 5},
    "monte_carlo": {"N": 100, "mesh": 0.01, "master_seed": 3},
    "checks": [],
    "tolerances": {"mc_sigmas": 5.0},
}


@pytest.fixture
def config_file(tmp_path):
    target = tmp_path / "scenario.json"
    target.write_text(json.dumps(SCENARIO), encoding="utf-8")
    return target


def test_parse_tolerances():
    assert parse_tolerances(None) == {}
    assert parse_tolerances("ks_alpha=0.001, mc_sigmas = 4") == {"ks_alpha": "0.001", "mc_sigmas": "4"}
    with pytest.raises(ConfigError) as err:
        parse_tolerances("ks_alpha")
    assert err.value.field == "--tol"


def test_every_command_takes_the_common_flags():
    parser = build_parser()
    for command in COMMANDS:
        args = parser.parse_args([command, "--config", "x.json", "--seed", "5", "--workers", "2"])
        assert args.command == command
        assert (args.seed, args.workers, args.out) == (5, 2, "out")


def test_config_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run"])


def test_run_without_checks(tmp_path, config_file, capsys):
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path / "out")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 7
    assert all("skipped" in line for line in lines)


def test_single_check_command(tmp_path, config_file, capsys):
    out = tmp_path / "out"
    assert main(["check-fp", "--config", str(config_file), "--out", str(out), "--seed", "9", "--workers", "1"]) == 0
    assert "fp           pass" in capsys.readouterr().out
    with open(out / "run_report.json", encoding="utf-8") as f:
        data = json.load(f)
    assert data["seed"] == 9
    assert data["scenario"]["checks"] == ["fp"]
    assert data["checks"]["martingale"]["verdict"] == "skipped"


def test_simulate_command(tmp_path, config_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(config_file), "--out", str(out), "--workers", "1"]) == 0
    assert (out / "ensemble.csv").exists()
    assert not (out / "run_report.json").exists()


@pytest.mark.parametrize("text", ["{", json.dumps({**SCENARIO, "monte_carlo": {"N": 50}})])
def test_bad_config_exits_2(tmp_path, text):
    target = tmp_path / "bad.json"
    target.write_text(text, encoding="utf-8")
    assert main(["run", "--config", str(target), "--out", str(tmp_path / "out")]) == 2


def test_bad_tolerance_exits_2(tmp_path, config_file):
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path), "--tol", "nope=1"]) == 2
    assert main(["run", "--config", str(config_file), "--out", str(tmp_path), "--tol", "garbage"]) == 2
