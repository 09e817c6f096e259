import json

import pytest

from hjlab.errors import ConfigError
from hjlab.lab import cli
from hjlab.lab.config import DEFAULT_TOLERANCES, load_config, parse_config

SMALL = {
    "model": {"name": "quartic_double_well"},
    "grid": {"n": 1, "N": 32},
    "epsilon": 0.05,
    "T": 0.05,
    "z": [[0.3]],
    "initial": {"kind": "sin", "amplitude": 0.1},
}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_toml_and_json_agree(tmp_path):
    (tmp_path / "c.toml").write_text(
        'epsilon = 0.05\nT = 0.05\nz = [[0.3]]\n[model]\nname = "quartic_double_well"\n'
        '[grid]\nn = 1\nN = 32\n[initial]\nkind = "sin"\namplitude = 0.1\n')
    a = load_config(tmp_path / "c.toml", "representation")
    b = load_config(_write(tmp_path / "c.json", SMALL), "representation")
    assert a.to_dict() == b.to_dict()
    assert a.to_dict()["tolerances"] == DEFAULT_TOLERANCES


@pytest.mark.parametrize("bad", [
    {"bogus": 1},
    {"epsilon": -1.0},
    {"grid": {"n": 3, "N": 32}},
    {"model": {"name": "nope"}},
    {"peclet": "maybe"},
    {"tolerances": {"unknown": 1.0}},
    {"initial": {"kind": "square"}},
])
def test_parse_rejects(bad):
    with pytest.raises(ConfigError):
        parse_config({**SMALL, **bad}, "representation")


def test_subcommand_must_match_experiment():
    with pytest.raises(ConfigError):
        parse_config({**SMALL, "experiment": "rate_vv"}, "representation")


@pytest.mark.parametrize("cmd, extra", [
    ("monotone", {"initial": {"kind": "sin", "offset": 0.0}, "Ts": [0.1, 0.2]}),
    ("rate-vv", {"epsilons": [0.08, 0.01]}),
    ("chars", {"grid": {"n": 2, "N": 16}, "model": {"name": "quadratic_convex", "params": {"dim": 2}}}),
])
def test_invalid_config_exits_2_without_output(tmp_path, capsys, cmd, extra):
    out = tmp_path / "out"
    code = cli.main([cmd, "--config", _write(tmp_path / "c.json", {**SMALL, **extra}), "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert "invalid configuration" in capsys.readouterr().err


def test_represent_run_is_deterministic_and_reproducible(tmp_path):
    cfg = _write(tmp_path / "c.json", SMALL)
    assert cli.main(["represent", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "7"]) == 0
    assert cli.main(["represent", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"] and ma["passed"]
    assert ma["config"]["seed"] == 7
    assert ma["residuals"]["identity"] <= 1e-10
    # rerun from the manifest alone
    assert cli.main(["represent", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    mc = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert mc["files"] == ma["files"]
    for name in ma["files"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()


def test_failed_check_exits_1(tmp_path):
    cfg = _write(tmp_path / "c.json", {**SMALL, "tolerances": {"identity": 1e-30, "mass": 1e-30}})
    assert cli.main(["represent", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert json.loads((tmp_path / "o" / "report.json").read_text())["passed"] is False


def test_jobs_with_workers(tmp_path, capsys):
    raw = {**SMALL, "jobs": [{"name": "coarse"}, {"name": "fine", "grid": {"n": 1, "N": 64}}]}
    code = cli.main(["represent", "--config", _write(tmp_path / "c.json", raw), "--out", str(tmp_path / "o"),
                     "--workers", "2"])
    assert code == 0
    for name, N in (("coarse", 32), ("fine", 64)):
        m = json.loads((tmp_path / "o" / name / "manifest.json").read_text())
        assert m["config"]["grid"]["N"] == N
    assert "PASS" in capsys.readouterr().out


def test_bad_flags_exit_2(tmp_path):
    cfg = _write(tmp_path / "c.json", SMALL)
    assert cli.main(["represent", "--config", cfg, "--workers", "0"]) == 2
    assert cli.main(["represent", "--config", str(tmp_path / "missing.json")]) == 2
