import json

import pytest

from ldthermo.cli import COMMANDS, build_config, load_config, main
from ldthermo.errors import ConfigError

FAST = {
    "validate": ["--model", "linear2d"],
    "simulate": ["--model", "ou1d", "--set", "n_paths=200", "--set", "horizon=0.5", "--grid=-3:3:61"],
    "fpe": ["--model", "ou1d", "--epsilon", "0.1", "--grid=-3:3:121"],
    "quasipotential": ["--model", "ou1d", "--target", "1.0"],
    "decompose": ["--model", "linear2d"],
    "epr": ["--model", "linear2d"],
    "entropy": ["--model", "ou1d", "--epsilon", "0.1", "--delta-t", "0.01"],
    "eit": ["--model", "ou1d", "--set", "horizon=1.0"],
    "ou-demo": ["--model", "ou1d"],
}


def _summary(out):
    return json.load(open(out / "summary.json"))


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_passes(command, tmp_path, capsys):
    out = tmp_path / command
    assert main([command, *FAST[command], "--out", str(out)]) == 0
    doc = _summary(out)
    assert doc["passed"] and doc["error"] is None and doc["command"] == command
    assert doc["header"]["tool"] == "ldthermo"
    for name in doc["files"]:
        assert (out / name).read_text().startswith("# tool=ldthermo")
    assert "PASS" in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--model", "ou1d", "--seed", "9", "--set", "n_paths=50", "--set", "horizon=0.2"]
    main([*args, "--out", str(tmp_path / "a")])
    main([*args, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/trajectories.csv").read_bytes() == (tmp_path / "b/trajectories.csv").read_bytes()


def test_config_file_and_override(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\nname = custom\ndrift_expr[0] = -x1^3 + x1\ndiffusion_expr[0][0] = 1\n"
                   "domain = -2:2\n\n[run]\nepsilon = 0.2\n\n[fpe]\ngrid = -2:2:81\n")
    flat = load_config(str(ini), "fpe")
    assert flat["model.drift_expr[0]"] == "-x1^3 + x1" and flat["grid"] == "-2:2:81"
    cfg = build_config("fpe", flat)
    assert cfg.get("epsilon") == 0.2
    out = tmp_path / "o"
    assert main(["fpe", "--config", str(ini), "--epsilon", "0.3", "--out", str(out)]) == 0
    assert _summary(out)["inputs"]["params"]["epsilon"] == 0.3


@pytest.mark.parametrize("args,key", [
    (["fpe", "--model", "ou1d", "--delta-t", "-0.1"], "delta_t"),
    (["fpe", "--model", "nope"], "model.name"),
    (["fpe", "--model", "ou1d", "--param", "b=-1"], "model.params.b"),
    (["fpe", "--model", "ou1d", "--set", "bogus=1"], "bogus"),
    (["fpe", "--model", "ou1d", "--epsilon", "abc"], "epsilon"),
])
def test_config_errors_exit_2(args, key, tmp_path, capsys):
    assert main([*args, "--out", str(tmp_path)]) == 2
    assert f"[key: {key}]" in capsys.readouterr().err


def test_failed_check_exits_1(tmp_path):
    out = tmp_path / "q"
    code = main(["quasipotential", "--model", "ou1d", "--target", "1.0", "--tolerance", "1e-12", "--out", str(out)])
    assert code == 1 and not _summary(out)["passed"]


def test_computation_error_exits_1(tmp_path):
    out = tmp_path / "b"
    code = main(["simulate", "--model", "custom", "--set", "model.drift_expr[0]=x1^3",
                 "--set", "model.diffusion_expr[0][0]=1", "--set", "x0=3", "--set", "horizon=10",
                 "--epsilon", "1e-6", "--out", str(out)])
    assert code == 1
    assert _summary(out)["error"].startswith("BlowUp")


def test_build_config_rejects_unknown_command():
    with pytest.raises(ConfigError):
        build_config("dance", {})


def test_decompose_numeric_phi(tmp_path):
    out = tmp_path / "d"
    code = main(["decompose", "--model", "custom",
                 "--set", "model.drift_expr[0]=-x1 + 2*x2", "--set", "model.drift_expr[1]=-2*x1 - x2",
                 "--set", "model.diffusion_expr[0][0]=1", "--set", "model.diffusion_expr[0][1]=0",
                 "--set", "model.diffusion_expr[1][0]=0", "--set", "model.diffusion_expr[1][1]=1",
                 "--set", "model.domain=-2:2,-2:2", "--epsilon", "0.05", "--out", str(out)])
    doc = _summary(out)
    assert code == 0 and doc["results"]["phi_source"] == "fpe"
    assert doc["results"]["orthogonality_central"] <= 0.05
