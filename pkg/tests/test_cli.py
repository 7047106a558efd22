import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from nlsclass.cli import ConfigError, config_from_args, main, run

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "report-schema.json").read_text())


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(capsys, *argv):
    code, out, _ = invoke(capsys, *argv)
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    return code, doc


def test_verify_tables_two_gammas(capsys):
    code, doc = report(capsys, "verify-tables", "--gamma", "2", "--gamma", "4")
    assert code == 0 and doc["ok"]
    r = doc["result"]
    assert r["n_failed"] == 0 and r["n_instances"] > 40
    for inst in r["instances"]:
        for op in inst["operators"]:
            assert op["tolerance"] > 0 and op["max_residual"] < op["tolerance"] * op["scale"]


def test_classify_harmonic_critical(capsys):
    code, doc = report(capsys, "classify", "--gamma", "4", "--potential", "x^2")
    assert code == 0
    assert doc["result"]["case"] == "3.10"
    assert doc["result"]["canon"]["T"] == "-exp(-4*t)"


def test_bracket(capsys):
    code, doc = report(capsys, "bracket", "--q1", "D:1", "--q2", "G:t")
    assert code == 0 and doc["result"]["bracket"] == "G:1"


def test_symmetries_and_transform(capsys):
    code, doc = report(capsys, "symmetries", "--gamma", "4", "--potential", "0",
                       "--ansatz", "xi=1,t,t^2;chi=1,t;lam=1,t")
    assert code == 0 and doc["result"]["dimension"] == 6
    code, doc = report(capsys, "transform", "--gamma", "2", "--potential", "x^2+i",
                       "--map", '{"T": "-exp(-4*t)"}')
    assert code == 0 and doc["result"]["transformed"] == "0"


def test_dump_catalog(capsys):
    code, doc = report(capsys, "dump-catalog")
    assert code == 0 and doc["result"]["schema"] == "nlsclass-catalog/1"


def test_bindings_are_exact(capsys):
    code, doc = report(capsys, "classify", "--gamma", "2", "--potential", "i*nu/t", "--bindings", "nu=3/2")
    assert doc["result"]["case"] == "1.3" and doc["result"]["bindings"] == {"nu": "3/2"}
    code, _, err = invoke(capsys, "classify", "--gamma", "2", "--potential", "i*nu/t", "--bindings", "nu=0.5")
    assert code == 2 and "configuration error" in err


def test_template_rejection_is_reported_in_band(capsys):
    code, doc = report(capsys, "classify", "--gamma", "2", "--potential", "sin(x)")
    assert code == 1 and not doc["ok"]
    assert doc["error"]["type"] == "TemplateRejection" and doc["result"] is None


@pytest.mark.parametrize("argv", [
    ["classify", "--gamma", "0", "--potential", "x"],
    ["classify", "--gamma", "1/2.5", "--potential", "x"],
    ["classify", "--potential", "x"],
    ["classify", "--gamma", "2", "--potential", "x +"],
    ["bracket", "--q1", "D:1"],
    ["verify-tables", "--tolerance", "-1"],
    ["verify-tables", "--config", "/nonexistent.ini"],
])
def test_configuration_errors(capsys, argv):
    code, out, err = invoke(capsys, *argv)
    assert code == 2 and out == "" and "configuration error" in err


def test_determinism(capsys):
    argv = ["classify", "--gamma", "2", "--potential", "x^2+5*i", "--seed", "11"]
    _, a, _ = invoke(capsys, *argv)
    _, b, _ = invoke(capsys, *argv)
    assert a == b
    argv = ["verify-tables", "--gamma", "4"]
    _, a, _ = invoke(capsys, *argv)
    _, b, _ = invoke(capsys, *argv, "--workers", "2")
    assert a == b


def test_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[nlsclass]\ntolerance = 1e-7\nseed = 3\ngamma = 2, 4\n")
    env = {"NLSCLASS_TOLERANCE": "1e-5"}
    cfg = config_from_args(["verify-tables"], environ=env)
    assert cfg.tolerance == 1e-5
    cfg = config_from_args(["verify-tables", "--config", str(ini)], environ=env)
    assert cfg.tolerance == 1e-7 and cfg.seed == 3 and [str(g) for g in cfg.gamma] == ["2", "4"]
    cfg = config_from_args(["verify-tables", "--config", str(ini), "--tolerance", "1e-9"], environ=env)
    assert cfg.tolerance == 1e-9


def test_tolerance_reaches_the_report(capsys):
    code, doc = report(capsys, "classify", "--gamma", "2", "--potential", "x", "--tolerance", "1e-6")
    assert doc["config"]["tolerance"] == 1e-6
    assert doc["result"]["check"]["tolerance"] == 1e-6


def test_text_format(capsys):
    code, out, _ = invoke(capsys, "classify", "--gamma", "2", "--potential", "x", "--format", "text")
    assert code == 0 and out.startswith("classify: ok") and "case 2.8" in out


def test_run_rejects_unknown_command():
    from nlsclass.cli import RunConfig
    with pytest.raises(ConfigError):
        run(RunConfig(command="plot"))


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "nlsclass.cli", "bracket", "--q1", "G:1", "--q2", "G:t",
                           "--format", "text"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.strip().splitlines()[-1] == "M:1/2"
