import csv
import json
from pathlib import Path

import pytest
import yaml

from occtime import __version__
from occtime.cli import CSV_HEADER, EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main
from occtime.config import (ConfigError, ExperimentConfig, build_function, build_process,
                            dumps, list_registry, load, loads)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

RATE = {
    "kind": "rate",
    "process": {"kind": "ou"},
    "function": {"kind": "identity"},
    "grid": {"T": 1.0, "ns": [4, 8, 16, 32, 64]},
    "reps": 400,
    "master_seed": 3,
    "check": {"s": 1.0, "norm": 1.0},
}


def _write(tmp_path, data, name="cfg.yaml"):
    data = {**data, "output": {"dir": str(tmp_path / "out"), "stem": "run"}}
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_round_trip(path):
    cfg = load(path)
    assert loads(dumps(cfg)) == cfg
    assert loads(dumps(cfg)).digest == cfg.digest


def test_unknown_function_names_field(tmp_path, capsys):
    p = _write(tmp_path, {**RATE, "function": {"kind": "sawtooth"}})
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "function.kind" in capsys.readouterr().err


@pytest.mark.parametrize("bad, field", [
    ({"kind": "bogus"}, "kind"),
    ({"reps": 0}, "reps"),
    ({"colour": "red"}, "colour"),
    ({"process": {"kind": "ou", "theta": 2}}, "process.theta"),
    ({"init": {"kind": "cauchy"}}, "init.kind"),
])
def test_config_errors_name_field(bad, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({**RATE, **bad})
    assert str(info.value).startswith(field)


def test_registry_builders():
    assert build_function({"kind": "indicator", "K": 0.5, "L": None})(1e9) == 1.0
    assert build_function({"kind": "identity", "scale": 2.0})(3.0) == 6.0
    jp = build_process({"kind": "jump", "rate": 2.0, "P": [[0, 1], [1, 0]]})
    assert jp.n_states == 2
    with pytest.raises(ConfigError):
        build_process({"kind": "jump", "P": [[0.5, 0.6], [1, 0]]})


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out == list_registry() + "\n"
    lines = out.splitlines()
    procs = [l.split(":")[0].strip() for l in lines[1:lines.index("functions:")]
             if l.startswith("  ") and not l.startswith("    ")]
    assert procs == sorted(procs) == ["bm", "euler-diffusion", "jump", "ou", "reflected-bm"]
    for name in ("indicator", "holder_abs", "hermite", "state", "tabulated"):
        assert f"  {name}:" in out
    assert "psi-check" in out


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_rate_run_outputs(tmp_path):
    p = _write(tmp_path, RATE)
    assert main(["run", str(p)]) == EXIT_OK
    rows = _rows(tmp_path / "out" / "run.csv")
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 6
    deltas = [float(r[0]) for r in rows[1:]]
    assert deltas == sorted(deltas, reverse=True)
    for r in rows[1:]:
        assert float(r[4]) <= 1.0
    summary = json.loads((tmp_path / "out" / "run.json").read_text())
    assert summary["passed"] and summary["config_digest"] == load(p).digest


def test_same_digest_and_seed_gives_identical_csv(tmp_path):
    p = _write(tmp_path, {**RATE, "function": {"kind": "indicator", "K": 0.0},
                          "grid": {"T": 1.0, "ns": [4, 8, 16, 32], "refinement": 8}})
    assert main(["run", str(p)]) == EXIT_OK
    first = (tmp_path / "out" / "run.csv").read_bytes()
    assert main(["run", str(p)]) == EXIT_OK
    assert (tmp_path / "out" / "run.csv").read_bytes() == first
    assert main(["run", str(p), "--seed", "4"]) == EXIT_OK
    assert (tmp_path / "out" / "run.csv").read_bytes() != first


def test_failed_expectation_exit_code(tmp_path):
    p = _write(tmp_path, {**RATE, "expect": {"slope": [1.9, 2.1]}})
    assert main(["run", str(p)]) == EXIT_CHECK
    summary = json.loads((tmp_path / "out" / "run.json").read_text())
    assert summary["passed"] is False


def test_psi_check_run(tmp_path):
    p = _write(tmp_path, yaml.safe_load((CONFIGS / "psi_check.yaml").read_text()))
    assert main(["run", str(p)]) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "run.json").read_text())
    assert summary["exp_violations"] == 0 and summary["psi_violations"] == 0
    assert summary["quadrature_max_rel"] <= 1e-8


def test_overrides(tmp_path):
    p = _write(tmp_path, RATE)
    other = tmp_path / "elsewhere"
    assert main(["run", str(p), "--reps", "200", "--out", str(other)]) == EXIT_OK
    summary = json.loads((other / "run.json").read_text())
    assert summary["reps"] == 200


@pytest.mark.parametrize("name", ["ergodic_ou_identity", "oracle_jump", "norms_holder"])
def test_shipped_configs_run(tmp_path, name):
    data = yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())
    p = _write(tmp_path, data)
    assert main(["run", str(p), "--reps", "1000"]) in (EXIT_OK, EXIT_CHECK)
    summary = json.loads((tmp_path / "out" / "run.json").read_text())
    assert summary["kind"] == data["kind"]
