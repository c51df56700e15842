import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from jumpflow.cli import main
from jumpflow.config import ConfigError, build_model, load_config, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

CIR_JUMP_MODEL = {
    "family": "cir_jump",
    "beta": -1.0,
    "sigma0": 0.5,
    "jump": {"rate": 2.0, "mark_law": {"exponential": {"mean": 0.5}}, "kernel": {"capped_linear": {"cap": 1.0}}},
    "drift": {"constant": {"value": 0.5}},
    "x0": {"constant": {"value": 1.0}},
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def run(tmp_path, *argv, out="out"):
    return main([*argv, "--out", str(tmp_path / out)])


def small_run(**kw):
    doc = {"model": CIR_JUMP_MODEL, "horizon": 1.0, "master_steps": 256, "meshes": [0.25, 0.125, 0.0625],
           "reference": 2.0**-6, "n_paths": 300, "seed": 11, "batch_size": 64}
    doc.update(kw)
    return doc


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.json")):
        cfg = load_config(str(p))
        build_model(cfg.model)


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="model.sigma1"):
        parse_config(json.dumps({"model": dict(CIR_JUMP_MODEL, sigma1=0.3)}))


def test_json_error_has_location():
    with pytest.raises(ConfigError, match=r":1:28:"):
        parse_config('{"model": {"family": "cir",}}')


def test_positive_beta_cites_requirement(tmp_path, capsys):
    cfg = write(tmp_path, {"model": dict(CIR_JUMP_MODEL, beta=1.0)})
    assert run(tmp_path, "validate", "--config", cfg) == 2
    assert "beta<0" in capsys.readouterr().err.replace(" ", "")


def test_validate_builtin_passes(tmp_path):
    assert run(tmp_path, "validate", "--config", str(CONFIGS / "ac2_cir_jump.json")) == 0
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["passed"]


def test_validate_sigma_square_fails_at_pair(tmp_path, capsys):
    assert run(tmp_path, "validate", "--config", str(CONFIGS / "custom_sigma_square.json")) == 1
    assert "modulus@(3,4)" in capsys.readouterr().err


def test_validate_levy(tmp_path):
    assert run(tmp_path, "validate", "--config", str(CONFIGS / "levy_onesided.json")) == 0


def test_simulate_byte_identical_and_thread_independent(tmp_path):
    cfg = write(tmp_path, small_run())
    assert run(tmp_path, "simulate", "--config", cfg, "--threads", "1", out="a") == 0
    assert run(tmp_path, "simulate", "--config", cfg, "--threads", "1", out="b") == 0
    assert run(tmp_path, "simulate", "--config", cfg, "--threads", "8", out="c") == 0
    for name in ("report.json", "report.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert a == (tmp_path / "c" / name).read_bytes()


def test_simulate_linear_model_matches_iterates(tmp_path):
    model = {"family": "cir", "beta": -1.0, "sigma0": 0.0, "drift": {"constant": {"value": 0.0}}, "x0": {"constant": {"value": 1.0}}}
    cfg = write(tmp_path, {"model": model, "horizon": 1.0, "master_steps": 16, "meshes": [0.125], "n_paths": 3, "seed": 1})
    assert run(tmp_path, "simulate", "--config", cfg) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "report.csv")))
    np.testing.assert_allclose([float(r["mean"]) for r in rows], (1 - 0.125) ** np.arange(9), rtol=1e-13)


def test_dump_paths(tmp_path):
    cfg = write(tmp_path, small_run(meshes=[0.25], n_paths=4))
    assert run(tmp_path, "simulate", "--config", cfg, "--dump-paths") == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "paths.csv")))
    assert {r["path_index"] for r in rows} == {"0", "1", "2", "3"}


def test_converge_small(tmp_path):
    cfg = write(tmp_path, small_run())
    code = run(tmp_path, "converge", "--config", cfg)
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert code == (0 if doc["passed"] else 1)
    assert len(doc["errors"]) == 3
    header = (tmp_path / "out" / "report.csv").read_text().splitlines()[0]
    assert header.startswith("mesh,error,se,negative_part")


@pytest.mark.parametrize(
    "change",
    [dict(meshes=[0.25]), dict(reference=0.25), dict(meshes=[0.3, 0.125]), dict(seed=None)],
)
def test_converge_config_errors(tmp_path, change):
    doc = small_run(**change)
    if doc.get("seed") is None:
        doc.pop("seed")
    assert run(tmp_path, "converge", "--config", write(tmp_path, doc)) == 2


def test_missing_and_unreadable_config(tmp_path):
    assert run(tmp_path, "simulate") == 2
    assert run(tmp_path, "simulate", "--config", str(tmp_path / "nope.json")) == 2
    assert main(["frobnicate"]) == 2


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write(tmp_path, small_run(meshes=[0.25], n_paths=4))
    assert main(["simulate", "--config", cfg, "--out", str(blocker / "sub")]) == 3


def test_threads_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path, small_run(meshes=[0.25], n_paths=50))
    monkeypatch.setenv("JUMPFLOW_THREADS", "3")
    assert run(tmp_path, "simulate", "--config", cfg, out="env") == 0
    monkeypatch.setenv("JUMPFLOW_THREADS", "many")
    assert run(tmp_path, "simulate", "--config", cfg, out="bad") == 2


def test_mollifier_cli(tmp_path, capsys):
    assert run(tmp_path, "mollifier", "--K", "3", "--constants", "sharp", out="m1") == 0
    doc = json.loads((tmp_path / "m1" / "report.json").read_text())
    assert [lvl["k"] for lvl in doc["levels"]] == [1, 2, 3]
    assert run(tmp_path, "mollifier", "--K", "40", out="m2") == 1
    assert "37" in capsys.readouterr().err
    assert run(tmp_path, "mollifier", "--family", "constant", "--K", "2", "--constants", "sharp", out="m3") == 1
    assert run(tmp_path, "mollifier", "--K", "0", out="m4") == 2
    assert run(tmp_path, "mollifier-check", "--K", "2", "--constants", "sharp", out="m5") == 0


def test_mollifier_stated_constants_fail(tmp_path, capsys):
    # the printed constants cannot hold at k=1 (ratio e) and beyond; see the acceptance suite
    assert run(tmp_path, "mollifier", "--K", "2", out="m") == 1
    assert "ratio_le_2" in capsys.readouterr().err
