import json
import os
import subprocess
import sys

import pytest

from bandwagon.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, dumps, run
from bandwagon.config import dump_params
from bandwagon.model import crowding_model


def _run(argv, capsys):
    code = run(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(out[-1]) if out else None)


def _manifest_ok(out):
    man = json.loads((out / "manifest.json").read_text())
    for name in man["outputs"]:
        assert (out / name).stat().st_size > 0
    return man


def test_fixed_points(tmp_path, capsys):
    code, s = _run(["fixed-points", "--model", "constant", "--lambda", "1", "--mu", "0.1",
                    "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    assert len(s["fixed_points"]) == 3
    zs = sorted(round(fp["z"], 9) for fp in s["fixed_points"])
    assert zs == [-1.832159566, 0.0, 1.832159566]
    man = _manifest_ok(tmp_path)
    assert man["command"] == "fixed-points"
    assert man["parameters"]["model_params"]["mobility"]["mu"] == 0.1


def test_mu_hat(tmp_path, capsys):
    code, s = _run(["mu-hat", "--lambda", "0.5", "--epsilon", "0.5", "--bracket", "1", "10",
                    "--tol", "1e-3", "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    assert s["mu_hat"] == pytest.approx(4.558, abs=0.01)


def test_bad_bracket_is_domain_error(tmp_path, capsys):
    code, s = _run(["mu-hat", "--lambda", "0.5", "--epsilon", "0.5", "--bracket", "5", "10",
                    "--out", str(tmp_path)], capsys)
    assert code == EXIT_DOMAIN and s["error"] == "BracketError"


def test_equilibria(tmp_path, capsys):
    code, s = _run(["equilibria", "--model", "constant", "--lambda", "1", "--mu", "0.1",
                    "--m0", "-0.5", "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    assert s["count"] == 1 and s["attractors"] == ["consensus_minus"]
    doc = json.loads((tmp_path / "equilibria.json").read_text())
    eq = doc["equilibria"][0]
    assert (tmp_path / eq["orbit_csv_path"]).exists()
    assert eq["residuals"]["hjb"] <= 1e-5
    _manifest_ok(tmp_path)


def test_require_cycle(tmp_path, capsys):
    args = ["cycle", "--model", "crowding", "--lambda", "0.5", "--epsilon", "0.5"]
    code, s = _run(args + ["--mu", "4.0", "--require-cycle", "--out", str(tmp_path / "a")],
                   capsys)
    assert code == EXIT_DOMAIN
    code, s = _run(args + ["--mu", "4.0", "--out", str(tmp_path / "b")], capsys)
    assert code == EXIT_OK and s["found"] is False
    code, s = _run(args + ["--mu", "4.6", "--require-cycle", "--out", str(tmp_path / "c")],
                   capsys)
    assert code == EXIT_OK and s["found"] and s["amplitude"] < 1


def test_usage_errors(tmp_path, capsys):
    assert run(["no-such-command"]) == EXIT_USAGE
    assert run(["fixed-points", "--bogus"]) == EXIT_USAGE
    assert run(["equilibria"]) == EXIT_USAGE  # --m0 missing


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "params.toml"
    dump_params(crowding_model(0.5, 4.6, 0.5), cfg)
    code, s = _run(["fixed-points", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
    assert code == EXIT_OK
    assert min(fp["z"] for fp in s["fixed_points"]) == pytest.approx(-1.1191675, abs=1e-6)


def _outputs(d):
    return {p: (d / p).read_bytes() for p in sorted(os.listdir(d)) if p != "manifest.json"}


@pytest.mark.parametrize("argv", [
    ["portrait", "--model", "crowding", "--lambda", "0.5", "--mu", "4.6"],
    ["micro", "--m0", "-0.5", "--N", "300", "--seed", "7"],
    ["manifold", "--model", "constant", "--mu", "1"],
])
def test_deterministic_outputs(argv, tmp_path, capsys):
    assert run(argv + ["--out", str(tmp_path / "1")]) == EXIT_OK
    assert run(argv + ["--out", str(tmp_path / "2")]) == EXIT_OK
    a, b = _outputs(tmp_path / "1"), _outputs(tmp_path / "2")
    assert a and a == b
    if argv[0] == "portrait":
        assert b"<svg" in a["portrait.svg"]


def test_value_micro_lln_nash(tmp_path, capsys):
    base = ["--m0", "-0.5", "--no-shoot"]
    code, s = _run(["value"] + base + ["--out", str(tmp_path / "v")], capsys)
    assert code == EXIT_OK and s["residuals"]["consistency"] <= 1e-6
    code, s = _run(["lln"] + base + ["--N-list", "100", "1000", "--seeds", "4",
                                     "--out", str(tmp_path / "l")], capsys)
    assert code == EXIT_OK and len(s["table"]) == 2
    assert json.loads((tmp_path / "l" / "manifest.json").read_text())["seeds"] == [0, 1, 2, 3]
    code, s = _run(["nash"] + base + ["--N", "50", "--seeds", "5",
                                      "--out", str(tmp_path / "n")], capsys)
    assert code == EXIT_OK and "max_gain" in s
    code, s = _run(["value"] + base + ["--index", "3", "--out", str(tmp_path / "x")], capsys)
    assert code == EXIT_DOMAIN


def test_dumps_precision():
    assert dumps({"x": 0.1, "n": 3, "ok": True, "nan": float("nan")}) == \
        '{"x": 0.10000000000000001, "n": 3, "ok": true, "nan": null}'
    assert float(json.loads(dumps([1 / 3]))[0]) == 1 / 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bandwagon", "fixed-points", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "fixed-points"
