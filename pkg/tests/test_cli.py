from __future__ import annotations

import io
import json

import pytest

from sln_raresim.cli import main


@pytest.fixture
def model_file(tmp_path):
    p = tmp_path / "model.json"
    p.write_text(json.dumps({"equicorrelated": {"d": 5, "rho": 0.0, "s2": 1.0}}))
    return str(p)


def run(argv):
    out = io.StringIO()
    code = main(argv, out)
    return code, out.getvalue()


def test_estimate_text(model_file):
    code, text = run(["estimate", "--model", model_file, "--quantity", "cdf", "--gamma", "2", "--n", "1e4"])
    assert code == 0 and text.startswith("estimate") and "RE%" in text


def test_estimate_json_deterministic(model_file):
    args = ["estimate", "--model", model_file, "--quantity", "right-tail", "--gamma", "40", "--n", "2^13",
            "--json", "--threads", "1"]
    a = json.loads(run(args)[1])
    b = json.loads(run(args)[1])
    a.pop("seconds"), b.pop("seconds"), a.pop("wnrv"), b.pop("wnrv")
    assert a == b


def test_estimate_csv(model_file):
    code, text = run(["estimate", "--model", model_file, "--quantity", "pdf", "--gamma", "2", "--n", "5000",
                      "--csv"])
    lines = text.strip().splitlines()
    assert code == 0 and lines[0].startswith("estimate,log10") and len(lines) == 2


def test_exit_codes(tmp_path, model_file):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nu": [0, 0], "Sigma": [[1, 2], [2, 1]]}))
    assert run(["estimate", "--model", str(bad), "--quantity", "cdf", "--gamma", "1"])[0] == 3
    assert run(["estimate", "--model", str(tmp_path / "missing.json"), "--quantity", "cdf", "--gamma", "1"])[0] == 2
    assert run(["estimate", "--model", model_file, "--quantity", "cdf", "--gamma", "1", "--n", "1.5"])[0] == 2
    assert run(["table", "--table", "12"])[0] == 2
    assert run(["estimate", "--model", model_file, "--quantity", "right-tail", "--gamma", "9",
                "--estimator", "var-boost"])[0] == 2
    assert run([])[0] == 2


def test_paths_header():
    code, text = run(["paths", "--paths", "3", "--bs", "X0=50,r=0.07,sigma=0.25,T=0.3333,d=12"])
    lines = text.splitlines()
    assert code == 0
    body = [ln for ln in lines if not ln.startswith("#")]
    assert len(body) == 4
    assert len(body[1].split(",")) == len(body[0].split(","))


def test_paths_bad_spec():
    assert run(["paths", "--bs", "X0=50,r=0.07"])[0] == 2


def test_convergence_output(model_file):
    code, text = run(["convergence", "--model", model_file, "--gamma", "2", "--ngrid", "2^8..2^12",
                      "--shifts", "5"])
    lines = text.splitlines()
    assert code == 0 and lines[0].startswith("# slope=")
    assert lines[1] == "n,re_percent" and [ln.split(",")[0] for ln in lines[2:]] == ["256", "512", "1024", "2048", "4096"]


def test_tilt_right(model_file):
    code, text = run(["tilt", "--model", model_file, "--gamma", "50", "--side", "right"])
    rep = json.loads(text)
    assert code == 0 and len(rep["strata"]) == 5
