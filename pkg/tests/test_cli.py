import csv
import io
import json

import numpy as np
import pytest

from matbiorth.cli import emit_plot_data, main
from matbiorth.errors import UnknownSeries


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


HILBERT = {"name": "hilbert", "n": 4, "kernel": {"variant": "hilbert"}, "steps": [{"op": "factorize"}]}

GERONIMUS = {"name": "ger", "n": 4, "kernel": {"variant": "hilbert"},
             "steps": [{"op": "transform", "kind": "geronimus", "W": {"coeffs": [-2, 1]},
                        "routes": ["direct", "spectral", "nonspectral"]}]}

TODA = {"name": "toda", "n": 2,
        "kernel": {"variant": "discrete", "nodes_x": [-0.5, 0.7], "nodes_y": [0.3, -0.4],
                   "weights": [[1.0, 0.4], [0.2, 0.8]]},
        "steps": [{"op": "toda", "t1": [0.1], "t2": [0.05], "n": 1, "z": 5,
                   "checks": ["toda", "sato", "bilinear"], "W_C": {"coeffs": [0.3, 1]},
                   "W_G": {"coeffs": [-2, 1]}, "t1_prime": [0.2], "t2_prime": [0.1]}]}


def run(tmp_path, scenario, *extra):
    out = tmp_path / "out"
    code = main(["run", write(tmp_path, "sc.json", scenario), "--out", str(out), *extra])
    return code, out


def test_hilbert_factorization(tmp_path):
    code, out = run(tmp_path, HILBERT)
    assert code == 0
    rep = json.loads((out / "hilbert.report.json").read_text())
    H = np.array(rep["steps"][0]["H"])[..., 0]
    assert np.isclose(H[0, 0, 0], 1) and np.isclose(H[1, 0, 0], 1 / 12)
    assert rep["passed"] is True


def test_route_table(tmp_path):
    code, out = run(tmp_path, GERONIMUS)
    assert code == 0
    step = json.loads((out / "ger.report.json").read_text())["steps"][0]
    assert set(step["routes"]) == {"spectral", "nonspectral"}
    assert all(v["max"] < 1e-7 for v in step["routes"].values())
    assert step["bridge_residual"] < 1e-8


def test_malformed_json(tmp_path):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, "bad.json", "{bad"), "--out", str(out)]) == 2
    assert not out.exists()


@pytest.mark.parametrize("bad", [
    {"name": "x", "n": 4, "kernel": {"variant": "hilbert"}, "steps": []},
    {"name": "x", "n": 4, "kernel": {"variant": "nope"}, "steps": [{"op": "factorize"}]},
    {"name": "x", "n": 4, "kernel": {"variant": "hilbert"},
     "steps": [{"op": "transform", "kind": "geronimus", "routes": ["mixed"]}]},
    {"name": "x", "n": 4, "kernel": {"variant": "hilbert"}, "steps": [{"op": "toda"}]},
])
def test_schema_errors(tmp_path, bad):
    code, out = run(tmp_path, bad)
    assert code == 2 and not out.exists()


def test_numerical_failure(tmp_path):
    sc = {"name": "sing", "n": 4, "kernel": {"variant": "discrete", "nodes_x": [0.1, 0.2], "nodes_y": [0.3, 0.4],
                                              "weights": [[1, 0], [0, 1]]}, "steps": [{"op": "factorize"}]}
    code, out = run(tmp_path, sc)
    assert code == 1
    assert "error" in json.loads((out / "sing.report.json").read_text())


def test_tolerance_failure(tmp_path):
    sc = dict(GERONIMUS, tolerances={"route": 1e-20})
    code, _ = run(tmp_path, sc)
    assert code == 1


def test_deterministic_reports(tmp_path):
    sc = {"name": "rnd", "n": 4, "seed": 3, "kernel": {"variant": "random_discrete", "p": 2, "nodes": 6},
          "steps": [{"op": "factorize"}, {"op": "toda", "t1": [0.1], "checks": ["sato", "baker"]}]}
    run(tmp_path, sc)
    a = (tmp_path / "out" / "rnd.report.json").read_bytes()
    run(tmp_path, sc)
    assert (tmp_path / "out" / "rnd.report.json").read_bytes() == a
    assert json.loads(a)["seed"] == 3
    code, out = run(tmp_path, sc, "--seed", "4")
    assert json.loads((out / "rnd.report.json").read_bytes())["seed"] == 4


def test_toda_scenario(tmp_path):
    code, out = run(tmp_path, TODA)
    assert code == 0
    checks = json.loads((out / "toda.report.json").read_text())["steps"][0]["checks"]
    assert checks["toda"]["residual_h"] < 1e-6 and checks["bilinear"]["residual"] < 1e-8


# ------------------------------------------------------------------- plot

def test_h_norm_series_length(tmp_path):
    run(tmp_path, HILBERT)
    rep = json.loads((tmp_path / "out" / "hilbert.report.json").read_text())
    buf = io.StringIO()
    emit_plot_data(rep, ["H_norms"], buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["k", "norm"] and len(rows) - 1 == 4


def test_complex_columns_split(tmp_path, capsys):
    run(tmp_path, HILBERT)
    capsys.readouterr()
    assert main(["plot", str(tmp_path / "out" / "hilbert.report.json"), "--series", "H"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["k", "i", "j", "value_re", "value_im"]
    assert np.isclose(float(rows[2][3]), 1 / 12)


def test_richardson_series_rows(tmp_path):
    run(tmp_path, TODA)
    rep = json.loads((tmp_path / "out" / "toda.report.json").read_text())
    s = rep["series"]["richardson_toda"]
    assert s["columns"] == ["h", "residual"] and len(s["rows"]) == 2
    assert s["rows"][1][0] == s["rows"][0][0] / 2


def test_unknown_and_empty_series(tmp_path):
    run(tmp_path, HILBERT)
    rep = json.loads((tmp_path / "out" / "hilbert.report.json").read_text())
    with pytest.raises(UnknownSeries):
        emit_plot_data(rep, [])
    with pytest.raises(UnknownSeries):
        emit_plot_data(rep, ["nope"])
    assert main(["plot", str(tmp_path / "out" / "hilbert.report.json")]) == 2


def test_usage_error():
    assert main(["frobnicate"]) == 2
