import json
import re

import numpy as np
import pytest

from cases import OMEGA, SIGMA_FN, SIGMA_IN, VERTICES
from omt_holonomy import UnsupportedDimensionError, UsageError, load_config, render_ellipses, run
from omt_holonomy.cli import main
from omt_holonomy.experiments import dumps

EQ = {"sigma0": SIGMA_IN.tolist(), "sigma1": SIGMA_FN.tolist()}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_monge_run_writes_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, {"kind": "monge", **EQ})
    assert main(["monge", "--config", cfg, "--out", str(tmp_path / "o"), "--svg"]) == 0
    names = {p.name for p in (tmp_path / "o").iterdir()}
    assert names == {"result.json", "covariances.csv", "factors.csv", "controls.csv", "tracers.csv", "trajectory.svg"}
    doc = json.loads((tmp_path / "o" / "result.json").read_text())
    assert doc["summary"]["pushforward_residual"] < 1e-12
    assert doc["summary"]["w2"] == pytest.approx(1.7480640977952853, abs=1e-14)


def test_floats_use_17_digits(tmp_path):
    dump = run({"kind": "geodesic", **EQ, "steps": 20})
    text = dumps(dump)
    mant = [len(m.replace(".", "").lstrip("-0")) for m in re.findall(r"-?\d+\.\d+(?=e|\b)", text)]
    assert max(mant) == 17
    doc = json.loads(text)
    # parsing back is lossless
    assert np.array_equal(np.array(doc["arrays"]["covariances"]), dump.covariances)


def test_runs_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, {"kind": "geodesic", **EQ, "steps": 60})
    for out in ("a", "b"):
        assert main(["geodesic", "--config", cfg, "--out", str(tmp_path / out), "--svg"]) == 0
    for name in ("result.json", "tracers.csv", "trajectory.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, {"sigma0": [[1, 2], [2, 1]], "sigma1": [[1, 0], [0, 1]]})
    assert main(["monge", "--config", bad]) == 2
    assert main(["monge", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["imt", "--config", _write(tmp_path, {"sigma_in": SIGMA_IN.tolist()}, "m.json")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2
    d3 = _write(tmp_path, {"sigma0": np.eye(3).tolist(), "sigma1": (2 * np.eye(3)).tolist()}, "d3.json")
    assert main(["geodesic", "--config", d3, "--out", str(tmp_path / "d3"), "--svg"]) == 2
    hard = {"sigma_in": SIGMA_IN.tolist(), "sigma_fn": SIGMA_FN.tolist(), "omega": [[0, 3], [-3, 0]],
            "steps": 100, "continuation_steps": 1, "max_iters": 2}
    assert main(["imt", "--config", _write(tmp_path, hard, "h.json"), "--out", str(tmp_path / "h")]) == 3
    err = capsys.readouterr().err
    assert "not positive definite" in err and "no convergence" in err


def test_config_validation():
    with pytest.raises(UsageError):
        load_config({"kind": "triangle", "vertices": VERTICES[:2]})
    with pytest.raises(UsageError):
        load_config({"kind": "monge", "sigma0": [[1.0]], "sigma1": np.eye(2).tolist()})
    with pytest.raises(UsageError):
        load_config({"kind": "monge", **EQ, "steps": 0})
    with pytest.raises(UsageError):
        load_config({"kind": "gm", **EQ}, kind="monge")
    cfg = load_config({"kind": "monge", **EQ, "tracers": []})
    assert cfg.tracers.shape == (0, 2)


def test_tracers_follow_factors():
    dump = run({"kind": "triangle", "vertices": [v.tolist() for v in VERTICES], "steps": 90})
    assert np.allclose(dump.seeds, [[1, 0], [0, 1], [0.5, 0.5]])
    for seed, path in zip(dump.seeds, dump.tracers):
        assert np.abs(path - dump.factors @ seed).max() < 1e-12
    assert len(dump.times) == len(dump.covariances) == len(dump.factors) == len(dump.controls)


def test_constant_lift():
    dump = run({"kind": "lift", "sigma": [[2.0, 0.5], [0.5, 1.0]], "steps": 50})
    assert np.allclose(dump.factors, dump.factors[0])
    assert dump.summary["length"] == pytest.approx(0.0, abs=1e-14)
    assert dump.summary["closed"]
    svg = render_ellipses(dump, stride=10)
    paths = re.findall(r'<path d="([^"]+)"[^>]*stroke-dasharray', svg)
    assert len(paths) == 6 and len(set(paths)) == 1


def test_mccann_tracers_move_on_lines():
    dump = run({"kind": "geodesic", **EQ, "steps": 200})
    for path in dump.tracers:
        d = path - path[0]
        chord = d[-1] / np.linalg.norm(d[-1])
        assert np.abs(d[:, 0] * chord[1] - d[:, 1] * chord[0]).max() < 1e-6


def test_render_rejects_non_planar():
    dump = run({"kind": "monge", "sigma0": np.eye(3).tolist(), "sigma1": np.diag([1.0, 2.0, 3.0]).tolist()})
    with pytest.raises(UnsupportedDimensionError):
        render_ellipses(dump)


def test_imt_reports_rotation():
    dump = run({"kind": "imt", "sigma_in": SIGMA_IN.tolist(), "sigma_fn": SIGMA_FN.tolist(),
                "omega": OMEGA.tolist(), "steps": 1000})
    assert abs(dump.summary["fiber_rotation_degrees"]) == pytest.approx(28.6, abs=0.05)


def test_isoholonomic_dump():
    dump = run({"kind": "isoholonomic", "omega": OMEGA.tolist(), "steps": 300, "family": 3})
    assert np.allclose(dump.covariances[0], dump.covariances[-1], atol=1e-8)
    assert abs(dump.summary["tracer_rotation_angle"]) == pytest.approx(0.5, abs=1e-6)
    e1 = dump.tracers[0]
    ang = np.arctan2(e1[-1, 1], e1[-1, 0])
    assert abs(ang) == pytest.approx(0.5, abs=1e-6)
    assert np.ptp(dump.summary["family_lengths"]) < 1e-10


def test_polygon_run():
    dump = run({"kind": "polygon", "vertices": [v.tolist() for v in VERTICES], "steps": 400})
    assert dump.summary["perimeter"] == pytest.approx(3.567, abs=0.02)
    assert dump.summary["holonomy_ok"]
