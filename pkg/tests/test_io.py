import json

import numpy as np

from mfcbo import CboParams, DiffusionModel, Ensemble, MeasureCurve, builtin_objective, run_particle_cbo
from mfcbo import io
from mfcbo.initial import UniformBox


def test_ensemble_round_trip(tmp_path, rng):
    X = rng.normal(size=(7, 3)) * 1e-7 + np.pi
    io.save_ensemble(Ensemble(X), tmp_path / "e.csv")
    back = io.load_ensemble(tmp_path / "e.csv")
    assert back.points.tobytes() == X.tobytes()
    raw = (tmp_path / "e.csv").read_bytes()
    assert raw.startswith(b"x0,x1,x2\n") and b"\r" not in raw


def test_curve_round_trip_and_stride(tmp_path, rng):
    times = np.arange(6) * 0.5
    c = MeasureCurve.from_array(times, rng.normal(size=(6, 4, 2)))
    io.save_curve(c, tmp_path / "full")
    back = io.load_curve(tmp_path / "full")
    assert back.as_array().tobytes() == c.as_array().tobytes()
    io.save_curve(c, tmp_path / "thin", stride=4)
    manifest = json.loads((tmp_path / "thin" / "manifest.json").read_text())
    assert manifest["grid_indices"] == [0, 4, 5]
    assert manifest["times"] == [0.0, 2.0, 2.5]


def test_trajectory_columns(tmp_path):
    traj = run_particle_cbo(CboParams(1.0, 1.0, 0.05, 0.01, 5), DiffusionModel.isotropic(0.1, 2),
                            builtin_objective("quadratic", 2), UniformBox(-1, 1)(5, 2, 0))
    io.save_trajectory(traj, tmp_path / "t.csv")
    header, data = io.read_matrix(tmp_path / "t.csv")
    assert header == ["t", "consensus_0", "consensus_1", "best_f", "moment_p"]
    assert data.shape == (6, 5)
    assert data[:, 1:3].tobytes() == traj.consensus.tobytes()


def test_json_is_strict(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": float("inf"), "a": np.float64(1.5), "c": np.arange(2)})
    text = (tmp_path / "a.json").read_text()
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [0, 1]}
    assert text.index('"a"') < text.index('"b"')


def test_history_csv(tmp_path):
    io.save_history([0.5, 0.25], tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "iter,path_dist\n1,0.5\n2,0.25\n"
