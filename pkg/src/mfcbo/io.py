"""CSV/JSON serialization.

Floats are written with 17 significant digits, so values round-trip
exactly; files are UTF-8 with LF line endings and ``,`` delimiters.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import UsageError
from .measure import Ensemble, MeasureCurve


def _cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
    return path


def write_json(path, payload):
    """Strict JSON: non-finite floats are written as ``null``."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(_finite(payload), fh, indent=2, sort_keys=True, allow_nan=False,
                  default=_json_default)
        fh.write("\n")
    return path


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_matrix(path):
    """Header and float matrix from a CSV written by :func:`write_csv`."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader if row]
    return header, np.asarray(data, dtype=np.float64).reshape(len(data), len(header))


def ensemble_header(dim):
    return [f"x{j}" for j in range(dim)]


def save_ensemble(ens, path):
    pts = ens.points
    return write_csv(path, ensemble_header(pts.shape[1]), (map(float, row) for row in pts))


def load_ensemble(path):
    header, data = read_matrix(path)
    if header != ensemble_header(len(header)):
        raise UsageError(f"{path}: unexpected ensemble header {header}")
    return Ensemble(data)


def save_curve(curve, directory, stride=1):
    """One CSV per frame plus ``manifest.json`` listing times and file names.

    ``stride > 1`` keeps every ``stride``-th frame and always the last one.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    keep = list(range(0, len(curve), stride))
    if keep[-1] != len(curve) - 1:
        keep.append(len(curve) - 1)
    names = []
    for k in keep:
        name = f"frame_{k:05d}.csv"
        save_ensemble(curve.frames[k], directory / name)
        names.append(name)
    manifest = {
        "times": [float(curve.times[k]) for k in keep],
        "grid_indices": keep,
        "frames": names,
        "n": curve.n,
        "dim": curve.dim,
    }
    write_json(directory / "manifest.json", manifest)
    return directory / "manifest.json"


def load_curve(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    frames = tuple(load_ensemble(directory / name) for name in manifest["frames"])
    return MeasureCurve(np.asarray(manifest["times"]), frames)


def save_trajectory(traj, path):
    d = traj.consensus.shape[1]
    header = ["t"] + [f"consensus_{j}" for j in range(d)] + ["best_f", "moment_p"]
    rows = (
        [float(t)] + [float(v) for v in c] + [float(b), float(m)]
        for t, c, b, m in zip(traj.times, traj.consensus, traj.best_f, traj.moment)
    )
    return write_csv(path, header, rows)


def save_solution(sol, directory, stride=1):
    """Curve manifest and frames, plus ``consensus.csv`` and ``picard_history.csv``."""
    directory = Path(directory)
    save_curve(sol.curve, directory / "curve", stride=stride)
    d = sol.consensus_curve.shape[1]
    header = ["t"] + [f"m_{j}" for j in range(d)] + ["phi_R", "moment_p"]
    rows = (
        [float(t)] + [float(v) for v in m] + [float(phi), float(mom)]
        for t, m, phi, mom in zip(sol.times, sol.consensus_curve, sol.phi, sol.moments)
    )
    write_csv(directory / "consensus.csv", header, rows)
    save_history(sol.history, directory / "picard_history.csv")
    return directory


def save_history(history, path):
    return write_csv(path, ["iter", "path_dist"],
                     ([i + 1, float(h)] for i, h in enumerate(history)))
