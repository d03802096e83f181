"""Uniform empirical measures and distances between them.

An :class:`Ensemble` stands for the measure ``(1/N) sum_i delta_{X_i}``.
A :class:`MeasureCurve` is a time-indexed sequence of ensembles whose rows
are sample paths: row ``i`` of every frame belongs to the same path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import check_order, check_points, check_scalar
from .exceptions import UsageError

__all__ = [
    "Ensemble",
    "MeasureCurve",
    "TruncationConfig",
    "ASSIGNMENT_MAX_N",
    "CUTOFF_LIPSCHITZ",
    "moment_p",
    "wasserstein_1d",
    "wasserstein_assignment",
    "wasserstein_to_dirac0",
    "cutoff_eta",
    "truncation_phi",
    "path_distance_upper",
]

ASSIGNMENT_MAX_N = 512
# sup |q'| for the quintic smoothstep q(u) = 6u^5 - 15u^4 + 10u^3, attained at u = 1/2
CUTOFF_LIPSCHITZ = 15.0 / 8.0


class Ensemble:
    """N particles in R^d, read as a uniform empirical measure."""

    __slots__ = ("_points",)

    def __init__(self, points):
        pts = check_points(points, name="points").copy()
        pts.setflags(write=False)
        self._points = pts

    @classmethod
    def _trusted(cls, points):
        # skips validation for arrays produced inside the simulators
        obj = cls.__new__(cls)
        pts = np.ascontiguousarray(points, dtype=np.float64)
        pts.setflags(write=False)
        obj._points = pts
        return obj

    @property
    def points(self):
        return self._points

    @property
    def n(self):
        return self._points.shape[0]

    @property
    def dim(self):
        return self._points.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Ensemble(n={self.n}, dim={self.dim})"


@dataclass(frozen=True)
class MeasureCurve:
    times: np.ndarray
    frames: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or times.size == 0:
            raise UsageError("times must be a non-empty 1-D grid")
        if np.any(np.diff(times) <= 0):
            raise UsageError("times must be strictly increasing")
        frames = tuple(self.frames)
        if len(frames) != times.size:
            raise UsageError(f"{len(frames)} frames for {times.size} time points")
        n, d = frames[0].n, frames[0].dim
        if any(f.n != n or f.dim != d for f in frames):
            raise UsageError("all frames must share particle count and dimension")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_array(cls, times, paths):
        """Build from an array of shape (K + 1, n, d)."""
        paths = np.asarray(paths, dtype=np.float64)
        return cls(times, tuple(Ensemble._trusted(p) for p in paths))

    def as_array(self):
        return np.stack([f.points for f in self.frames])

    @property
    def n(self):
        return self.frames[0].n

    @property
    def dim(self):
        return self.frames[0].dim

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class TruncationConfig:
    R: float
    p: float = 2.0

    def __post_init__(self):
        check_scalar(self.R, "R", lower=0.0, strict_lower=True)
        check_order(self.p)


def _as_points(ens):
    return ens.points if isinstance(ens, Ensemble) else check_points(ens)


def moment_p(ens, p):
    """``((1/N) sum_i |X_i|^p)^(1/p)``."""
    p = check_order(p)
    pts = _as_points(ens)
    return _moment(pts, p)


def _row_norms(pts):
    norms = np.sqrt(np.einsum("ij,ij->i", pts, pts))
    if not np.all(np.isfinite(norms)):
        # squares overflowed; rescale each row by its largest entry
        scale = np.abs(pts).max(axis=1)
        safe = np.where(scale > 0, scale, 1.0)
        norms = scale * np.sqrt(np.einsum("ij,ij->i", pts / safe[:, None], pts / safe[:, None]))
    return norms


def _moment(pts, p):
    return _power_mean(_row_norms(pts), p)


def _power_mean(values, p):
    # scaled by the max so large p does not overflow
    top = values.max()
    if top == 0.0:
        return 0.0
    return float(top * np.mean((values / top) ** p) ** (1.0 / p))


def wasserstein_1d(a, b, p):
    """Exact W_p between two equal-size 1-D samples by matching order statistics."""
    p = check_order(p)
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size != b.size:
        raise UsageError(f"samples have different sizes ({a.size} vs {b.size})")
    if a.size == 0:
        raise UsageError("samples must be non-empty")
    return _power_mean(np.abs(a - b), p)


def wasserstein_assignment(ea, eb, p):
    """Exact W_p between two equal-size empirical measures.

    Solves the optimal assignment problem on the cost matrix
    ``|X_i - Y_j|^p``. Restricted to ``n <= 512``; for larger ensembles use
    :func:`path_distance_upper` on coupled samples or a 1-D projection.
    """
    p = check_order(p)
    A, B = _as_points(ea), _as_points(eb)
    if A.shape[0] != B.shape[0]:
        raise UsageError(f"ensembles have different sizes ({A.shape[0]} vs {B.shape[0]})")
    if A.shape[1] != B.shape[1]:
        raise UsageError(f"ensembles have different dimensions ({A.shape[1]} vs {B.shape[1]})")
    n = A.shape[0]
    if n > ASSIGNMENT_MAX_N:
        raise UsageError(
            f"exact assignment is capped at n={ASSIGNMENT_MAX_N} (got {n}); "
            "use path_distance_upper on coupled samples or a 1-D projection instead"
        )
    diff = A[:, None, :] - B[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    top = dist.max()
    if top == 0.0:
        return 0.0
    cost = (dist / top) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(top * np.mean(cost[rows, cols]) ** (1.0 / p))


def wasserstein_to_dirac0(ens, p):
    """W_p between the ensemble and the point mass at the origin.

    The only coupling with a Dirac target sends every particle to 0, so this
    is the mean of ``|X_i|^p`` raised to ``1/p``, i.e. the p-th moment.
    """
    p = check_order(p)
    pts = _as_points(ens)
    return _power_mean(_row_norms(pts), p)


def _smoothstep(u):
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def cutoff_eta(z, R):
    """Nonincreasing cut-off: 1 on ``z <= R``, 0 on ``z >= R + 1``.

    In between it falls as ``1 - q(z - R)`` with the quintic smoothstep
    ``q``, which is C^2 and Lipschitz with constant 15/8. Accepts scalars or
    arrays.
    """
    check_scalar(R, "R", lower=0.0, strict_lower=True)
    z = np.asarray(z, dtype=np.float64)
    u = np.clip(z - R, 0.0, 1.0)
    out = 1.0 - _smoothstep(u)
    out = np.where(z <= R, 1.0, np.where(z >= R + 1.0, 0.0, out))
    return float(out) if out.ndim == 0 else out


def truncation_phi(ens, cfg):
    """Cut-off applied to the p-th moment of the ensemble."""
    return cutoff_eta(moment_p(ens, cfg.p), cfg.R)


def path_distance_upper(a, b, p, t_index=None):
    """Coupled upper bound on the path-space distance up to grid index ``t_index``.

    Row ``i`` of ``a`` and row ``i`` of ``b`` are treated as coupled paths
    (same noise, same initial sample). Returns
    ``((1/N) sum_i max_{k <= t_index} |X^a_{i,k} - X^b_{i,k}|^p)^(1/p)``,
    which dominates the optimal-coupling value. ``t_index=None`` means the
    last grid point.
    """
    p = check_order(p)
    if not np.array_equal(a.times, b.times):
        raise UsageError("curves are on different time grids")
    if a.n != b.n or a.dim != b.dim:
        raise UsageError("curves have different particle counts or dimensions")
    last = len(a) - 1
    if t_index is None:
        t_index = last
    t_index = check_scalar(t_index, "t_index", lower=0, upper=last, integer=True)
    sup = np.zeros(a.n)
    for k in range(t_index + 1):
        diff = a.frames[k].points - b.frames[k].points
        np.maximum(sup, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=sup)
    return _power_mean(sup, p)


def path_distance_profile(a, b, p):
    """``path_distance_upper`` at every grid index, computed in one pass."""
    p = check_order(p)
    if not np.array_equal(a.times, b.times) or a.n != b.n or a.dim != b.dim:
        raise UsageError("curves are not on a common grid")
    sup = np.zeros(a.n)
    out = np.empty(len(a))
    for k in range(len(a)):
        diff = a.frames[k].points - b.frames[k].points
        np.maximum(sup, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=sup)
        out[k] = _power_mean(sup, p)
    return out
