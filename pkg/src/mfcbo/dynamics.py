"""Particle-level consensus-based optimization.

The N-particle system

    dX_i = -lam (X_i - m_t) dt + S(X_i - m_t) dB_i,
    m_t  = sum_i w_i X_i,  w_i proportional to exp(-beta f(X_i)),

is integrated by explicit Euler-Maruyama with a fixed step. The consensus
point ``m_t`` is computed once per step from the pre-step ensemble. Noise
for particle ``i`` at step ``k`` comes from a counter-based stream keyed by
``(seed, i, k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _parallel
from ._validation import check_points, check_scalar, check_vector
from .exceptions import NumericalBlowUpError, UsageError
from .measure import Ensemble, TruncationConfig, _moment, cutoff_eta, moment_p
from .objective import check_values
from .rng import NoiseStream

__all__ = [
    "DiffusionModel",
    "CboParams",
    "SimulationState",
    "Trajectory",
    "SublinearityReport",
    "consensus_point",
    "consensus_weights",
    "drift_field",
    "diffusion_apply",
    "truncated_consensus",
    "em_step",
    "run_particle_cbo",
    "sublinearity_check",
]

DIFFUSION_KINDS = ("isotropic", "anisotropic", "custom")


@dataclass(frozen=True)
class DiffusionModel:
    """The diffusion map ``S: R^d -> R^{d x d}`` and its Lipschitz constant.

    Use the constructors :meth:`isotropic`, :meth:`anisotropic`,
    :meth:`custom` and :meth:`zero` rather than the raw initializer.
    """

    kind: str
    theta: float = 0.0
    L_S: float = 0.0
    matrix_fn: Optional[Callable] = field(default=None, compare=False)
    batch_apply: Optional[Callable] = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in DIFFUSION_KINDS:
            raise UsageError(f"unknown diffusion kind {self.kind!r}")
        if self.kind != "custom":
            check_scalar(self.theta, "theta", lower=0.0, strict_lower=True)
        elif self.matrix_fn is None and self.batch_apply is None:
            raise UsageError("a custom diffusion needs matrix_fn or batch_apply")
        check_scalar(self.L_S, "L_S", lower=0.0)

    @classmethod
    def isotropic(cls, theta, dim):
        """``S(u) = sqrt(2 theta) |u| I_d``; certified ``L_S = sqrt(2 theta d)``."""
        return cls("isotropic", float(theta), math.sqrt(2.0 * theta * dim), label="isotropic")

    @classmethod
    def anisotropic(cls, theta):
        """``S(u) = sqrt(2 theta) diag(u)``; ``L_S = sqrt(2 theta)``."""
        return cls("anisotropic", float(theta), math.sqrt(2.0 * theta), label="anisotropic")

    @classmethod
    def custom(cls, matrix_fn=None, L_S=0.0, batch_apply=None, label="custom"):
        return cls("custom", 0.0, float(L_S), matrix_fn, batch_apply, label)

    @classmethod
    def zero(cls):
        """``S == 0``: the deterministic dynamics."""
        return cls("custom", 0.0, 0.0, None, _zero_apply, "zero")

    @property
    def is_zero(self):
        return self.batch_apply is _zero_apply

    @property
    def scale(self):
        return math.sqrt(2.0 * self.theta)

    def matrix(self, u):
        """The d x d matrix ``S(u)``."""
        u = check_vector(u, name="u")
        d = u.shape[0]
        if self.kind == "isotropic":
            return self.scale * np.linalg.norm(u) * np.eye(d)
        if self.kind == "anisotropic":
            return self.scale * np.diag(u)
        if self.matrix_fn is not None:
            return np.asarray(self.matrix_fn(u), dtype=np.float64).reshape(d, d)
        # recover the matrix column by column from the batched action
        return self.apply(np.tile(u, (d, 1)), np.eye(d)).T

    def apply(self, U, Xi):
        """Row-wise ``S(U_i) Xi_i`` for arrays of shape (n, d)."""
        if self.kind == "isotropic":
            norms = np.sqrt(np.einsum("ij,ij->i", U, U))
            return (self.scale * norms)[:, None] * Xi
        if self.kind == "anisotropic":
            return self.scale * (U * Xi)
        if self.batch_apply is not None:
            return np.asarray(self.batch_apply(U, Xi), dtype=np.float64)
        mats = np.stack([self.matrix(u) for u in U])
        return np.einsum("nij,nj->ni", mats, Xi)

    def lipschitz_ratio(self, dim, n_pairs=1000, radius=10.0, seed=0):
        """Largest sampled ``|S(u) - S(v)|_F / (L_S |u - v|)``; at most 1 if ``L_S`` is valid."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_pairs):
            u, v = rng.uniform(-radius, radius, (2, dim))
            num = np.linalg.norm(self.matrix(u) - self.matrix(v), "fro")
            den = self.L_S * np.linalg.norm(u - v)
            if den == 0.0:
                if num > 0.0:
                    return math.inf
                continue
            worst = max(worst, num / den)
        return worst


def _zero_apply(U, Xi):
    return np.zeros_like(U)


@dataclass(frozen=True)
class CboParams:
    """Drift rate, inverse temperature, horizon, step, particle count and seed.

    The grid has ``K = round(T / dt)`` steps at times ``k * dt``.
    """

    lam: float
    beta: float
    T: float
    dt: float
    n: int
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.lam, "lambda", lower=0.0, strict_lower=True)
        check_scalar(self.beta, "beta", lower=0.0, strict_lower=True)
        check_scalar(self.T, "T", lower=0.0, strict_lower=True)
        check_scalar(self.dt, "dt", lower=0.0, strict_lower=True)
        check_scalar(self.n, "n", lower=1, integer=True)
        check_scalar(self.seed, "seed", lower=0, integer=True)
        if self.dt > self.T:
            raise UsageError(f"dt={self.dt} exceeds the horizon T={self.T}")

    @property
    def n_steps(self):
        return max(1, int(round(self.T / self.dt)))

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class SimulationState:
    """Grid index plus ensemble; the noise cursor is the pair (seed, t_index)."""

    t_index: int
    ensemble: Ensemble
    seed: int = 0

    @property
    def rng_cursor(self):
        return (self.seed, self.t_index)


@dataclass
class Trajectory:
    times: np.ndarray
    consensus: np.ndarray
    best_f: np.ndarray
    moment: np.ndarray
    final_ensemble: Ensemble
    p: float = 2.0

    def __len__(self):
        return self.times.shape[0]


@dataclass
class SublinearityReport:
    consensus_norm: float
    max_particle_norm: float
    moment: float
    C_M: float
    hull_bound_holds: bool
    sublinear_bound_holds: bool

    @property
    def ratio(self):
        return self.consensus_norm / self.moment if self.moment > 0 else 0.0


def consensus_weights(values, beta):
    """Normalized Gibbs weights ``exp(-beta f_i) / sum_j exp(-beta f_j)``.

    The largest exponent is subtracted before exponentiating, so no term
    overflows and at least one weight is exactly 1 before normalization.
    """
    values = check_values(np.asarray(values, dtype=np.float64))
    logw = -beta * values
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def _consensus(pts, values, beta):
    # elementwise product + numpy reduction: no BLAS, so no thread-dependent summation order
    w = consensus_weights(values, beta)
    m = np.sum(w[:, None] * pts, axis=0)
    # the exact value is a convex combination; clamp away round-off outside the box
    return np.clip(m, pts.min(axis=0), pts.max(axis=0))


def consensus_point(ens, obj, beta):
    """Gibbs-weighted mean of the particle positions."""
    check_scalar(beta, "beta", lower=0.0, strict_lower=True)
    pts = ens.points if isinstance(ens, Ensemble) else check_points(ens, dim=obj.dim)
    return _consensus(pts, obj.batch(pts), beta)


def drift_field(x, m, lam):
    """``-lam (x - m)``."""
    return -lam * (np.asarray(x, dtype=np.float64) - np.asarray(m, dtype=np.float64))


def diffusion_apply(model, u, xi):
    """``S(u) xi`` for single vectors ``u`` and ``xi``."""
    u = check_vector(u, name="u")
    xi = check_vector(xi, u.shape[0], name="xi")
    return model.apply(u.reshape(1, -1), xi.reshape(1, -1))[0]


def _truncated(pts, obj, beta, trunc):
    phi = cutoff_eta(_moment(pts, trunc.p), trunc.R)
    if phi == 0.0:
        return np.zeros(pts.shape[1]), 0.0
    m = _consensus(pts, obj.batch(pts), beta)
    return (m if phi == 1.0 else phi * m), phi


def truncated_consensus(ens, obj, beta, cfg):
    """Consensus point scaled by the moment cut-off of the ensemble.

    When the cut-off vanishes the result is the origin, so the fields reduce
    to ``v = -lam x`` and ``sigma = S(x)``.
    """
    check_scalar(beta, "beta", lower=0.0, strict_lower=True)
    pts = ens.points if isinstance(ens, Ensemble) else check_points(ens, dim=obj.dim)
    return _truncated(pts, obj, beta, cfg)[0]


def _euler_update(X, m, lam, dt, model, noise, step, out, offset=0):
    """Write one Euler-Maruyama step of rows of ``X`` into ``out``.

    ``noise`` is either a NoiseStream or a precomputed (n, d) array of
    standard normals for this step. ``offset`` is the global index of row 0.
    """
    sqdt = math.sqrt(dt)
    n, d = X.shape

    def block(s, e):
        U = X[s:e] - m
        upd = X[s:e] - (lam * dt) * U
        if not model.is_zero:
            if isinstance(noise, NoiseStream):
                xi = noise.normals(step, np.arange(offset + s, offset + e), d)
            else:
                xi = noise[s:e]
            upd = upd + model.apply(U, xi) * sqdt
        out[s:e] = upd

    _parallel.for_each_block(block, n)
    bad = ~np.isfinite(out)
    if bad.any():
        i = int(np.flatnonzero(bad.any(axis=1))[0])
        raise NumericalBlowUpError(
            f"non-finite position for particle {offset + i} at step {step + 1}",
            particle=offset + i, step=step + 1,
        )
    return out


def em_step(state, params, model, obj, trunc=None):
    """Advance the ensemble by one Euler-Maruyama step and return the new state."""
    if state.t_index >= params.n_steps:
        raise UsageError(f"t_index={state.t_index} is already at the end of the grid")
    X = state.ensemble.points
    if trunc is None:
        m = _consensus(X, obj.batch(X), params.beta)
    else:
        m = _truncated(X, obj, params.beta, trunc)[0]
    out = np.empty_like(X)
    _euler_update(X, m, params.lam, params.dt, model, NoiseStream(params.seed),
                  state.t_index, out)
    return SimulationState(state.t_index + 1, Ensemble._trusted(out), state.seed)


def run_particle_cbo(params, model, obj, init, trunc=None, moment_order=None):
    """Integrate the particle system over the full grid.

    Records, at every grid time, the (truncated if ``trunc`` is given)
    consensus point, the best objective value among the particles, and the
    p-th moment (``p`` from ``trunc``, else ``moment_order``, else 2).
    """
    init = init if isinstance(init, Ensemble) else Ensemble(init)
    if init.n != params.n:
        raise UsageError(f"initial ensemble has {init.n} particles, params.n={params.n}")
    if init.dim != obj.dim:
        raise UsageError(f"initial ensemble has dimension {init.dim}, objective {obj.dim}")
    p = trunc.p if trunc is not None else (moment_order or 2.0)
    K = params.n_steps
    consensus = np.empty((K + 1, init.dim))
    best = np.empty(K + 1)
    moments = np.empty(K + 1)
    noise = NoiseStream(params.seed)

    X = init.points.copy()
    buf = np.empty_like(X)
    for k in range(K + 1):
        values = check_values(obj.batch(X))
        if trunc is None:
            m = _consensus(X, values, params.beta)
        else:
            m = _truncated(X, obj, params.beta, trunc)[0]
        consensus[k] = m
        best[k] = values.min()
        moments[k] = _moment(X, p)
        if k < K:
            _euler_update(X, m, params.lam, params.dt, model, noise, k, buf)
            X, buf = buf, X
    return Trajectory(params.times, consensus, best, moments, Ensemble._trusted(X), p)


def sublinearity_check(ens, obj, beta, p, C_M):
    """Compare ``|consensus|`` with the hull bound and with ``C_M * m_p``.

    ``C_M`` is supplied by the caller; the hull bound
    ``|consensus| <= max_i |X_i|`` always holds.
    """
    check_scalar(C_M, "C_M", lower=0.0, strict_lower=True)
    m = consensus_point(ens, obj, beta)
    pts = ens.points if isinstance(ens, Ensemble) else check_points(ens)
    norm_m = float(np.linalg.norm(m))
    max_norm = float(np.sqrt(np.einsum("ij,ij->i", pts, pts)).max())
    mom = moment_p(pts, p)
    slack = 1e-12 * max(1.0, max_norm)
    return SublinearityReport(
        consensus_norm=norm_m,
        max_particle_norm=max_norm,
        moment=mom,
        C_M=float(C_M),
        hull_bound_holds=norm_m <= max_norm + slack,
        sublinear_bound_holds=norm_m <= C_M * mom + slack,
    )
