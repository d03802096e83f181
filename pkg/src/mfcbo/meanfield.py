"""Monte Carlo solution of the (truncated) mean-field CBO equation.

The law of the representative particle is approximated by ``m_samples``
sample paths. The fields depend on the law only through one vector per time,
the cut-off-scaled consensus point, so a Picard step freezes that vector
curve, integrates the resulting linear-in-law SDE, and reads the new curve
off the new paths. Initial samples and Brownian increments are drawn once
and reused by every iteration (synchronous coupling), which makes the
coupled path distance between iterates an upper bound on their Wasserstein
distance in path space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_order, check_points, check_scalar
from .dynamics import _consensus, _euler_update
from .exceptions import UsageError
from .measure import (
    ASSIGNMENT_MAX_N,
    CUTOFF_LIPSCHITZ,
    Ensemble,
    MeasureCurve,
    TruncationConfig,
    _moment,
    cutoff_eta,
    path_distance_upper,
    wasserstein_assignment,
)
from .objective import check_values, critical_exponent
from .rng import NoiseStream

__all__ = [
    "PicardConfig",
    "MeanFieldSolution",
    "PicardResult",
    "ConstantsReport",
    "solve_auxiliary",
    "picard_map",
    "picard_fixed_point",
    "truncated_meanfield_solve",
    "moment_bound_constants",
    "verify_moment_bound",
    "bdg_constant",
    "contraction_constants",
    "constants_report",
    "propagation_of_chaos",
    "uniqueness_probe",
    "derive_seed",
]

# precompute the whole noise table below this many bytes, stream it above
_NOISE_TABLE_BYTES = 256 * 2**20


@dataclass(frozen=True)
class PicardConfig:
    m_samples: int = 2000
    max_iters: int = 30
    tol: float = 1e-2
    p: float = 2.0

    def __post_init__(self):
        check_scalar(self.m_samples, "m_samples", lower=2, integer=True)
        check_scalar(self.max_iters, "max_iters", lower=1, integer=True)
        check_scalar(self.tol, "tol", lower=0.0, strict_lower=True)
        check_order(self.p)


@dataclass
class MeanFieldSolution:
    """Sample paths of the representative particle and derived curves.

    ``consensus_curve[k]`` is the (truncated) consensus point of
    ``curve.frames[k]``; ``exit_index`` is the first grid index whose p-th
    moment exceeds ``R``, or ``None`` if there is none (or no truncation).
    """

    curve: MeasureCurve
    consensus_curve: np.ndarray
    phi: np.ndarray
    moments: np.ndarray
    exit_index: Optional[int]
    p: float
    R: Optional[float] = None
    history: tuple = ()
    converged: bool = True

    @property
    def times(self):
        return self.curve.times


@dataclass
class PicardResult:
    solution: MeanFieldSolution
    history: list
    converged: bool

    @property
    def iterations(self):
        return len(self.history)


@dataclass
class MomentConstants:
    C_1: float
    C_0: float


@dataclass
class ContractionConstants:
    L_v_tilde: float
    L_sigma_tilde: float
    K_0: float
    K: float
    log_K: float
    n_contraction: int


@dataclass
class ConstantsReport:
    """Explicit constants for one run; ``C_M`` and ``L_M_R`` are caller inputs."""

    p: float
    p_M: float
    c_p: float
    L_S: float
    L_phi_R: float
    C_M: float
    L_M_R: float
    L_v_tilde: float
    L_sigma_tilde: float
    C_1: float
    C_0: float
    K_0: float
    K: float
    log_K: float
    n_contraction: int
    p_admissible: bool
    notes: str = "C_M and L_M_R are caller-supplied, not derived"

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class MomentBoundReport:
    sup_moment: float
    initial_moment: float
    bound: float
    margin: float
    passed: bool


@dataclass
class ChaosTable:
    rows: list
    medians: dict
    inversions: int
    max_inversions: int
    p: float

    @property
    def trend_holds(self):
        return self.inversions <= self.max_inversions


@dataclass
class UniquenessReport:
    guess_distance: float
    tol: float
    guesses_agree: bool
    bitwise_identical: bool
    law_distances: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.guesses_agree and self.bitwise_identical


def derive_seed(*parts):
    """A 64-bit seed determined by a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


# -- integration ---------------------------------------------------------------

def _integrate(gamma, X0, lam, dt, model, noise):
    """Paths of dX = -lam (X - gamma_t) dt + S(X - gamma_t) dB on the grid of ``gamma``.

    ``noise`` is a NoiseStream or a table of shape (K, n, d).
    """
    K = gamma.shape[0] - 1
    paths = np.empty((K + 1,) + X0.shape)
    paths[0] = X0
    for k in range(K):
        step_noise = noise if noise is None or isinstance(noise, NoiseStream) else noise[k]
        _euler_update(paths[k], gamma[k], lam, dt, model, step_noise, k, paths[k + 1])
    return paths


def _noise_for(seed, K, n, d, model):
    if model.is_zero:
        return None
    if K * n * d * 8 <= _NOISE_TABLE_BYTES:
        return NoiseStream(seed).table(K, n, d)
    return NoiseStream(seed)


def _check_frozen(frozen, K, d):
    gamma = np.asarray(frozen, dtype=np.float64)
    if gamma.ndim == 1 and d == 1:
        gamma = gamma.reshape(-1, 1)
    if gamma.shape != (K + 1, d):
        raise UsageError(f"frozen curve must have shape {(K + 1, d)}, got {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise UsageError("frozen curve has non-finite entries")
    return gamma


def solve_auxiliary(frozen, init, params, model, noise_seed=None):
    """Integrate the SDE driven by a frozen consensus curve, one path per sample.

    ``frozen`` holds one d-vector per grid point. Sample ``i`` uses the noise
    stream ``(noise_seed, i)`` (``params.seed`` by default).
    """
    X0 = init.points if isinstance(init, Ensemble) else check_points(init, name="init")
    K = params.n_steps
    gamma = _check_frozen(frozen, K, X0.shape[1])
    seed = params.seed if noise_seed is None else noise_seed
    noise = NoiseStream(seed)
    return MeasureCurve.from_array(params.times, _integrate(gamma, X0, params.lam, params.dt,
                                                            model, noise))


def _law_curve(paths, obj, beta, trunc, p):
    """Per-frame (truncated) consensus point, cut-off value and p-th moment."""
    K1, _, d = paths.shape
    gamma = np.empty((K1, d))
    phi = np.ones(K1)
    moments = np.empty(K1)
    for k in range(K1):
        X = paths[k]
        moments[k] = _moment(X, p)
        if trunc is not None:
            phi[k] = cutoff_eta(_moment(X, trunc.p), trunc.R)
        if phi[k] == 0.0:
            gamma[k] = 0.0
            continue
        m = _consensus(X, check_values(obj.batch(X)), beta)
        gamma[k] = m if phi[k] == 1.0 else phi[k] * m
    return gamma, phi, moments


def picard_map(curve, params, model, obj, trunc=None, noise_seed=None):
    """One Picard step: read the consensus curve off ``curve`` and re-integrate.

    The initial samples are the rows of ``curve.frames[0]`` and the noise is
    keyed by ``noise_seed`` (``params.seed`` by default), so repeated calls
    with the same seed are synchronously coupled.
    """
    p = trunc.p if trunc is not None else 2.0
    gamma, _, _ = _law_curve(curve.as_array(), obj, params.beta, trunc, p)
    return solve_auxiliary(gamma, curve.frames[0], params, model, noise_seed)


def _initial_samples(init_sampler, cfg, dim, seed):
    if isinstance(init_sampler, Ensemble) or isinstance(init_sampler, np.ndarray):
        X0 = check_points(init_sampler.points if isinstance(init_sampler, Ensemble)
                          else init_sampler, name="init", dim=dim)
        if X0.shape[0] != cfg.m_samples:
            raise UsageError(f"{X0.shape[0]} initial samples, m_samples={cfg.m_samples}")
        return X0
    X0 = np.asarray(init_sampler(cfg.m_samples, dim, seed), dtype=np.float64)
    return check_points(X0, name="init", dim=dim)


def picard_fixed_point(cfg, params, model, obj, trunc=None, init_sampler=None, *,
                       noise_seed=None, init_seed=None, initial_consensus=None):
    """Iterate the Picard map to a fixed point at Monte Carlo resolution.

    Iteration 0 integrates the dynamics with the frozen curve
    ``initial_consensus`` (the origin at every time by default). Each later
    iteration applies :func:`picard_map`; the coupled path distance between
    successive iterates over the whole horizon is recorded, and the loop
    stops once it drops below ``cfg.tol`` or after ``cfg.max_iters``
    iterations. Non-convergence is reported through ``converged=False``
    together with the full history.

    ``init_sampler`` is a sampler ``(n, dim, seed) -> array`` or an array of
    ``m_samples`` initial points. Seeds default to ``params.seed`` for the
    noise and ``derive_seed(params.seed, 1)`` for the initial draw.
    """
    if init_sampler is None:
        raise UsageError("init_sampler is required")
    dim = obj.dim
    K = params.n_steps
    noise_seed = params.seed if noise_seed is None else noise_seed
    init_seed = derive_seed(params.seed, 1) if init_seed is None else init_seed
    X0 = _initial_samples(init_sampler, cfg, dim, init_seed)
    p = trunc.p if trunc is not None else cfg.p
    noise = _noise_for(noise_seed, K, X0.shape[0], dim, model)

    gamma = (np.zeros((K + 1, dim)) if initial_consensus is None
             else _check_frozen(initial_consensus, K, dim))
    times = params.times
    paths = _integrate(gamma, X0, params.lam, params.dt, model, noise)
    curve = MeasureCurve.from_array(times, paths)
    history = []
    converged = False
    for _ in range(cfg.max_iters):
        gamma, _, _ = _law_curve(paths, obj, params.beta, trunc, p)
        new_paths = _integrate(gamma, X0, params.lam, params.dt, model, noise)
        new_curve = MeasureCurve.from_array(times, new_paths)
        dist = path_distance_upper(new_curve, curve, cfg.p)
        history.append(dist)
        paths, curve = new_paths, new_curve
        if dist < cfg.tol:
            converged = True
            break

    gamma, phi, moments = _law_curve(paths, obj, params.beta, trunc, p)
    exit_index = None
    if trunc is not None:
        above = np.flatnonzero(moments > trunc.R)
        exit_index = int(above[0]) if above.size else None
    solution = MeanFieldSolution(
        curve=curve, consensus_curve=gamma, phi=phi, moments=moments,
        exit_index=exit_index, p=p, R=None if trunc is None else trunc.R,
        history=tuple(history), converged=converged,
    )
    return PicardResult(solution, history, converged)


def truncated_meanfield_solve(R, cfg, params, model, obj, init_sampler, **kwargs):
    """Fixed point of the R-truncated problem with exit-time detection.

    Before ``exit_index`` every moment is at most ``R``, the cut-off equals 1
    and the solution coincides with the untruncated mean-field dynamics.
    """
    check_scalar(R, "R", lower=0.0, strict_lower=True)
    trunc = TruncationConfig(float(R), cfg.p)
    return picard_fixed_point(cfg, params, model, obj, trunc, init_sampler, **kwargs).solution


# -- constants -----------------------------------------------------------------

def moment_bound_constants(lam, p, d, L_S, C_M, T):
    """Growth rate ``C_1`` and factor ``C_0 = exp(C_1 T)^(1/p)`` of the p-th moment.

    ``C_1 = lam p (1 + C_M) + p (p - 2 + d) L_S^2 (1 + C_M^2)``.
    """
    if not p >= 2:
        raise UsageError(f"moment bound needs p >= 2, got {p}")
    for name, value in (("lambda", lam), ("L_S", L_S), ("C_M", C_M), ("T", T)):
        check_scalar(value, name, lower=0.0)
    check_scalar(d, "d", lower=1, integer=True)
    C_1 = lam * p * (1.0 + C_M) + p * (p - 2.0 + d) * L_S**2 * (1.0 + C_M**2)
    return MomentConstants(C_1=C_1, C_0=math.exp(C_1 * T / p))


def verify_moment_bound(sol, C_0, p=None, slack=1.0):
    """Check ``sup_t m_p(rho_t) <= slack * C_0 * m_p(rho_0)`` on the solution frames."""
    p = sol.p if p is None else check_order(p)
    moments = sol.moments if p == sol.p else np.array(
        [_moment(f.points, p) for f in sol.curve.frames])
    if moments.size == 0:
        raise UsageError("empty solution")
    sup, m0 = float(moments.max()), float(moments[0])
    bound = slack * C_0 * m0
    return MomentBoundReport(sup, m0, bound, bound - sup, sup <= bound)


def bdg_constant(p):
    """``[p^(p+1) (p-1)^(1-p) / 2]^(p/2)``, the Burkholder-Davis-Gundy constant for p >= 2."""
    if not isinstance(p, (int, float)) or not p >= 2:
        raise UsageError(f"BDG constant needs p >= 2, got {p!r}")
    p = float(p)
    return (0.5 * p ** (p + 1.0) * (p - 1.0) ** (1.0 - p)) ** (p / 2.0)


def _contraction_steps(log_KT, p):
    """Smallest n >= 1 with ((K T)^n / n!)^(1/p) < 1, i.e. n log(KT) < log n!."""
    if log_KT < 0.0:
        return 1
    if log_KT > 700.0:
        # n is about e K T, beyond double range
        return -1

    def ok(n):
        return n * log_KT < math.lgamma(n + 1.0)

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def contraction_constants(lam, L_S, L_M_R, L_phi_R, C_M, R, p, T):
    """Lipschitz constants of the truncated fields and the Picard contraction constants.

    ``K_0`` is evaluated at ``t = T``; ``K = exp(K_0 T) K_0`` may overflow to
    ``inf``, in which case ``log_K`` still holds its logarithm.
    ``n_contraction`` is the smallest ``n`` making the n-fold map a
    contraction by the factorial bound (``-1`` if that n exceeds double range).
    """
    if not lam > 0:
        raise UsageError("lambda must be > 0 (the diffusion constant divides by it)")
    for name, value in (("L_S", L_S), ("L_M_R", L_M_R), ("L_phi_R", L_phi_R),
                        ("C_M", C_M), ("R", R), ("T", T)):
        check_scalar(value, name, lower=0.0)
    if not p >= 2:
        raise UsageError(f"contraction constants need p >= 2, got {p}")
    L_v = max(lam * (L_M_R + C_M * (R + 1.0) * L_phi_R), lam)
    L_sigma = L_S / lam * L_v
    K_0 = 2.0 ** (p - 1.0) * (
        (2.0 * T) ** (p - 1.0) * L_v**p
        + 2.0 ** (p - 1.0) * bdg_constant(p) * T ** ((p - 2.0) / 2.0) * L_sigma**p
    )
    log_K = K_0 * T + math.log(K_0) if K_0 > 0 else -math.inf
    K = math.exp(log_K) if log_K < 709.0 else math.inf
    log_KT = log_K + math.log(T) if T > 0 else -math.inf
    return ContractionConstants(L_v, L_sigma, K_0, K, log_K, _contraction_steps(log_KT, p))


def constants_report(obj, model, params, trunc, C_M=1.0, L_M_R=1.0):
    """Every explicit constant for a run, from the run parameters and caller-supplied C_M, L_M_R."""
    p = trunc.p
    p_M = critical_exponent(obj.params.s, obj.params.ell)
    mb = moment_bound_constants(params.lam, p, obj.dim, model.L_S, C_M, params.T)
    cc = contraction_constants(params.lam, model.L_S, L_M_R, CUTOFF_LIPSCHITZ, C_M,
                               trunc.R, p, params.T)
    return ConstantsReport(
        p=p, p_M=p_M, c_p=bdg_constant(p), L_S=model.L_S, L_phi_R=CUTOFF_LIPSCHITZ,
        C_M=C_M, L_M_R=L_M_R, L_v_tilde=cc.L_v_tilde, L_sigma_tilde=cc.L_sigma_tilde,
        C_1=mb.C_1, C_0=mb.C_0, K_0=cc.K_0, K=cc.K, log_K=cc.log_K,
        n_contraction=cc.n_contraction, p_admissible=p >= max(2.0, p_M),
    )


# -- experiments -----------------------------------------------------------------

def propagation_of_chaos(n_list, reps, params, model, obj, meanfield_ref, init_sampler,
                         p=2.0, max_inversions=None):
    """Distance between particle-system and mean-field final marginals as N grows.

    For each N and repetition, runs the N-particle system from fresh
    ``init_sampler`` draws and computes the exact W_p between its final
    empirical measure and an N-point subsample (without replacement) of the
    mean-field final marginal. Reports the median per N and the number of
    adjacent increases of the medians; by default one increase is tolerated
    when more than two N are compared.
    """
    from .dynamics import CboParams, run_particle_cbo

    n_list = [check_scalar(n, "N", lower=1, integer=True) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise UsageError("n_list must be strictly ascending")
    reps = check_scalar(reps, "reps", lower=1, integer=True)
    ref = meanfield_ref.curve.frames[-1].points
    if n_list[-1] > ASSIGNMENT_MAX_N:
        raise UsageError(f"N={n_list[-1]} exceeds the exact-distance cap {ASSIGNMENT_MAX_N}")
    if n_list[-1] > ref.shape[0]:
        raise UsageError(f"N={n_list[-1]} exceeds the mean-field sample count {ref.shape[0]}")

    rows = []
    medians = {}
    for N in n_list:
        dists = []
        for rep in range(reps):
            seed = derive_seed(params.seed, N, rep)
            run = CboParams(params.lam, params.beta, params.T, params.dt, N, seed)
            X0 = init_sampler(N, obj.dim, derive_seed(seed, 1))
            traj = run_particle_cbo(run, model, obj, X0)
            pick = np.random.default_rng(derive_seed(seed, 2)).choice(ref.shape[0], N, replace=False)
            pick.sort()
            w = wasserstein_assignment(traj.final_ensemble, ref[pick], p)
            rows.append((N, rep, w))
            dists.append(w)
        medians[N] = float(np.median(dists))
    meds = [medians[N] for N in n_list]
    inversions = sum(1 for a, b in zip(meds, meds[1:]) if b > a)
    if max_inversions is None:
        max_inversions = 1 if len(n_list) > 2 else 0
    return ChaosTable(rows, medians, inversions, max_inversions, p)


def uniqueness_probe(params, model, obj, trunc, cfg, seeds, init_sampler,
                     alternative_guess=None, law_sizes=None):
    """Empirical pathwise-uniqueness checks for the (truncated) mean-field problem.

    (a) Two different Picard starting curves under the same noise must reach
    fixed points within ``2 * tol`` in coupled path distance. (b) Repeating a
    run must reproduce it bit for bit. Also reports, without a threshold,
    the W_p distance between final marginals obtained with the two noise
    seeds in ``seeds`` for each sample size in ``law_sizes``.
    """
    seed_a, seed_b = seeds
    K, d = params.n_steps, obj.dim
    if alternative_guess is None:
        alternative_guess = np.ones((K + 1, d))
    kw = dict(noise_seed=seed_a, init_seed=derive_seed(seed_a, 1))
    first = picard_fixed_point(cfg, params, model, obj, trunc, init_sampler, **kw)
    again = picard_fixed_point(cfg, params, model, obj, trunc, init_sampler, **kw)
    other = picard_fixed_point(cfg, params, model, obj, trunc, init_sampler,
                               initial_consensus=alternative_guess, **kw)
    gap = path_distance_upper(first.solution.curve, other.solution.curve, cfg.p)
    identical = (
        first.solution.curve.as_array().tobytes() == again.solution.curve.as_array().tobytes()
        and first.history == again.history
    )

    law = {}
    sizes = law_sizes or (max(2, cfg.m_samples // 4), cfg.m_samples)
    for m in sizes:
        sub = PicardConfig(m, cfg.max_iters, cfg.tol, cfg.p)
        ends = []
        for s in (seed_a, seed_b):
            res = picard_fixed_point(sub, params, model, obj, trunc, init_sampler,
                                     noise_seed=s, init_seed=derive_seed(s, 1))
            ends.append(res.solution.curve.frames[-1].points[:ASSIGNMENT_MAX_N])
        law[int(m)] = wasserstein_assignment(ends[0], ends[1], cfg.p)
    return UniquenessReport(gap, cfg.tol, gap <= 2.0 * cfg.tol, identical, law)
