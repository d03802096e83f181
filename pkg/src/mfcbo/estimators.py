"""scikit-learn style wrappers around the particle and mean-field solvers.

``fit(X)`` takes the initial samples (one row per particle). Hyperparameters
live in ``__init__`` untouched, so ``get_params``/``set_params``/``clone``
work as usual; everything learned ends in ``_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points
from .dynamics import CboParams, DiffusionModel, run_particle_cbo
from .measure import TruncationConfig, moment_p
from .meanfield import PicardConfig, moment_bound_constants, picard_fixed_point, solve_auxiliary
from .objective import ObjectiveFunction, builtin_objective


def _objective(spec, dim):
    if isinstance(spec, ObjectiveFunction):
        if spec.dim != dim:
            raise ValueError(f"objective has dimension {spec.dim}, data has {dim}")
        return spec
    return builtin_objective(spec, dim)


def _diffusion(kind, theta, dim):
    if isinstance(kind, DiffusionModel):
        return kind
    if kind == "isotropic":
        return DiffusionModel.isotropic(theta, dim)
    if kind == "anisotropic":
        return DiffusionModel.anisotropic(theta)
    if kind == "zero":
        return DiffusionModel.zero()
    raise ValueError(f"unknown diffusion {kind!r}")


class ConsensusBasedOptimizer(TransformerMixin, BaseEstimator):
    """Particle CBO: ``fit`` runs the swarm from ``X`` and stores the consensus.

    ``transform`` runs the same dynamics (same seed) from new starting points
    and returns the final ensemble.
    """

    def __init__(self, objective="quadratic", lam=1.0, beta=10.0, T=5.0, dt=0.01,
                 diffusion="isotropic", theta=0.25, seed=0):
        self.objective = objective
        self.lam = lam
        self.beta = beta
        self.T = T
        self.dt = dt
        self.diffusion = diffusion
        self.theta = theta
        self.seed = seed

    def _run(self, X):
        X = check_points(X, name="X")
        obj = _objective(self.objective, X.shape[1])
        model = _diffusion(self.diffusion, self.theta, X.shape[1])
        params = CboParams(self.lam, self.beta, self.T, self.dt, X.shape[0], self.seed)
        return obj, run_particle_cbo(params, model, obj, X)

    def fit(self, X, y=None):
        obj, traj = self._run(X)
        self.n_features_in_ = obj.dim
        self.trajectory_ = traj
        self.consensus_ = traj.consensus[-1].copy()
        self.best_f_ = float(traj.best_f[-1])
        self.objective_ = obj
        return self

    def transform(self, X):
        check_is_fitted(self, "consensus_")
        X = check_points(X, name="X", dim=self.n_features_in_)
        return self._run(X)[1].final_ensemble.points.copy()

    def score(self, X=None, y=None):
        """Negative objective value at the fitted consensus point (higher is better)."""
        check_is_fitted(self, "consensus_")
        return -float(self.objective_(self.consensus_))


class MeanFieldCBO(TransformerMixin, BaseEstimator):
    """Truncated mean-field CBO solved by Picard iteration.

    ``fit(X)`` uses the rows of ``X`` as samples of the initial law.
    ``R="auto"`` picks the radius from the moment bound so the truncation
    never activates; ``R=None`` solves the untruncated problem. After
    fitting, ``transform`` pushes new initial points through the SDE driven
    by the fitted consensus curve.
    """

    def __init__(self, objective="quadratic", lam=1.0, beta=10.0, T=2.0, dt=0.01,
                 diffusion="isotropic", theta=0.25, seed=0, R="auto", p=2.0,
                 max_iters=30, tol=1e-2, C_M=1.0):
        self.objective = objective
        self.lam = lam
        self.beta = beta
        self.T = T
        self.dt = dt
        self.diffusion = diffusion
        self.theta = theta
        self.seed = seed
        self.R = R
        self.p = p
        self.max_iters = max_iters
        self.tol = tol
        self.C_M = C_M

    def fit(self, X, y=None):
        X = check_points(X, name="X")
        m, d = X.shape
        obj = _objective(self.objective, d)
        model = _diffusion(self.diffusion, self.theta, d)
        params = CboParams(self.lam, self.beta, self.T, self.dt, m, self.seed)
        cfg = PicardConfig(m, self.max_iters, self.tol, self.p)
        trunc = None
        if self.R is not None:
            R = self.R
            if R == "auto":
                C_0 = moment_bound_constants(self.lam, self.p, d, model.L_S, self.C_M, self.T).C_0
                R = max(C_0 * moment_p(X, self.p), 1.0)
            trunc = TruncationConfig(float(R), self.p)
        res = picard_fixed_point(cfg, params, model, obj, trunc, X)
        self.n_features_in_ = d
        self.solution_ = res.solution
        self.history_ = list(res.history)
        self.converged_ = res.converged
        self.exit_index_ = res.solution.exit_index
        self.consensus_curve_ = res.solution.consensus_curve
        self.params_ = params
        self.model_ = model
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_")
        X = check_points(X, name="X", dim=self.n_features_in_)
        curve = solve_auxiliary(self.consensus_curve_, X, self.params_, self.model_)
        return np.array(curve.frames[-1].points)
