"""Objective functions carrying growth/coercivity certificates.

An objective ``f`` is certified for the class ``O(s, ell)`` by constants
``(s, ell, L_f, f_star, c_b, C_b, c_a, C_a)`` such that

    |f(x) - f(y)| <= L_f (1 + |x| + |y|)^s |x - y|                 (local Lipschitz)
    c_b |x|^ell - C_b <= f(x) - f_star <= c_a |x|^ell + C_a         (two-sided growth)

Certificates are checked by sampling, never symbolically. The certificates
shipped with the builtin objectives were derived by hand for this package;
they are valid but not tight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._validation import check_scalar, check_vector
from .exceptions import DataError, UsageError

__all__ = [
    "ObjectiveParams",
    "ObjectiveFunction",
    "ValidationReport",
    "evaluate",
    "critical_exponent",
    "validate_class_membership",
    "builtin_objective",
    "BUILTIN_NAMES",
]

BUILTIN_NAMES = ("quadratic", "rastrigin", "ackley")

_REL_TOL = 1e-9


@dataclass(frozen=True)
class ObjectiveParams:
    s: float
    ell: float
    L_f: float
    f_star: float = 0.0
    c_b: float = 1.0
    C_b: float = 1.0
    c_a: float = 1.0
    C_a: float = 1.0

    def __post_init__(self):
        check_scalar(self.s, "s", lower=0.0)
        check_scalar(self.ell, "ell", lower=0.0)
        check_scalar(self.L_f, "L_f", lower=0.0)
        check_scalar(self.f_star, "f_star")
        for name in ("c_b", "C_b", "c_a", "C_a"):
            check_scalar(getattr(self, name), name, lower=0.0, strict_lower=True)
        if self.ell > self.s + 1:
            raise UsageError(
                f"the class O(s, ell) is empty for ell > s + 1 (s={self.s}, ell={self.ell})"
            )
        if self.ell > 0 and self.c_b > self.c_a:
            raise UsageError(f"c_b={self.c_b} exceeds c_a={self.c_a} with ell > 0")


@dataclass(frozen=True)
class ObjectiveFunction:
    """An objective ``f: R^d -> R`` with its certificate.

    ``func`` maps an ``(n, d)`` array to ``n`` values when ``vectorized`` is
    true, otherwise a single ``d``-vector to a float.
    """

    func: Callable
    params: ObjectiveParams
    dim: int
    name: str = "custom"
    vectorized: bool = True

    def __post_init__(self):
        check_scalar(self.dim, "dim", lower=1, integer=True)
        if not callable(self.func):
            raise UsageError("func must be callable")

    def batch(self, X):
        """Evaluate on the rows of ``X`` (shape (n, d)); returns shape (n,)."""
        if self.vectorized:
            return np.asarray(self.func(X), dtype=np.float64).reshape(X.shape[0])
        return np.array([float(self.func(row)) for row in X], dtype=np.float64)

    def __call__(self, x):
        return evaluate(self, x)


@dataclass
class ValidationReport:
    passed: bool
    n_pairs: int
    radius: float
    lipschitz_ratio: float
    lower_growth_ratio: float
    upper_growth_ratio: float
    below_infimum: float
    worst: dict = field(default_factory=dict)

    @property
    def max_ratio(self):
        return max(self.lipschitz_ratio, self.lower_growth_ratio, self.upper_growth_ratio)


def evaluate(obj, x):
    """Value of ``obj`` at a single point ``x`` of length ``obj.dim``."""
    x = check_vector(x, obj.dim)
    return float(obj.batch(x.reshape(1, -1))[0])


def critical_exponent(s, ell):
    """Minimal moment order for stability of the consensus point.

    ``s + 2`` when ``ell == 0`` and ``1`` for every ``ell > 0``.
    """
    check_scalar(s, "s", lower=0.0)
    check_scalar(ell, "ell", lower=0.0)
    return float(s) + 2.0 if ell == 0 else 1.0


def _ratio(lhs, rhs):
    # lhs <= rhs is the inequality being checked; 0/0 counts as satisfied
    out = np.zeros_like(lhs)
    pos = rhs > 0
    out[pos] = lhs[pos] / rhs[pos]
    out[~pos & (lhs > 0)] = np.inf
    return out


def _sample_ball(rng, n, dim, radius):
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r = radius * rng.random((n, 1)) ** (1.0 / dim)
    return g / norms * r


def validate_class_membership(obj, n_pairs=10_000, radius=10.0, seed=0):
    """Check the certificate of ``obj`` on random point pairs.

    ``n_pairs`` pairs are drawn uniformly in the ball of the given radius.
    Each condition is written as ``lhs <= rhs`` and the largest ratio
    ``lhs / rhs`` is reported; validation passes when no ratio exceeds
    ``1 + 1e-9`` and no sampled value falls below ``f_star`` by more than
    the same relative tolerance.
    """
    n_pairs = check_scalar(n_pairs, "n_pairs", lower=1, integer=True)
    radius = float(check_scalar(radius, "radius", lower=0.0, strict_lower=True))
    prm = obj.params
    rng = np.random.default_rng(seed)
    X = _sample_ball(rng, n_pairs, obj.dim, radius)
    Y = _sample_ball(rng, n_pairs, obj.dim, radius)
    fx, fy = obj.batch(X), obj.batch(Y)
    nx, ny = np.linalg.norm(X, axis=1), np.linalg.norm(Y, axis=1)

    lip = _ratio(
        np.abs(fx - fy),
        prm.L_f * (1.0 + nx + ny) ** prm.s * np.linalg.norm(X - Y, axis=1),
    )
    pts = np.concatenate([X, Y])
    gap = np.concatenate([fx, fy]) - prm.f_star
    npts = np.concatenate([nx, ny])
    grow = npts**prm.ell  # 0**0 == 1, matching |x|^0 == 1
    lower = _ratio(prm.c_b * grow, gap + prm.C_b)
    upper = _ratio(gap, prm.c_a * grow + prm.C_a)
    scale = max(1.0, abs(prm.f_star))
    below = float(max(0.0, -gap.min()))

    worst = {
        "lipschitz_pair": [X[lip.argmax()].tolist(), Y[lip.argmax()].tolist()],
        "lower_growth_point": pts[lower.argmax()].tolist(),
        "upper_growth_point": pts[upper.argmax()].tolist(),
    }
    report = ValidationReport(
        passed=False,
        n_pairs=n_pairs,
        radius=radius,
        lipschitz_ratio=float(lip.max()),
        lower_growth_ratio=float(lower.max()),
        upper_growth_ratio=float(upper.max()),
        below_infimum=below,
        worst=worst,
    )
    report.passed = bool(report.max_ratio <= 1.0 + _REL_TOL and below <= _REL_TOL * scale)
    return report


def _quadratic(X):
    return np.einsum("ij,ij->i", X, X)


def _rastrigin(X):
    return 10.0 * X.shape[1] + np.sum(X * X - 10.0 * np.cos(2.0 * np.pi * X), axis=1)


def _ackley(X):
    d = X.shape[1]
    r = np.sqrt(np.einsum("ij,ij->i", X, X) / d)
    c = np.sum(np.cos(2.0 * np.pi * X), axis=1) / d
    return -20.0 * np.exp(-0.2 * r) - np.exp(c) + 20.0 + math.e


def _certificate(name, dim):
    if name == "quadratic":
        # | |x|^2 - |y|^2 | = |<x - y, x + y>| <= (|x| + |y|) |x - y|
        return ObjectiveParams(s=1, ell=2, L_f=1.0, c_b=1.0, C_b=1.0, c_a=1.0, C_a=1.0)
    if name == "rastrigin":
        # quadratic part as above; cosine part is 20*pi*sqrt(d)-Lipschitz and in [0, 20d]
        return ObjectiveParams(
            s=1, ell=2, L_f=1.0 + 20.0 * math.pi * math.sqrt(dim),
            c_b=1.0, C_b=1.0, c_a=1.0, C_a=20.0 * dim,
        )
    # ackley: gradient norm <= (4 + 2*pi*e) / sqrt(d); values in [0, 20 + e - 1/e]
    return ObjectiveParams(
        s=0, ell=0, L_f=(4.0 + 2.0 * math.pi * math.e) / math.sqrt(dim),
        c_b=1.0, C_b=1.0, c_a=1.0, C_a=22.0,
    )


_BUILTINS = {"quadratic": _quadratic, "rastrigin": _rastrigin, "ackley": _ackley}


def builtin_objective(name, dim):
    """One of ``"quadratic"``, ``"rastrigin"``, ``"ackley"`` in dimension ``dim``.

    All three have their global minimum 0 at the origin.
    """
    if name not in _BUILTINS:
        raise UsageError(f"unknown objective {name!r}; expected one of {BUILTIN_NAMES}")
    dim = check_scalar(dim, "dim", lower=1, integer=True)
    return ObjectiveFunction(_BUILTINS[name], _certificate(name, dim), dim, name=name)


def as_objective(func, dim, params, *, name="custom", vectorized=False):
    """Wrap a user callable; ``params`` is an ``ObjectiveParams`` or a mapping of its fields."""
    if not isinstance(params, ObjectiveParams):
        params = ObjectiveParams(**params)
    return ObjectiveFunction(func, params, int(dim), name=name, vectorized=vectorized)


def check_values(values):
    """Raise ``DataError`` unless every objective value is finite."""
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"objective value at particle {i} is not finite ({values[i]})")
    return values

