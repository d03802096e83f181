"""Samplers for initial data.

A sampler is called as ``sampler(n, dim, seed)`` and returns an ``(n, dim)``
array of i.i.d. draws. Draws are made with numpy's default generator seeded
by ``seed`` and happen once per run, outside any parallel section.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_scalar, check_vector
from .exceptions import UsageError


@dataclass(frozen=True)
class UniformBox:
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        if not self.high > self.low:
            raise UsageError(f"empty box [{self.low}, {self.high}]")

    def __call__(self, n, dim, seed):
        return np.random.default_rng(seed).uniform(self.low, self.high, (n, dim))


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        check_scalar(self.std, "std", lower=0.0)

    def __call__(self, n, dim, seed):
        return self.mean + self.std * np.random.default_rng(seed).standard_normal((n, dim))


@dataclass(frozen=True)
class PointMass:
    """All samples at ``location`` (a scalar is broadcast to every coordinate)."""

    location: tuple = (0.0,)

    def __call__(self, n, dim, seed):
        loc = check_vector(self.location, name="location")
        if loc.shape[0] == 1:
            loc = np.full(dim, loc[0])
        elif loc.shape[0] != dim:
            raise UsageError(f"point mass has dimension {loc.shape[0]}, expected {dim}")
        return np.tile(loc, (n, 1))


def make_sampler(spec):
    """Sampler from a config mapping such as ``{"kind": "uniform", "low": -3, "high": 3}``."""
    spec = dict(spec)
    kind = spec.pop("kind", "uniform")
    allowed = {"uniform": {"low", "high"}, "gaussian": {"mean", "std"}, "point": {"location"}}
    if kind not in allowed:
        raise UsageError(f"unknown init kind {kind!r}")
    extra = set(spec) - allowed[kind]
    if extra:
        raise UsageError(f"unknown keys for init kind {kind!r}: {sorted(extra)}")
    try:
        if kind == "uniform":
            return UniformBox(float(spec.get("low", -1.0)), float(spec.get("high", 1.0)))
        if kind == "gaussian":
            return Gaussian(float(spec.get("mean", 0.0)), float(spec.get("std", 1.0)))
        loc = spec.get("location", 0.0)
        loc = tuple(float(v) for v in loc) if isinstance(loc, (list, tuple)) else (float(loc),)
        return PointMass(loc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad init spec: {exc}") from None
