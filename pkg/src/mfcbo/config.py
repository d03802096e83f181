"""Run configuration: one JSON document validated before any computation.

Example::

    {
      "objective": {"name": "quadratic"},
      "dim": 2,
      "seed": 0,
      "cbo": {"lambda": 1.0, "beta": 10.0, "T": 5.0, "dt": 0.01, "n": 100},
      "diffusion": {"kind": "isotropic", "theta": 0.25},
      "init": {"kind": "uniform", "low": -3.0, "high": 3.0},
      "truncation": {"R": "auto", "p": 2.0},
      "picard": {"m_samples": 2000, "max_iters": 30, "tol": 0.01},
      "constants": {"C_M": 1.0, "L_M_R": 1.0},
      "chaos": {"n_list": [64, 256], "reps": 10},
      "output_dir": "out"
    }
"""

from __future__ import annotations

import importlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .dynamics import CboParams, DiffusionModel
from .exceptions import UsageError
from .initial import make_sampler
from .measure import ASSIGNMENT_MAX_N, TruncationConfig
from .meanfield import PicardConfig, moment_bound_constants
from .objective import as_objective, builtin_objective


class ConfigError(UsageError):
    """The configuration file is missing, malformed, or fails validation."""


_TOP_KEYS = {
    "objective", "dim", "seed", "cbo", "diffusion", "init", "truncation", "picard",
    "constants", "chaos", "verify", "output_dir", "curve_stride",
}

DEFAULTS = {
    "objective": {"name": "quadratic"},
    "dim": 2,
    "seed": 0,
    "cbo": {"lambda": 1.0, "beta": 10.0, "T": 5.0, "dt": 0.01, "n": 100},
    "diffusion": {"kind": "isotropic", "theta": 0.25},
    "init": {"kind": "uniform", "low": -3.0, "high": 3.0},
    "constants": {"C_M": 1.0, "L_M_R": 1.0},
    "output_dir": "cbo_out",
    "curve_stride": 1,
}


def _import(target):
    module, _, attr = str(target).partition(":")
    if not module or not attr:
        raise ConfigError(f"expected 'module:attribute', got {target!r}")
    try:
        obj = importlib.import_module(module)
        for part in attr.split("."):
            obj = getattr(obj, part)
        return obj
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot import {target!r}: {exc}") from None


def _section(raw, key, allowed):
    sec = raw.get(key)
    if sec is None:
        return None
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be an object")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in '{key}': {sorted(extra)}")
    return sec


@dataclass
class RunConfig:
    raw: dict
    objective: Any = None
    model: Optional[DiffusionModel] = None
    params: Optional[CboParams] = None
    sampler: Any = None
    truncation: Optional[dict] = None
    picard: Optional[PicardConfig] = None
    constants: dict = field(default_factory=dict)
    chaos: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    output_dir: Path = Path("cbo_out")
    seed: int = 0
    dim: int = 2
    curve_stride: int = 1

    def truncation_for(self, initial_moment):
        """The TruncationConfig, resolving ``R: "auto"`` to ``C_0 * m_p(rho_0)``."""
        if self.truncation is None:
            return None
        R, p = self.truncation["R"], self.truncation["p"]
        if R == "auto":
            C_0 = moment_bound_constants(self.params.lam, p, self.dim, self.model.L_S,
                                         self.constants["C_M"], self.params.T).C_0
            R = C_0 * initial_moment
            if R <= 0.0:
                R = 1.0
        return TruncationConfig(float(R), p)


def load_config(path=None, overrides=None):
    """Parse and validate a config file; ``overrides`` replace top-level fields."""
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = {**raw, **(overrides or {})}
    return build_config(raw)


def build_config(raw):
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    merged = {**DEFAULTS, **raw}
    try:
        return _build(merged)
    except ConfigError:
        raise
    except (UsageError, TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _build(raw):
    dim = raw["dim"]
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise ConfigError(f"dim must be a positive integer, got {dim!r}")
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    obj_spec = _section(raw, "objective", {"name", "callable", "params", "vectorized"})
    if "callable" in obj_spec:
        if "params" not in obj_spec:
            raise ConfigError("an external objective needs certificate 'params'")
        objective = as_objective(
            _import(obj_spec["callable"]), dim, obj_spec["params"],
            name=obj_spec.get("name", "custom"), vectorized=bool(obj_spec.get("vectorized", False)),
        )
    else:
        objective = builtin_objective(obj_spec.get("name", "quadratic"), dim)

    cbo = _section(raw, "cbo", {"lambda", "beta", "T", "dt", "n"})
    cbo = {**DEFAULTS["cbo"], **cbo}
    params = CboParams(cbo["lambda"], cbo["beta"], cbo["T"], cbo["dt"], cbo["n"], seed)

    diff = _section(raw, "diffusion", {"kind", "theta", "callable", "L_S"})
    kind = diff.get("kind", "isotropic")
    if kind == "isotropic":
        model = DiffusionModel.isotropic(diff.get("theta", 0.25), dim)
    elif kind == "anisotropic":
        model = DiffusionModel.anisotropic(diff.get("theta", 0.25))
    elif kind == "zero":
        model = DiffusionModel.zero()
    elif kind == "custom":
        if "callable" not in diff or "L_S" not in diff:
            raise ConfigError("a custom diffusion needs 'callable' and 'L_S'")
        model = DiffusionModel.custom(_import(diff["callable"]), diff["L_S"])
    else:
        raise ConfigError(f"unknown diffusion kind {kind!r}")

    sampler = make_sampler(_section(raw, "init", {"kind", "low", "high", "mean", "std", "location"}))

    trunc = _section(raw, "truncation", {"R", "p"})
    if trunc is not None:
        trunc = {"R": trunc.get("R", "auto"), "p": float(trunc.get("p", 2.0))}
        if trunc["R"] != "auto":
            TruncationConfig(trunc["R"], trunc["p"])
        elif trunc["p"] < 2:
            raise ConfigError("R='auto' needs p >= 2 for the moment-bound constant")

    pic = _section(raw, "picard", {"m_samples", "max_iters", "tol", "p"})
    picard = None
    if pic is not None:
        p_default = trunc["p"] if trunc is not None else 2.0
        picard = PicardConfig(pic.get("m_samples", 2000), pic.get("max_iters", 30),
                              pic.get("tol", 1e-2), pic.get("p", p_default))
        if trunc is not None and picard.p != trunc["p"]:
            raise ConfigError("picard.p and truncation.p must agree")

    consts = {**DEFAULTS["constants"], **_section(raw, "constants", {"C_M", "L_M_R"})}
    for key, value in consts.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            raise ConfigError(f"constants.{key} must be a positive number")

    chaos = _section(raw, "chaos", {"n_list", "reps"}) or {}
    if chaos:
        chaos = {"n_list": list(chaos.get("n_list", [64, 256])), "reps": chaos.get("reps", 10)}
        _check_chaos(chaos["n_list"], chaos["reps"], picard)

    verify = _section(raw, "verify", {"seeds", "n_instances"}) or {}

    stride = raw.get("curve_stride", 1)
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        raise ConfigError("curve_stride must be a positive integer")

    return RunConfig(
        raw=raw, objective=objective, model=model, params=params, sampler=sampler,
        truncation=trunc, picard=picard, constants=consts, chaos=chaos, verify=verify,
        output_dir=Path(raw["output_dir"]), seed=seed, dim=dim, curve_stride=stride,
    )


def _check_chaos(n_list, reps, picard):
    if not n_list:
        raise ConfigError("chaos.n_list is empty")
    if any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in n_list):
        raise ConfigError("chaos.n_list entries must be positive integers")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigError("chaos.n_list must be strictly ascending")
    if n_list[-1] > ASSIGNMENT_MAX_N:
        raise ConfigError(f"N={n_list[-1]} exceeds the exact-distance cap {ASSIGNMENT_MAX_N}")
    m = picard.m_samples if picard is not None else 2000
    if n_list[-1] > m:
        raise ConfigError(f"N={n_list[-1]} exceeds the mean-field sample count {m}")
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError("chaos.reps must be a positive integer")
