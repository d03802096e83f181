"""Machine-runnable invariant checks behind ``cbo verify``.

Each check returns a :class:`CheckResult` with a margin (positive means the
property holds with room to spare, in the units of the check). Sizes are
kept at desk scale so the whole suite runs in well under a minute.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (
    CboParams,
    DiffusionModel,
    SimulationState,
    consensus_point,
    consensus_weights,
    em_step,
    run_particle_cbo,
)
from .initial import UniformBox
from .measure import (
    CUTOFF_LIPSCHITZ,
    Ensemble,
    MeasureCurve,
    TruncationConfig,
    cutoff_eta,
    moment_p,
    path_distance_upper,
    truncation_phi,
    wasserstein_assignment,
    wasserstein_to_dirac0,
)
from .meanfield import (
    PicardConfig,
    bdg_constant,
    moment_bound_constants,
    picard_fixed_point,
    solve_auxiliary,
    verify_moment_bound,
)
from .objective import BUILTIN_NAMES, builtin_objective, critical_exponent, validate_class_membership

FAULTS = ("cutoff-monotonicity",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)
    seconds: float = 0.0


def _result(name, passed, margin, **details):
    return CheckResult(name, bool(passed), float(margin), details)


def check_critical_exponent():
    worst = 0.0
    for s in np.linspace(0.0, 5.0, 11):
        if critical_exponent(s, 0.0) != s + 2.0:
            return _result("critical_exponent_jump", False, -1.0, s=float(s))
        for eps in (1e-12, 1e-6, 0.5, 3.0):
            worst = max(worst, abs(critical_exponent(s, eps) - 1.0))
    return _result("critical_exponent_jump", worst == 0.0, -worst)


def check_builtin_certificates(seed=0):
    details = {}
    margin = math.inf
    for name in BUILTIN_NAMES:
        for dim in (1, 2, 5):
            rep = validate_class_membership(builtin_objective(name, dim), 10_000, 10.0, seed)
            details[f"{name}_d{dim}"] = rep.max_ratio
            margin = min(margin, 1.0 + 1e-9 - rep.max_ratio)
    return _result("builtin_certificates", margin >= 0, margin, **details)


def check_evaluate_determinism(seed=0):
    rng = np.random.default_rng(seed)
    for name in BUILTIN_NAMES:
        obj = builtin_objective(name, 3)
        X = rng.uniform(-5, 5, (50, 3))
        if obj.batch(X).tobytes() != obj.batch(X.copy()).tobytes():
            return _result("evaluate_determinism", False, -1.0, objective=name)
    return _result("evaluate_determinism", True, 0.0)


def check_moment_identity(n_instances=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        X = rng.normal(size=(int(rng.integers(1, 40)), int(rng.integers(1, 4)))) * rng.uniform(0.1, 10)
        for p in (1.0, 2.0, 4.0):
            worst = max(worst, abs(moment_p(X, p) - wasserstein_to_dirac0(X, p)))
    return _result("moment_equals_w_to_dirac0", worst <= 1e-12, 1e-12 - worst, max_gap=worst)


def check_wasserstein_metric(n_triples=50, seed=0):
    rng = np.random.default_rng(seed)
    sym = tri = zero = 0.0
    for _ in range(n_triples):
        n, d = int(rng.integers(2, 30)), int(rng.integers(1, 4))
        A, B, C = (rng.normal(size=(n, d)) + rng.normal(size=d) for _ in range(3))
        p = float(rng.choice([1.0, 2.0, 3.0]))
        ab = wasserstein_assignment(A, B, p)
        sym = max(sym, abs(ab - wasserstein_assignment(B, A, p)))
        tri = max(tri, ab - wasserstein_assignment(A, C, p) - wasserstein_assignment(C, B, p))
        zero = max(zero, wasserstein_assignment(A, A[rng.permutation(n)], p))
    ok = sym <= 1e-12 and tri <= 1e-12 and zero <= 1e-12
    return _result("wasserstein_metric", ok, 1e-12 - max(sym, tri, zero),
                   symmetry=sym, triangle_excess=tri, permutation_distance=zero)


def check_phi_lipschitz(n_pairs=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        n, d = int(rng.integers(2, 40)), int(rng.integers(1, 4))
        cfg = TruncationConfig(float(rng.uniform(0.5, 3.0)), float(rng.choice([1.0, 2.0, 4.0])))
        A = rng.normal(size=(n, d)) * rng.uniform(0.2, 3.0)
        B = A + rng.normal(size=(n, d)) * rng.uniform(0.01, 1.0)
        w = wasserstein_assignment(A, B, cfg.p)
        if w > 0:
            worst = max(worst, abs(truncation_phi(A, cfg) - truncation_phi(B, cfg)) / w)
    bound = CUTOFF_LIPSCHITZ + 1e-9
    return _result("phi_lipschitz", worst <= bound, bound - worst, max_ratio=worst)


def check_cutoff_monotone(fault=None):
    eta = cutoff_eta
    if fault == "cutoff-monotonicity":
        def eta(z, R):
            return 1.0 - cutoff_eta(z, R)
    worst = 0.0
    for R in (0.1, 1.0, 7.5):
        z = np.linspace(R - 2.0, R + 3.0, 10_000)
        worst = max(worst, float(np.max(np.diff(eta(z, R)))))
    return _result("cutoff_monotone", worst <= 1e-15, 1e-15 - worst, max_increase=worst)


def check_path_distance(n_pairs=20, seed=0):
    rng = np.random.default_rng(seed)
    mono = 0.0
    upper = 0.0
    for _ in range(n_pairs):
        n, d, K = int(rng.integers(2, 65)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        times = np.arange(K + 1) * 0.1
        a = MeasureCurve.from_array(times, np.cumsum(rng.normal(size=(K + 1, n, d)), axis=0))
        b = MeasureCurve.from_array(times, np.cumsum(rng.normal(size=(K + 1, n, d)), axis=0))
        prev = 0.0
        for k in range(K + 1):
            cur = path_distance_upper(a, b, 2.0, k)
            mono = max(mono, prev - cur)
            upper = max(upper, wasserstein_assignment(a.frames[k], b.frames[k], 2.0) - cur)
            prev = cur
    ok = mono <= 0.0 and upper <= 1e-12
    return _result("path_distance_upper_bound", ok, -max(mono, upper),
                   monotonicity_violation=mono, bound_violation=upper)


def check_consensus(n_instances=100, seed=0):
    rng = np.random.default_rng(seed)
    hull = wsum = shift = argmin = 0.0
    for _ in range(n_instances):
        n, d = int(rng.integers(2, 30)), int(rng.integers(1, 4))
        obj = builtin_objective(str(rng.choice(BUILTIN_NAMES)), d)
        X = rng.uniform(-3, 3, (n, d))
        f = obj.batch(X)
        beta = float(rng.uniform(0.1, 10.0))
        w = consensus_weights(f, beta)
        wsum = max(wsum, abs(w.sum() - 1.0))
        m = consensus_point(X, obj, beta)
        if d == 1:
            hull = max(hull, X.min() - m[0], m[0] - X.max())
        c = float(rng.uniform(-100, 100))
        shifted = np.sum(consensus_weights(f + c, beta)[:, None] * X, axis=0)
        shift = max(shift, float(np.abs(shifted - m).max()))
        order = np.sort(f)
        rng_f = order[-1] - order[0]
        if order[1] - order[0] >= 0.01 * rng_f > 0:
            beta_big = 1e4 / rng_f
            diam = max(np.linalg.norm(X[i] - X[j]) for i in range(n) for j in range(n))
            err = np.linalg.norm(consensus_point(X, obj, beta_big) - X[np.argmin(f)])
            argmin = max(argmin, err / (1e-6 * diam))
    ok = hull <= 0 and wsum <= 1e-12 and shift <= 1e-12 and argmin <= 1.0
    return _result("consensus_invariants", ok, 1.0 - argmin, hull_excess=hull,
                   weight_sum_error=wsum, shift_error=shift, argmin_ratio=argmin)


def check_truncation_identity(seed=0):
    obj = builtin_objective("quadratic", 2)
    params = CboParams(1.0, 10.0, 0.1, 0.01, 50, seed)
    model = DiffusionModel.isotropic(0.25, 2)
    X = np.random.default_rng(seed).uniform(-3, 3, (50, 2))
    state = SimulationState(0, Ensemble(X), seed)
    trunc = TruncationConfig(10.0 * moment_p(X, 2.0) + 10.0, 2.0)
    a = em_step(state, params, model, obj)
    b = em_step(state, params, model, obj, trunc)
    same = a.ensemble.points.tobytes() == b.ensemble.points.tobytes()
    return _result("truncation_inactive_is_identity", same, 0.0 if same else -1.0)


def check_run_determinism(seed=0):
    obj = builtin_objective("rastrigin", 2)
    params = CboParams(1.0, 30.0, 0.5, 0.01, 64, seed)
    model = DiffusionModel.anisotropic(0.35)
    X = UniformBox(-3, 3)(64, 2, seed)
    a = run_particle_cbo(params, model, obj, X)
    b = run_particle_cbo(params, model, obj, X)
    same = all(
        x.tobytes() == y.tobytes()
        for x, y in ((a.consensus, b.consensus), (a.best_f, b.best_f), (a.moment, b.moment),
                     (a.final_ensemble.points, b.final_ensemble.points))
    )
    return _result("particle_run_determinism", same, 0.0 if same else -1.0)


def check_diffusion_models(seed=0):
    details = {}
    margin = math.inf
    for model in (DiffusionModel.isotropic(0.3, 3), DiffusionModel.anisotropic(0.3)):
        ok_zero = np.all(model.matrix(np.zeros(3)) == 0.0)
        ratio = model.lipschitz_ratio(3, 500, 5.0, seed)
        details[model.kind] = {"S0_is_zero": bool(ok_zero), "lipschitz_ratio": ratio}
        margin = min(margin, (1.0 + 1e-12 - ratio) if ok_zero else -1.0)
    return _result("diffusion_models", margin >= 0, margin, **details)


def check_bdg_c2():
    c2 = bdg_constant(2)
    c4 = bdg_constant(4)
    rel4 = abs(c4 - (512.0 / 27.0) ** 2) / (512.0 / 27.0) ** 2
    return _result("bdg_c2_equals_4", c2 == 4.0 and rel4 <= 1e-6, 1e-6 - rel4, c_2=c2, c_4=c4)


def check_c0_at_zero_horizon(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        mb = moment_bound_constants(rng.uniform(0, 5), rng.uniform(2, 6), int(rng.integers(1, 6)),
                                    rng.uniform(0, 3), rng.uniform(0, 3), 0.0)
        worst = max(worst, abs(mb.C_0 - 1.0))
    return _result("C0_at_T0_is_1", worst == 0.0, -worst)


def check_euler_sanity():
    """Zero-noise auxiliary solve against the exact linear ODE solution."""
    worst = 0.0
    for dt in (1e-2, 1e-3):
        params = CboParams(1.0, 1.0, 2.0, dt, 1)
        t = params.times
        for x0, c in (((1.0, -2.0), (0.5, 0.5)), ((3.0, 0.0), (0.0, 0.0))):
            x0, c = np.array(x0), np.array(c)
            gamma = np.tile(c, (t.size, 1))
            curve = solve_auxiliary(gamma, x0.reshape(1, -1), params, DiffusionModel.zero())
            exact = c + (x0 - c) * np.exp(-t)[:, None]
            err = np.abs(curve.as_array()[:, 0, :] - exact).max()
            bound = 5.0 * dt * (1.0 + np.linalg.norm(x0) + np.linalg.norm(c))
            worst = max(worst, err / bound)
    return _result("euler_sanity", worst <= 1.0, 1.0 - worst, max_error_over_bound=worst)


def _benchmark(seed, T=2.0):
    obj = builtin_objective("quadratic", 2)
    model = DiffusionModel.isotropic(0.25, 2)
    params = CboParams(1.0, 10.0, T, 0.01, 2000, seed)
    return obj, model, params


def check_picard_decrease(seed=0):
    obj, model, params = _benchmark(seed)
    res = picard_fixed_point(PicardConfig(2000, 30, 1e-2, 2.0), params, model, obj, None,
                             UniformBox(-2.0, 2.0))
    h = res.history
    k0 = next((k for k in range(len(h)) if all(h[j + 1] <= h[j] for j in range(k, len(h) - 1))), None)
    ok = res.converged and k0 is not None and k0 <= 5
    return _result("picard_eventual_decrease", ok, 1e-2 - (h[-1] if h else math.inf),
                   history=list(h), k0=k0)


def check_moment_bound(seeds=(0, 1, 2)):
    details = {}
    margin = math.inf
    for seed in seeds:
        obj, model, params = _benchmark(seed)
        X0 = UniformBox(-2.0, 2.0)(2000, 2, seed)
        C_0 = moment_bound_constants(1.0, 2.0, 2, model.L_S, 1.0, params.T).C_0
        R = C_0 * moment_p(X0, 2.0)
        res = picard_fixed_point(PicardConfig(2000, 30, 1e-2, 2.0), params, model, obj,
                                 TruncationConfig(R, 2.0), X0)
        rep = verify_moment_bound(res.solution, C_0, 2.0, slack=1.05)
        ok = rep.passed and res.solution.exit_index is None and bool(np.all(res.solution.phi == 1.0))
        details[str(seed)] = {"sup": rep.sup_moment, "bound": rep.bound,
                              "exit_index": res.solution.exit_index}
        margin = min(margin, rep.margin if ok else -1.0)
    return _result("moment_bound_and_truncation_consistency", margin >= 0, margin, **details)


def run_all(seed=0, fault=None, seeds=(0, 1, 2)):
    """Run every check; returns a list of CheckResult."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}")
    checks = [
        check_critical_exponent,
        lambda: check_builtin_certificates(seed),
        lambda: check_evaluate_determinism(seed),
        lambda: check_moment_identity(100, seed),
        lambda: check_wasserstein_metric(50, seed),
        lambda: check_phi_lipschitz(100, seed),
        lambda: check_cutoff_monotone(fault),
        lambda: check_path_distance(20, seed),
        lambda: check_consensus(100, seed),
        lambda: check_truncation_identity(seed),
        lambda: check_run_determinism(seed),
        lambda: check_diffusion_models(seed),
        check_bdg_c2,
        lambda: check_c0_at_zero_horizon(seed),
        check_euler_sanity,
        lambda: check_picard_decrease(seed),
        lambda: check_moment_bound(seeds),
    ]
    results = []
    for check in checks:
        start = time.perf_counter()
        res = check()
        res.seconds = time.perf_counter() - start
        results.append(res)
    return results


def report_dict(results):
    return {
        "passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
