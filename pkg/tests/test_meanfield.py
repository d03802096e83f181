import math

import numpy as np
import pytest

from mfcbo import (
    CboParams,
    DiffusionModel,
    PicardConfig,
    TruncationConfig,
    UsageError,
    bdg_constant,
    builtin_objective,
    constants_report,
    contraction_constants,
    moment_bound_constants,
    moment_p,
    path_distance_upper,
    picard_fixed_point,
    picard_map,
    propagation_of_chaos,
    solve_auxiliary,
    truncated_meanfield_solve,
    uniqueness_probe,
    verify_moment_bound,
)
from mfcbo.initial import PointMass, UniformBox
from mfcbo.meanfield import derive_seed

QUAD2 = builtin_objective("quadratic", 2)
ISO2 = DiffusionModel.isotropic(0.25, 2)


def bench_params(seed=0, T=2.0):
    return CboParams(1.0, 10.0, T, 0.01, 2000, seed)


# -- constants ------------------------------------------------------------------

def test_bdg_examples():
    assert bdg_constant(2) == 4.0
    assert abs(bdg_constant(4) - (512 / 27) ** 2) / (512 / 27) ** 2 <= 1e-6
    vals = [bdg_constant(p) for p in (2, 3, 4, 5, 6)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(UsageError):
        bdg_constant(1.5)


def test_moment_constants_examples():
    mc = moment_bound_constants(1.0, 2.0, 2, 0.0, 1.0, 1.0)
    assert mc.C_1 == 4.0
    assert mc.C_0 == pytest.approx(math.e**2, rel=1e-15)
    mc = moment_bound_constants(0.0, 2.0, 2, 1.0, 0.0, 1.0)
    assert mc.C_1 == 4.0
    assert mc.C_0 == pytest.approx(math.e**2, rel=1e-15)
    with pytest.raises(UsageError):
        moment_bound_constants(1.0, 1.5, 2, 0.0, 1.0, 1.0)


def test_moment_constants_affine_in_lambda():
    p, C_M = 3.0, 0.7
    c = [moment_bound_constants(lam, p, 2, 0.4, C_M, 1.0).C_1 for lam in (0.0, 1.0, 2.5)]
    slope = p * (1 + C_M)
    assert c[1] - c[0] == pytest.approx(slope)
    assert c[2] - c[0] == pytest.approx(2.5 * slope)


def test_C0_at_zero_horizon(rng):
    for _ in range(20):
        mc = moment_bound_constants(rng.uniform(0, 4), rng.uniform(2, 6), int(rng.integers(1, 5)),
                                    rng.uniform(0, 3), rng.uniform(0, 3), 0.0)
        assert mc.C_0 == 1.0


def test_contraction_examples():
    cc = contraction_constants(2.0, 0.0, 0.5, 15 / 8, 1.0, 3.0, 2.0, 1.0)
    assert cc.L_sigma_tilde == 0.0
    cc = contraction_constants(1.5, 1.0, 0.8, 15 / 8, 0.0, 3.0, 2.0, 1.0)
    assert cc.L_v_tilde == 1.5
    with pytest.raises(UsageError):
        contraction_constants(0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0)


def test_contraction_formula_by_hand():
    lam, L_S, L_M, L_phi, C_M, R, p, T = 1.0, 0.5, 1.0, 15 / 8, 0.2, 1.0, 2.0, 0.5
    L_v = max(lam * (L_M + C_M * (R + 1) * L_phi), lam)
    L_sig = L_S / lam * L_v
    K0 = 2 * (2 * T * L_v**2 + 2 * 4.0 * 1.0 * L_sig**2)
    cc = contraction_constants(lam, L_S, L_M, L_phi, C_M, R, p, T)
    assert cc.L_v_tilde == pytest.approx(L_v)
    assert cc.K_0 == pytest.approx(K0)
    assert cc.K == pytest.approx(math.exp(K0 * T) * K0)
    n = cc.n_contraction
    KT = cc.K * T
    assert n * math.log(KT) < math.lgamma(n + 1)
    assert n == 1 or (n - 1) * math.log(KT) >= math.lgamma(n)


def test_contraction_huge_K_is_reported():
    cc = contraction_constants(1.0, 1.0, 1.0, 15 / 8, 1.0, 1e5, 2.0, 2.0)
    assert cc.K == math.inf
    assert cc.log_K > 700
    assert cc.n_contraction == -1


def test_constants_report_fields():
    rep = constants_report(QUAD2, ISO2, bench_params(), TruncationConfig(10.0, 2.0))
    d = rep.as_dict()
    assert d["c_p"] == 4.0 and d["p_M"] == 1.0 and d["p_admissible"]
    assert d["C_1"] == 12.0


# -- auxiliary SDE ----------------------------------------------------------------

def test_auxiliary_zero_curve_exponential_decay():
    params = CboParams(1.0, 1.0, 1.0, 1e-3, 1)
    x0 = np.array([[2.0, -1.0]])
    curve = solve_auxiliary(np.zeros((params.n_steps + 1, 2)), x0, params, DiffusionModel.zero())
    exact = x0 * np.exp(-params.times)[:, None]
    assert np.abs(curve.as_array()[:, 0, :] - exact).max() <= 2e-3


def test_auxiliary_constant_curve_attracts():
    params = CboParams(2.0, 1.0, 3.0, 1e-2, 1)
    c, x0 = np.array([1.0, 1.0]), np.array([[-3.0, 4.0]])
    gamma = np.tile(c, (params.n_steps + 1, 1))
    final = solve_auxiliary(gamma, x0, params, DiffusionModel.zero()).frames[-1].points[0]
    bound = math.exp(-2.0 * 3.0) * np.linalg.norm(x0[0] - c) + 1e-2
    assert np.linalg.norm(final - c) <= bound


def test_auxiliary_stationary_at_curve():
    params = CboParams(1.0, 1.0, 1.0, 0.1, 1)
    gamma = np.tile([0.5, -0.5], (params.n_steps + 1, 1))
    curve = solve_auxiliary(gamma, np.array([[0.5, -0.5]]), params, DiffusionModel.zero())
    assert np.all(curve.as_array() == np.array([0.5, -0.5]))


def test_auxiliary_rejects_bad_curve():
    params = CboParams(1.0, 1.0, 1.0, 0.1, 1)
    with pytest.raises(UsageError):
        solve_auxiliary(np.zeros((3, 2)), np.zeros((1, 2)), params, DiffusionModel.zero())


# -- Picard -------------------------------------------------------------------------

def test_picard_point_mass_is_stationary():
    params = CboParams(1.0, 10.0, 1.0, 0.05, 1)
    x0 = np.array([0.7, -0.3])
    res = picard_fixed_point(PicardConfig(10, 30, 1e-10), params, DiffusionModel.zero(), QUAD2,
                             None, PointMass(tuple(x0)))
    assert res.converged
    assert np.abs(res.solution.curve.as_array() - x0).max() <= 1e-10
    exact = picard_fixed_point(PicardConfig(10, 30, 1e-10), params, DiffusionModel.zero(), QUAD2,
                               None, PointMass(tuple(x0)), initial_consensus=np.tile(x0, (21, 1)))
    assert exact.history == [0.0]
    assert np.all(exact.solution.curve.as_array() == x0)
    assert np.all(exact.solution.consensus_curve == x0)


def test_picard_1d_benchmark():
    obj = builtin_objective("quadratic", 1)
    params = CboParams(1.0, 10.0, 2.0, 0.01, 2000, 0)
    res = picard_fixed_point(PicardConfig(2000, 20, 1e-2), params,
                             DiffusionModel.isotropic(0.1, 1), obj, None, UniformBox(-2, 2))
    assert res.converged and res.iterations <= 20
    h = res.history
    assert all(b <= a for a, b in zip(h[1:], h[2:]))


def test_picard_map_at_fixed_point():
    cfg = PicardConfig(500, 30, 1e-3)
    params = CboParams(1.0, 10.0, 1.0, 0.01, 500, 4)
    res = picard_fixed_point(cfg, params, ISO2, QUAD2, None, UniformBox(-2, 2))
    assert res.converged
    again = picard_map(res.solution.curve, params, ISO2, QUAD2)
    assert path_distance_upper(again, res.solution.curve, 2) <= cfg.tol


def test_picard_non_convergence_is_reported():
    res = picard_fixed_point(PicardConfig(300, 1, 1e-12), bench_params(), ISO2, QUAD2, None,
                             UniformBox(-2, 2))
    assert not res.converged
    assert len(res.history) == 1 and not res.solution.converged


def test_picard_two_guesses_agree():
    cfg = PicardConfig(2000, 30, 1e-2)
    a = picard_fixed_point(cfg, bench_params(), ISO2, QUAD2, None, UniformBox(-2, 2))
    b = picard_fixed_point(cfg, bench_params(), ISO2, QUAD2, None, UniformBox(-2, 2),
                           initial_consensus=np.full((201, 2), 1.5))
    assert path_distance_upper(a.solution.curve, b.solution.curve, 2) <= 2 * cfg.tol


def test_picard_array_init_needs_m_samples():
    with pytest.raises(UsageError):
        picard_fixed_point(PicardConfig(100), bench_params(), ISO2, QUAD2, None, np.zeros((50, 2)))


def test_truncated_solve_exit_index():
    cfg = PicardConfig(1000, 30, 1e-2)
    params = CboParams(1.0, 10.0, 1.0, 0.01, 1000, 0)
    X0 = UniformBox(-2, 2)(1000, 2, 5)
    C_0 = moment_bound_constants(1.0, 2.0, 2, ISO2.L_S, 1.0, 1.0).C_0
    big = truncated_meanfield_solve(C_0 * moment_p(X0, 2), cfg, params, ISO2, QUAD2, X0)
    assert big.exit_index is None
    assert np.all(big.phi == 1.0)
    small = truncated_meanfield_solve(0.5 * moment_p(X0, 2), cfg, params, ISO2, QUAD2, X0)
    assert small.exit_index == 0


def test_moment_bound_zero_noise():
    params = CboParams(1.0, 5.0, 1.0, 0.01, 400)
    res = picard_fixed_point(PicardConfig(400, 30, 1e-6), params, DiffusionModel.zero(), QUAD2,
                             None, UniformBox(-2, 2))
    m = res.solution.moments
    assert np.all(np.diff(m) <= 1e-12)
    rep = verify_moment_bound(res.solution, 1.0)
    assert rep.passed and rep.margin >= 0


def test_moment_bound_point_mass_at_origin():
    params = CboParams(1.0, 5.0, 1.0, 0.1, 5)
    sol = truncated_meanfield_solve(1.0, PicardConfig(5, 5, 1e-9), params, ISO2, QUAD2,
                                    PointMass((0.0,)))
    assert np.all(sol.moments == 0.0)
    assert verify_moment_bound(sol, 1e-300).passed


def test_moment_bound_standard_run():
    params = bench_params(3)
    X0 = UniformBox(-2, 2)(2000, 2, 3)
    C_0 = moment_bound_constants(1.0, 2.0, 2, ISO2.L_S, 1.0, params.T).C_0
    sol = truncated_meanfield_solve(C_0 * moment_p(X0, 2), PicardConfig(2000), params, ISO2,
                                    QUAD2, X0)
    assert verify_moment_bound(sol, C_0, slack=1.05).passed


# -- chaos and uniqueness ------------------------------------------------------------

def test_chaos_delta_initial_zero_distance():
    params = CboParams(1.0, 10.0, 0.5, 0.05, 64, 0)
    ref = picard_fixed_point(PicardConfig(64, 5, 1e-9), params, DiffusionModel.zero(), QUAD2,
                             None, PointMass((0.3, 0.3)), initial_consensus=np.full((11, 2), 0.3))
    table = propagation_of_chaos([64], 2, params, DiffusionModel.zero(), QUAD2, ref.solution,
                                 PointMass((0.3, 0.3)))
    assert all(row[2] == 0.0 for row in table.rows)
    assert table.trend_holds


def test_chaos_trend_quadratic():
    params = bench_params()
    ref = picard_fixed_point(PicardConfig(2000), params, ISO2, QUAD2, None, UniformBox(-2, 2))
    table = propagation_of_chaos([64, 256], 5, params, ISO2, QUAD2, ref.solution, UniformBox(-2, 2))
    assert len(table.rows) == 10
    assert table.medians[256] <= table.medians[64]
    assert table.trend_holds


def test_chaos_validation():
    params = bench_params()
    ref = picard_fixed_point(PicardConfig(100, 3), params, ISO2, QUAD2, None, UniformBox(-2, 2))
    with pytest.raises(UsageError):
        propagation_of_chaos([64, 32], 1, params, ISO2, QUAD2, ref.solution, UniformBox(-2, 2))
    with pytest.raises(UsageError):
        propagation_of_chaos([200], 1, params, ISO2, QUAD2, ref.solution, UniformBox(-2, 2))


def test_uniqueness_probe():
    params = CboParams(1.0, 10.0, 1.0, 0.01, 500, 0)
    rep = uniqueness_probe(params, ISO2, QUAD2, None, PicardConfig(500, 30, 1e-2), (0, 1),
                           UniformBox(-2, 2), law_sizes=(100, 400))
    assert rep.passed
    assert set(rep.law_distances) == {100, 400}


def test_derive_seed_is_stable():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
