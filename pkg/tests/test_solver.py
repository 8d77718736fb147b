import dataclasses

import numpy as np
import pytest

import biotfs as bf
from oracles import dense_block_solve, dense_fixed_stress_step


def l_physical(params):
    return params.alpha**2 / params.drained_bulk_modulus


def test_solver_config_validation():
    with pytest.raises(ValueError):
        bf.SolverConfig(L=-1.0)
    with pytest.raises(ValueError):
        bf.SolverConfig(L=1.0, eps_r=0.0)
    with pytest.raises(ValueError):
        bf.SolverConfig(L=1.0, max_iter=0)


def test_time_grid_validation_and_step_count():
    grid = bf.TimeGrid(t0=0.0, tau=0.1, t_end=1.0)
    assert grid.n_steps == 10
    assert np.allclose(grid.times(), 0.1 * np.arange(1, 11))
    with pytest.raises(ValueError):
        bf.TimeGrid(t0=0.0, tau=0.3, t_end=1.0)
    with pytest.raises(ValueError):
        bf.TimeGrid(t0=0.0, tau=-0.1, t_end=1.0)
    with pytest.raises(ValueError):
        bf.TimeGrid(t0=1.0, tau=0.1, t_end=0.5)


def test_fixed_stress_step_zero_data_fixed_point(params):
    system = bf.build_problem(4, params, sources=None).system
    u, p = bf.fixed_stress_step(
        system, np.zeros(system.n_u), np.zeros(system.n_p), l_physical(params)
    )
    assert np.all(u == 0.0)
    assert np.all(p == 0.0)


def test_fixed_stress_step_requires_positive_scale(params):
    system = bf.build_problem(4, params, sources=None).system
    with pytest.raises(ValueError):
        bf.fixed_stress_step(system, np.zeros(system.n_u), np.zeros(system.n_p), 0.0)


def test_fixed_stress_step_at_exact_solution(problem8, params):
    system = problem8.system
    u_star, p_star = bf.monolithic_solve(system)
    u1, p1 = bf.fixed_stress_step(system, u_star, p_star, l_physical(params))
    p_scale = bf.m_norm(system.Mp, p_star)
    u_scale = bf.m_norm(system.A, u_star)
    assert bf.m_norm(system.Mp, p1 - p_star) <= 1e-9 * p_scale
    assert bf.m_norm(system.A, u1 - u_star) <= 1e-9 * u_scale


def test_fixed_stress_step_vs_dense_oracle(problem8, params):
    system = problem8.system
    rng = np.random.default_rng(21)
    sys_rand = dataclasses.replace(system, g=rng.standard_normal(system.n_p))
    L = l_physical(params)
    p_prev = rng.standard_normal(system.n_p)
    u_prev = sys_rand.a_solve(sys_rand.f + sys_rand.B.T @ p_prev)
    u1, p1 = bf.fixed_stress_step(sys_rand, u_prev, p_prev, L)
    u1_o, p1_o = dense_fixed_stress_step(sys_rand, u_prev, p_prev, L)
    assert np.abs(p1 - p1_o).max() <= 1e-10 * np.abs(p1_o).max()
    assert np.abs(u1 - u1_o).max() <= 1e-10 * np.abs(u1_o).max()


def test_fixed_stress_solve_zero_data_one_iteration(params):
    system = bf.build_problem(4, params, sources=None).system
    cfg = bf.SolverConfig(L=l_physical(params))
    u, p, trace = bf.fixed_stress_solve(system, cfg)
    assert trace.converged
    assert trace.iterations == 1
    assert np.all(u == 0.0) and np.all(p == 0.0)


def test_fixed_stress_solve_warm_start_count_is_one(problem8, params):
    system = problem8.system
    u_star, p_star = bf.monolithic_solve(system)
    cfg = bf.SolverConfig(L=l_physical(params))
    _, _, trace = bf.fixed_stress_solve(system, cfg, u_init=u_star, p_init=p_star)
    assert trace.converged
    assert trace.iterations == 1


def test_fixed_stress_solve_matches_monolithic(problem8, params):
    system = problem8.system
    cfg = bf.SolverConfig(L=l_physical(params), eps_r=1e-6)
    u, p, trace = bf.fixed_stress_solve(system, cfg)
    assert trace.converged
    u_star, p_star = bf.monolithic_solve(system)
    p_err = bf.m_norm(system.Mp, p - p_star) / bf.m_norm(system.Mp, p_star)
    u_err = bf.m_norm(system.A, u - u_star) / bf.m_norm(system.A, u_star)
    assert p_err <= 10 * cfg.eps_r
    assert u_err <= 10 * cfg.eps_r


def test_fixed_stress_solve_diverges_below_threshold(problem8, dense_eigen8, params):
    # Stabilizations below half the optimal band make the relaxation
    # overshoot (omega > 2/lambda_max) and the iteration grow.
    system = problem8.system
    w, v = dense_eigen8
    k_star = params.alpha**2 / (w[-1] - params.inv_m)
    L_bad = 0.9 * params.alpha**2 / (2.0 * k_star)
    _, p_star = bf.monolithic_solve(system)
    p0 = p_star + v[:, -1] * bf.m_norm(system.Mp, p_star) / bf.m_norm(system.Mp, v[:, -1])
    u0 = system.a_solve(system.f + system.B.T @ p0)
    cfg = bf.SolverConfig(L=L_bad, max_iter=30)
    _, _, trace = bf.fixed_stress_solve(system, cfg, u_init=u0, p_init=p0)
    assert not trace.converged
    assert trace.iterations == 30
    dp = [rec[0] for rec in trace.increment_norms]
    assert dp[-1] > dp[5]


def test_richardson_fixed_point_and_zero_relaxation(problem8):
    system = problem8.system
    _, p_star = bf.monolithic_solve(system)
    gt = bf.schur_rhs(system)
    p1 = bf.richardson_step(system, p_star, omega=5e10, g_tilde=gt)
    assert bf.m_norm(system.Mp, p1 - p_star) <= 1e-9 * bf.m_norm(system.Mp, p_star)
    p_same = bf.richardson_step(system, p_star, omega=0.0, g_tilde=gt)
    assert np.array_equal(p_same, p_star)


@pytest.mark.parametrize("l_factor", [0.5, 1.0, 2.0])
def test_richardson_equals_fixed_stress_pressure_path(problem8, params, l_factor):
    # The splitting scheme's pressure iterates are exactly a relaxed
    # Richardson sequence with omega = 1/(L + inv_m), whatever L is.
    system = problem8.system
    L = l_factor * l_physical(params)
    omega = 1.0 / (L + params.inv_m)
    gt = bf.schur_rhs(system)
    p_fs = np.zeros(system.n_p)
    u_fs = system.a_solve(system.f + system.B.T @ p_fs)
    p_ri = p_fs.copy()
    for _ in range(20):
        u_fs, p_fs = bf.fixed_stress_step(system, u_fs, p_fs, L)
        p_ri = bf.richardson_step(system, p_ri, omega, g_tilde=gt)
        rel = np.linalg.norm(p_fs - p_ri) / max(np.linalg.norm(p_ri), 1e-300)
        assert rel <= 1e-8


def test_monolithic_zero_data(params):
    system = bf.build_problem(4, params, sources=None).system
    u, p = bf.monolithic_solve(system)
    assert np.abs(u).max() == 0.0
    assert np.abs(p).max() == 0.0


def test_monolithic_block_residual(problem8):
    system = problem8.system
    u, p = bf.monolithic_solve(system)
    _, _, block, rhs = dense_block_solve(system)
    sol = np.concatenate([u, p])
    resid = np.linalg.norm(block @ sol - rhs) / np.linalg.norm(rhs)
    assert resid <= 1e-10


def test_monolithic_matches_dense_block_oracle(problem8):
    system = problem8.system
    u, p = bf.monolithic_solve(system)
    u_o, p_o, _, _ = dense_block_solve(system)
    assert np.abs(p - p_o).max() <= 1e-9 * np.abs(p_o).max()
    assert np.abs(u - u_o).max() <= 1e-9 * np.abs(u_o).max()


def test_monolithic_pressure_solves_schur_system(problem8):
    system = problem8.system
    _, p = bf.monolithic_solve(system)
    gt = bf.schur_rhs(system)
    resid = bf.schur_apply(system, p) - gt
    assert np.linalg.norm(resid) <= 1e-9 * np.linalg.norm(gt)


def test_contraction_bound_with_dense_rates(problem8, dense_eigen8, params):
    # Error ratios in the pressure mass norm never exceed the Richardson
    # contraction factor (small allowance for the inner solves).
    system = problem8.system
    w, _ = dense_eigen8
    lam_min, lam_max = w[0], w[-1]
    est = bf.optimal_parameters(lam_max, lam_min, params)
    _, p_star = bf.monolithic_solve(system)
    gt = bf.schur_rhs(system)
    rng = np.random.default_rng(31)
    inner_tol = 1e-12
    for omega in (0.5 * est.omega_opt, est.omega_opt):
        rho = est.rho(omega)
        err = rng.standard_normal(system.n_p)
        err *= 1e8 * bf.m_norm(system.Mp, p_star) / bf.m_norm(system.Mp, err)
        p_it = p_star + err
        prev = bf.m_norm(system.Mp, err)
        for _ in range(50):
            p_it = bf.richardson_step(system, p_it, omega, g_tilde=gt)
            cur = bf.m_norm(system.Mp, p_it - p_star)
            assert cur <= (rho + 10 * inner_tol) * prev + 1e-13 * prev
            prev = cur


def test_time_march_single_step(problem8, params):
    prob = bf.build_problem(8, params, sources="manufactured")
    grid = bf.TimeGrid(t0=0.0, tau=0.1, t_end=0.1)
    res = bf.time_march(prob, bf.SolverConfig(L=l_physical(params)), grid)
    assert len(res.counts) == 1
    assert not res.diverged


def test_time_march_zero_sources_single_iterations(params):
    prob = bf.build_problem(4, params, sources=None)
    grid = bf.TimeGrid(t0=0.0, tau=0.1, t_end=0.5)
    res = bf.time_march(prob, bf.SolverConfig(L=l_physical(params)), grid)
    assert res.counts == [1] * 5
    assert res.average == 1.0


def test_time_march_benchmark_grid_has_ten_steps(params):
    prob = bf.build_problem(4, params, sources="manufactured")
    grid = bf.TimeGrid(t0=0.0, tau=0.1, t_end=1.0)
    res = bf.time_march(prob, bf.SolverConfig(L=l_physical(params)), grid)
    assert len(res.counts) == 10


def test_time_march_divergent_cap_and_flag(params):
    prob = bf.build_problem(8, params, sources="manufactured")
    grid = bf.TimeGrid(t0=0.0, tau=0.1, t_end=1.0)
    res = bf.time_march(prob, bf.SolverConfig(L=l_physical(params), max_iter=1), grid)
    assert res.diverged
    assert res.average == 1.0  # cap sentinel
    assert res.counts[-1] == 1


def test_fixed_stress_solve_records_iterates(problem8, params):
    system = problem8.system
    cfg = bf.SolverConfig(L=l_physical(params), max_iter=5, eps_r=1e-14)
    _, _, trace = bf.fixed_stress_solve(system, cfg, record_iterates=True)
    assert len(trace.pressure_iterates) == trace.iterations
    assert len(trace.displacement_iterates) == trace.iterations
    assert len(trace.increment_norms) == trace.iterations
    assert all(np.isfinite(dp) and dp >= 0.0 for dp, _ in trace.increment_norms)


def test_iteration_counts_minimal_at_optimal(problem8, params):
    # Average counts on a small stabilization grid are never below the
    # count at the estimated optimum (ties allowed).
    prob = bf.build_problem(8, params, sources="manufactured")
    prob.system.prepare()
    est = bf.estimate_spectrum(prob.system, tol=1e-10, maxit=100000, seed=1)
    grid = bf.TimeGrid(t0=0.0, tau=0.1, t_end=1.0)
    opt = bf.time_march(prob, bf.SolverConfig(L=est.l_opt), grid).average
    d_opt = params.alpha**2 / est.l_opt
    for d in np.linspace(0.7, 1.2, 7) * d_opt:
        avg = bf.time_march(
            prob, bf.SolverConfig(L=params.alpha**2 / d), grid
        ).average
        assert opt <= avg + 1e-12
