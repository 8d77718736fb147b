"""Experiment drivers: estimates, single solves, stabilization sweeps and a
verification battery, with CSV/JSON reporting.

Report schemas (stable within a major version):

* estimate: {"schema": "biotfs.estimate/1", "version", "config_hash",
  "mode", "meshes": [{"n", "h", "lambda_max", "lambda_min", "k_star",
  "beta", "omega_opt", "l_opt", "rho_opt", "d_opt", "iterations_used",
  "converged"}]}
* solve: {"schema": "biotfs.solve/1", ..., "n", "h", "L", "L_mode",
  "steps": [{"index", "t", "iterations", "converged"}],
  "average_iterations", "diverged", "final_pressure_norm",
  "final_displacement_norm"}
* sweep CSV columns: n,h,D,L,avg_iterations,diverged (rows sorted by (n, D))
  plus a JSON sidecar {"schema": "biotfs.sweep/1", ..., "rows": [...],
  "estimates": {str(n): {...}}, "predicted_d_opt": {str(n): float}}
* verify: {"schema": "biotfs.verify/1", ..., "passed", "checks":
  [{"name", "measured", "bound", "op", "passed"}]}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import manufactured_sources
from .config import ExperimentConfig, config_hash
from .linalg import dense_generalized_symmetric_eigen, m_norm, save_matrix_market
from .mesh import write_mesh_text
from .solver import (
    SolverConfig,
    TransientProblem,
    build_problem,
    dense_schur,
    fixed_stress_step,
    monolithic_solve,
    richardson_step,
    schur_rhs,
    time_march,
)
from .spectral import (
    SpectralEstimates,
    estimate_beta,
    estimate_k_star,
    estimate_spectrum,
    optimal_parameters,
    power_iteration_max,
    power_iteration_min,
    schur_apply,
)


def _problem(cfg: ExperimentConfig, n: int) -> TransientProblem:
    sources = "manufactured" if cfg.sources == "manufactured" else None
    return build_problem(n, cfg.material, sources=sources)


def _estimates(cfg: ExperimentConfig, problem: TransientProblem,
               mode: str | None = None, seed: int | None = None) -> SpectralEstimates:
    spc = cfg.spectral
    if mode is not None:
        spc = dataclasses.replace(spc, mode=mode, tol=None)
    if seed is not None:
        spc = dataclasses.replace(spc, seed=seed)
    return estimate_spectrum(
        problem.system, tol=spc.resolved_tol, maxit=spc.maxit, seed=spc.seed
    )


def estimates_to_dict(n: int, est: SpectralEstimates, alpha: float) -> dict:
    return {
        "n": n,
        "h": 1.0 / n,
        "lambda_max": est.lambda_max,
        "lambda_min": est.lambda_min,
        "k_star": est.k_star,
        "beta": est.beta,
        "omega_opt": est.omega_opt,
        "l_opt": est.l_opt,
        "rho_opt": est.rho_opt,
        "d_opt": alpha**2 / est.l_opt,
        "iterations_used": list(est.iterations_used) if est.iterations_used else None,
        "converged": est.converged,
    }


def estimate_report(cfg: ExperimentConfig, mesh_ns=None, mode: str | None = None,
                    seed: int | None = None) -> dict:
    """Spectral estimates and derived parameters for every requested mesh."""
    ns = tuple(mesh_ns) if mesh_ns else cfg.mesh_ns
    meshes = []
    for n in ns:
        problem = _problem(cfg, n)
        est = _estimates(cfg, problem, mode=mode, seed=seed)
        meshes.append(estimates_to_dict(n, est, cfg.material.alpha))
    return {
        "schema": "biotfs.estimate/1",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "mode": mode or cfg.spectral.mode,
        "meshes": meshes,
    }


def solve_report(cfg: ExperimentConfig, n: int, L_spec=None,
                 mode: str | None = None, seed: int | None = None) -> dict:
    """Time-march one mesh at a fixed or estimator-chosen stabilization."""
    problem = _problem(cfg, n)
    L_spec = cfg.L if L_spec is None else L_spec
    if L_spec == "optimal":
        est = _estimates(cfg, problem, mode=mode, seed=seed)
        L = est.l_opt
        l_mode = "optimal"
    else:
        L = float(L_spec)
        l_mode = "fixed"
    solver = SolverConfig(
        L=L, eps_r=cfg.eps_r, max_iter=cfg.max_iter, inner_tol=cfg.inner_tol
    )
    result = time_march(problem, solver, cfg.temporal)
    steps = [
        {"index": i + 1, "t": float(t), "iterations": int(c), "converged": bool(ok)}
        for i, (t, c, ok) in enumerate(
            zip(result.times, result.counts, result.converged_flags)
        )
    ]
    return {
        "schema": "biotfs.solve/1",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "n": n,
        "h": 1.0 / n,
        "L": L,
        "L_mode": l_mode,
        "steps": steps,
        "average_iterations": result.average,
        "diverged": result.diverged,
        "final_pressure_norm": m_norm(problem.system.Mp, result.p),
        "final_displacement_norm": m_norm(problem.system.A, result.u),
    }


@dataclass(frozen=True)
class SweepRow:
    n: int
    h: float
    D: float
    L: float
    avg_iterations: float
    diverged: bool


@dataclass
class SweepReport:
    """Average iteration counts over the stabilization grid, per mesh."""

    rows: list
    estimates: dict  # n -> SpectralEstimates
    predicted_d_opt: dict  # n -> float
    config_hash: str
    alpha: float

    def to_csv_text(self) -> str:
        lines = ["n,h,D,L,avg_iterations,diverged"]
        for r in self.rows:
            lines.append(
                f"{r.n},{r.h!r},{r.D!r},{r.L!r},{r.avg_iterations!r},"
                f"{'true' if r.diverged else 'false'}"
            )
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "schema": "biotfs.sweep/1",
            "version": __version__,
            "config_hash": self.config_hash,
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "estimates": {
                str(n): estimates_to_dict(n, est, self.alpha)
                for n, est in self.estimates.items()
            },
            "predicted_d_opt": {str(n): d for n, d in self.predicted_d_opt.items()},
        }


def sweep_report(cfg: ExperimentConfig, mesh_ns=None) -> SweepReport:
    """Run the stabilization sweep over every (mesh, D) pair.

    Rows never abort the sweep: a non-convergent or failed row is recorded
    with the iteration cap as its average and the divergence flag set.
    """
    ns = tuple(mesh_ns) if mesh_ns else cfg.mesh_ns
    alpha = cfg.material.alpha
    rows = []
    estimates = {}
    d_opts = {}
    for n in sorted(ns):
        problem = _problem(cfg, n)
        est = _estimates(cfg, problem)
        estimates[n] = est
        d_opts[n] = alpha**2 / est.l_opt
        for d_value in cfg.sweep.values():
            L = float(alpha**2 / d_value)
            solver = SolverConfig(
                L=L, eps_r=cfg.eps_r, max_iter=cfg.max_iter, inner_tol=cfg.inner_tol
            )
            try:
                result = time_march(problem, solver, cfg.temporal)
                avg = result.average
                diverged = result.diverged
            except Exception:
                avg = float(cfg.max_iter)
                diverged = True
            rows.append(
                SweepRow(
                    n=n,
                    h=1.0 / n,
                    D=float(d_value),
                    L=L,
                    avg_iterations=avg,
                    diverged=diverged,
                )
            )
    return SweepReport(
        rows=rows,
        estimates=estimates,
        predicted_d_opt=d_opts,
        config_hash=config_hash(cfg),
        alpha=alpha,
    )


# ---------------------------------------------------------------------------
# verification battery


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    bound: float
    op: str  # "<=" or ">"
    passed: bool

    @staticmethod
    def le(name, measured, bound):
        return Check(name, float(measured), float(bound), "<=", bool(measured <= bound))

    @staticmethod
    def gt(name, measured, bound):
        return Check(name, float(measured), float(bound), ">", bool(measured > bound))


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _loaded_system(problem: TransientProblem, tau: float):
    """System carrying first-step loads of the built-in sources."""
    from .assembly import assemble_momentum_load, assemble_source_moment

    t = tau
    sys_run = dataclasses.replace(problem.system)
    sys_run.f = assemble_momentum_load(
        problem.mesh, problem.dofs, problem.body_force, t
    )[problem.dofs.free_u]
    moment = assemble_source_moment(
        problem.mesh, problem.dofs, problem.fluid_source, t
    )
    sys_run.g = tau * moment[problem.dofs.free_p]
    return sys_run


def verify_report(cfg: ExperimentConfig) -> dict:
    """Dense-oracle verification battery on small meshes.

    Checks the Richardson equivalence of the splitting scheme, the spectral
    identifications of both bulk-type constants, the contraction bound, the
    parameter ordering chain and the estimator accuracy, each against an
    explicit numeric bound.
    """
    checks = []
    params = cfg.material
    alpha2 = params.alpha**2

    # Small dense oracle mesh.
    prob4 = build_problem(4, params, sources="manufactured")
    sys4 = prob4.system.prepare()
    s4 = dense_schur(sys4)
    mp4 = sys4.Mp.toarray()
    w, _ = dense_generalized_symmetric_eigen(s4, mp4)
    lam_min_d, lam_max_d = float(w[0]), float(w[-1])

    k_star_div = estimate_k_star(sys4, tol=1e-10, maxit=100000, seed=cfg.spectral.seed)
    checks.append(
        Check.le(
            "kstar_route_vs_lambda_max_n4",
            _rel(alpha2 / k_star_div + params.inv_m, lam_max_d),
            1e-6,
        )
    )

    bab = s4 - params.inv_m * mp4
    wb, _ = dense_generalized_symmetric_eigen(bab, mp4)
    beta_dense = alpha2 / float(wb[0])
    beta_ident = alpha2 / (lam_min_d - params.inv_m)
    checks.append(
        Check.le("beta_route_vs_lambda_min_n4", _rel(beta_dense, beta_ident), 1e-6)
    )

    res_max = power_iteration_max(sys4, tol=1e-8, maxit=100000, seed=cfg.spectral.seed)
    res_min = power_iteration_min(
        sys4, res_max.value, tol=1e-8, maxit=100000, seed=cfg.spectral.seed
    )
    checks.append(
        Check.le("power_max_vs_dense_n4", _rel(res_max.value, lam_max_d), 1e-6)
    )
    checks.append(
        Check.le("power_min_vs_dense_n4", _rel(res_min.value, lam_min_d), 1e-6)
    )

    rng = np.random.default_rng(cfg.spectral.seed)
    sym_err = 0.0
    scale = abs(w).max() * float(np.linalg.norm(mp4, 2))
    for _ in range(20):
        pv = rng.standard_normal(sys4.n_p)
        qv = rng.standard_normal(sys4.n_p)
        sym_err = max(
            sym_err,
            abs(float(qv @ schur_apply(sys4, pv)) - float(pv @ schur_apply(sys4, qv))),
        )
    checks.append(Check.le("schur_symmetry_n4", sym_err / scale, 1e-10))

    # Richardson equivalence and contraction on a slightly larger mesh.
    prob8 = build_problem(8, params, sources="manufactured")
    sys8 = _loaded_system(prob8, cfg.temporal.tau)
    sys8.prepare()
    s8 = dense_schur(sys8)
    mp8 = sys8.Mp.toarray()
    w8, v8 = dense_generalized_symmetric_eigen(s8, mp8)
    lmin8, lmax8 = float(w8[0]), float(w8[-1])
    est8 = optimal_parameters(lmax8, lmin8, params)

    L_phys = alpha2 / params.drained_bulk_modulus
    omega = 1.0 / (L_phys + params.inv_m)
    gt = schur_rhs(sys8)
    p_fs = np.zeros(sys8.n_p)
    u_fs = sys8.a_solve(sys8.f + sys8.B.T @ p_fs)
    p_ri = p_fs.copy()
    eq_err = 0.0
    for _ in range(20):
        u_fs, p_fs = fixed_stress_step(sys8, u_fs, p_fs, L_phys)
        p_ri = richardson_step(sys8, p_ri, omega, g_tilde=gt)
        eq_err = max(
            eq_err,
            float(np.linalg.norm(p_fs - p_ri)) / max(float(np.linalg.norm(p_ri)), 1e-300),
        )
    checks.append(Check.le("richardson_equivalence_n8", eq_err, 1e-8))

    _, p_exact = monolithic_solve(sys8)
    worst = -np.inf
    for om in (0.5 * est8.omega_opt, est8.omega_opt, 0.9 * (2.0 / lmax8)):
        rho_bound = est8.rho(om)
        err = rng.standard_normal(sys8.n_p)
        err *= 1e8 * m_norm(sys8.Mp, p_exact) / m_norm(sys8.Mp, err)
        p_it = p_exact + err
        prev = m_norm(sys8.Mp, err)
        for _ in range(50):
            p_it = richardson_step(sys8, p_it, om, g_tilde=gt)
            cur = m_norm(sys8.Mp, p_it - p_exact)
            worst = max(worst, cur / prev - rho_bound)
            prev = cur
    checks.append(Check.le("contraction_bound_n8", worst, 1e-8))

    err = rng.standard_normal(sys8.n_p)
    err *= 1e8 * m_norm(sys8.Mp, p_exact) / m_norm(sys8.Mp, err)
    p_it = p_exact + err
    norms = [m_norm(sys8.Mp, err)]
    for _ in range(50):
        p_it = richardson_step(sys8, p_it, est8.omega_opt, g_tilde=gt)
        norms.append(m_norm(sys8.Mp, p_it - p_exact))
    tail_ratio = (norms[50] / norms[25]) ** (1.0 / 25.0)
    checks.append(
        Check.le("contraction_asymptote_n8", abs(tail_ratio / est8.rho_opt - 1.0), 0.05)
    )

    checks.append(Check.gt("ordering_beta_over_kstar_n8", est8.beta / est8.k_star, 1.0 - 1e-12))
    checks.append(
        Check.gt(
            "ordering_kstar_over_kdr_n8",
            est8.k_star / params.drained_bulk_modulus,
            1.0 - 1e-12,
        )
    )
    in_lo = est8.l_opt >= alpha2 / (2.0 * est8.k_star) * (1.0 - 1e-12)
    in_hi = est8.l_opt <= alpha2 / est8.k_star * (1.0 + 1e-12)
    checks.append(
        Check("lopt_within_interval_n8", float(in_lo and in_hi), 1.0, ">", in_lo and in_hi)
    )

    # Divergent relaxation grows the error along the top eigenvector.
    L_div = 0.9 * alpha2 / (2.0 * est8.k_star)
    om_div = 1.0 / (L_div + params.inv_m)
    top = v8[:, -1]
    p_it = p_exact + top * (m_norm(sys8.Mp, p_exact) / m_norm(sys8.Mp, top))
    e0 = m_norm(sys8.Mp, p_it - p_exact)
    for _ in range(10):
        p_it = richardson_step(sys8, p_it, om_div, g_tilde=gt)
    checks.append(
        Check.gt("divergence_growth_n8", m_norm(sys8.Mp, p_it - p_exact) / e0, 1.0)
    )

    est_fine = estimate_spectrum(sys8, tol=1e-8, maxit=100000, seed=cfg.spectral.seed)
    est_coarse = estimate_spectrum(sys8, tol=1e-3, maxit=100000, seed=cfg.spectral.seed)
    checks.append(
        Check.le("coarse_vs_fine_lopt_n8", _rel(est_coarse.l_opt, est_fine.l_opt), 0.02)
    )

    return {
        "schema": "biotfs.verify/1",
        "version": __version__,
        "config_hash": config_hash(cfg),
        "passed": all(c.passed for c in checks),
        "checks": [dataclasses.asdict(c) for c in checks],
    }


def dump_system(problem: TransientProblem, directory) -> None:
    """Write the reduced operators (Matrix Market) and the mesh dump."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sys_red = problem.system
    save_matrix_market(directory / "A.mtx", sys_red.A)
    save_matrix_market(directory / "B.mtx", sys_red.B)
    save_matrix_market(directory / "Mp.mtx", sys_red.Mp)
    save_matrix_market(directory / "Ddiv.mtx", sys_red.Ddiv)
    write_mesh_text(problem.mesh, directory / "mesh.txt")
