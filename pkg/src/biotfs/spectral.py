"""Spectral estimation for the pressure Schur complement pencil.

The splitting solver's pressure update is a relaxed Richardson iteration on
S = inv_m * Mp + B inv(A) B', measured against the pressure mass matrix Mp.
Its contraction factor for relaxation omega is

    rho(omega) = max(|1 - omega*lambda_min|, |1 - omega*lambda_max|),

with the extreme eigenvalues of the pencil (S, Mp). The optimal relaxation is
omega = 2 / (lambda_max + lambda_min), which translates into the optimal
stabilization parameter l_opt = 1/omega - inv_m of the splitting scheme. The
same eigenvalues identify two bulk-type moduli: k_star = alpha^2 /
(lambda_max - inv_m), which also solves an independent div-div/elasticity
eigenvalue problem, and beta = alpha^2 / (lambda_min - inv_m), which exists
for inf-sup stable discretizations.

Everything here is matrix-free: S is only ever applied through the cached
factorization of A, never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .assembly import BiotSystem, MaterialParams
from .linalg import factorize


class EstimationError(RuntimeError):
    """A spectral estimate is structurally unavailable (degenerate input)."""


class PowerResult(NamedTuple):
    """Outcome of a power iteration: estimate, step count, convergence flag
    and the final (M-normalized) iterate."""

    value: float
    steps: int
    converged: bool
    vector: np.ndarray


@dataclass(frozen=True)
class SpectralEstimates:
    """Extreme pencil eigenvalues and every quantity derived from them.

    Invariants: 0 < lambda_min <= lambda_max, beta >= k_star,
    omega_opt = 2/(lambda_max + lambda_min), l_opt = 1/omega_opt - inv_m
    = (alpha^2/2)(1/k_star + 1/beta), rho_opt in [0, 1).
    """

    lambda_max: float
    lambda_min: float
    k_star: float
    beta: float
    omega_opt: float
    l_opt: float
    rho_opt: float
    iterations_used: tuple[int, int] | None = None
    converged: bool = True

    def rho(self, omega: float) -> float:
        """Richardson contraction factor for an arbitrary relaxation."""
        return max(
            abs(1.0 - omega * self.lambda_min),
            abs(1.0 - omega * self.lambda_max),
        )


class MatrixPencil:
    """Explicit symmetric pencil (K, M); M defaults to the identity."""

    def __init__(self, K, M=None):
        self._K = K
        self._M = M
        self._m_solve = None
        self.size = K.shape[0]

    def apply_k(self, x):
        return self._K @ x

    def apply_m(self, x):
        return x if self._M is None else self._M @ x

    def solve_m(self, x):
        if self._M is None:
            return x
        if self._m_solve is None:
            self._m_solve = factorize(sp.csr_matrix(self._M)).solve
        return self._m_solve(x)


class _SchurPencil:
    """Matrix-free pencil (S, Mp) built on a reduced system."""

    def __init__(self, system: BiotSystem, inner_tol=None):
        self._system = system
        self._inner_tol = inner_tol
        self.size = system.n_p

    def apply_k(self, x):
        return schur_apply(self._system, x, self._inner_tol)

    def apply_m(self, x):
        return self._system.Mp @ x

    def solve_m(self, x):
        return self._system.m_solve(x)


class _ShiftedPencil:
    """Pencil (shift*M - K, M) built on another pencil."""

    def __init__(self, base, shift: float):
        self._base = base
        self._shift = shift
        self.size = base.size

    def apply_k(self, x):
        return self._shift * self._base.apply_m(x) - self._base.apply_k(x)

    def apply_m(self, x):
        return self._base.apply_m(x)

    def solve_m(self, x):
        return self._base.solve_m(x)


def _as_pencil(obj):
    return obj if hasattr(obj, "apply_k") else _SchurPencil(obj)


def schur_apply(system: BiotSystem, p: np.ndarray, inner_tol=None) -> np.ndarray:
    """Apply S = inv_m*Mp + B inv(A) B' without forming it.

    The inner elastic solve uses the cached direct factorization, which
    satisfies any requested tolerance; inner_tol is accepted for interface
    compatibility.
    """
    if p.shape[0] != system.n_p:
        raise ValueError(f"pressure vector has length {p.shape[0]}, expected {system.n_p}")
    out = system.B @ system.a_solve(system.B.T @ p)
    if system.params.inv_m != 0.0:
        out = out + system.params.inv_m * (system.Mp @ p)
    return out


def _power_largest(pencil, tol: float, maxit: int, seed: int) -> PowerResult:
    """Largest eigenvalue of the pencil (K, M) by M-normalized power steps.

    Iterates x <- inv(M) K x and stops once successive Rayleigh quotients
    x'Kx / x'Mx agree to the relative tolerance.
    """
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(pencil.size)
    nrm = np.sqrt(float(x @ pencil.apply_m(x)))
    x /= nrm
    kx = pencil.apply_k(x)
    rho = float(x @ kx)
    for step in range(1, maxit + 1):
        y = pencil.solve_m(kx)
        ynrm = np.sqrt(max(float(y @ pencil.apply_m(y)), 0.0))
        if ynrm <= 1e-290:
            # The operator annihilates the iterate: dominant eigenvalue 0.
            return PowerResult(0.0, step, True, x)
        x = y / ynrm
        kx = pencil.apply_k(x)
        rho_new = float(x @ kx)
        if abs(rho_new - rho) <= tol * max(abs(rho_new), 1e-300):
            return PowerResult(rho_new, step, True, x)
        rho = rho_new
    return PowerResult(rho, maxit, False, x)


def power_iteration_max(system, tol: float = 1e-8, maxit: int = 50000,
                        seed: int = 1) -> PowerResult:
    """Largest eigenvalue of the Schur pencil (S, Mp).

    Accepts a reduced system or any explicit pencil. When the step cap is
    reached the best estimate is returned with converged=False.
    """
    return _power_largest(_as_pencil(system), tol, maxit, seed)


def power_iteration_min(system, lambda_max: float, tol: float = 1e-8,
                        maxit: int = 50000, seed: int = 1) -> PowerResult:
    """Smallest eigenvalue of the Schur pencil via the shifted pencil.

    Runs the power iteration on (lambda_max*M - S, M), whose largest
    eigenvalue is lambda_max - lambda_min.
    """
    shifted = _ShiftedPencil(_as_pencil(system), lambda_max)
    res = _power_largest(shifted, tol, maxit, seed)
    return PowerResult(lambda_max - res.value, res.steps, res.converged, res.vector)


def estimate_k_star(system, tol: float = 1e-8, maxit: int = 50000,
                    seed: int = 1) -> float:
    """Sharpest constant k with  u'Au >= k * ||div u||^2  on the free space.

    Computed as the reciprocal of the largest eigenvalue of the pencil
    (Ddiv, A); it is at least the physical drained bulk modulus and depends
    on the boundary conditions.
    """
    if hasattr(system, "apply_k"):
        pencil = system
    else:
        pencil = _DivPencil(system)
    res = _power_largest(pencil, tol, maxit, seed)
    if res.value <= 0.0:
        raise EstimationError(
            "div-div form vanishes on the displacement space; "
            "the discretization is degenerate"
        )
    return 1.0 / res.value


class _DivPencil:
    """Pencil (Ddiv, A) on the free displacement space of a system."""

    def __init__(self, system: BiotSystem):
        self._system = system
        self.size = system.n_u

    def apply_k(self, x):
        return self._system.Ddiv @ x

    def apply_m(self, x):
        return self._system.A @ x

    def solve_m(self, x):
        return self._system.a_solve(x)


def estimate_beta(system: BiotSystem, lambda_min: float) -> float:
    """Inf-sup energy constant beta = alpha^2 / (lambda_min - inv_m).

    Raises EstimationError when lambda_min does not exceed inv_m, which
    signals a loss of inf-sup stability.
    """
    params = system.params
    denom = lambda_min - params.inv_m
    if denom <= 1e-12 * max(abs(lambda_min), params.inv_m, 1e-300):
        raise EstimationError(
            "lambda_min does not exceed the compressibility term; "
            "the discretization is not inf-sup stable"
        )
    return params.alpha**2 / denom


def optimal_parameters(
    lambda_max: float,
    lambda_min: float,
    params: MaterialParams,
    iterations_used: tuple[int, int] | None = None,
    converged: bool = True,
) -> SpectralEstimates:
    """Derive every tuning quantity from the extreme pencil eigenvalues."""
    if not 0.0 < lambda_min <= lambda_max * (1.0 + 1e-12):
        raise ValueError(
            f"eigenvalue ordering violated: lambda_min={lambda_min}, "
            f"lambda_max={lambda_max}"
        )
    lambda_min = min(lambda_min, lambda_max)
    alpha2 = params.alpha**2
    gap_max = lambda_max - params.inv_m
    gap_min = lambda_min - params.inv_m
    if gap_max <= 0.0 or gap_min <= 0.0:
        raise EstimationError(
            "pencil eigenvalues do not exceed the compressibility term"
        )
    omega_opt = 2.0 / (lambda_max + lambda_min)
    return SpectralEstimates(
        lambda_max=lambda_max,
        lambda_min=lambda_min,
        k_star=alpha2 / gap_max,
        beta=alpha2 / gap_min,
        omega_opt=omega_opt,
        l_opt=1.0 / omega_opt - params.inv_m,
        rho_opt=(lambda_max - lambda_min) / (lambda_max + lambda_min),
        iterations_used=iterations_used,
        converged=converged,
    )


def estimate_spectrum(system: BiotSystem, tol: float = 1e-8,
                      maxit: int = 50000, seed: int = 1) -> SpectralEstimates:
    """Estimate both extreme eigenvalues and derive the optimal parameters."""
    res_max = power_iteration_max(system, tol=tol, maxit=maxit, seed=seed)
    res_min = power_iteration_min(
        system, res_max.value, tol=tol, maxit=maxit, seed=seed
    )
    return optimal_parameters(
        res_max.value,
        res_min.value,
        system.params,
        iterations_used=(res_max.steps, res_min.steps),
        converged=res_max.converged and res_min.converged,
    )
