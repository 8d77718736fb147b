"""Finite element assembly of the coupled poroelastic block system.

For impermeable media the time-discrete two-field problem reads, per step,

    [ A  -B']  [u]   [f]
    [ B   C ]  [p] = [g],      C = inv_m * Mp,

with A the linear elasticity operator 2*mu*(eps(u), eps(v)) + lam*(div u,
div v), B the pressure/divergence coupling alpha*(div u, q), Mp the pressure
mass matrix and g carrying the previous step's state plus the fluid source.
All operators are assembled over the full dof set and then reduced by
eliminating Dirichlet rows and columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .elements import (
    TRIANGLE_QUAD_POINTS,
    TRIANGLE_QUAD_WEIGHTS,
    p1_values,
    p2_gradients,
    p2_values,
)
from .linalg import Factorization, factorize
from .mesh import DofMap, DofTag, Mesh

SOURCE_SCALE = 1.0e9


@dataclass(frozen=True)
class MaterialParams:
    """Material coefficients of the poroelastic medium.

    mu, lam are the Lame parameters (Pa), alpha the Biot-Willis coupling
    coefficient, inv_m the compressibility (1/Pa). Only impermeable media
    are supported, so kappa must be exactly zero.
    """

    mu: float
    lam: float
    alpha: float = 1.0
    inv_m: float = 0.0
    kappa: float = 0.0
    dim: int = 2

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.inv_m < 0.0:
            raise ValueError(f"inv_m must be nonnegative, got {self.inv_m}")
        if self.kappa != 0.0:
            raise ValueError(
                "only impermeable media are supported: kappa must be 0, "
                f"got {self.kappa}"
            )
        if self.dim != 2:
            raise ValueError("only the two-dimensional model is implemented")

    @property
    def drained_bulk_modulus(self) -> float:
        """Physical drained bulk modulus 2*mu/dim + lam."""
        return 2.0 * self.mu / self.dim + self.lam


@dataclass
class BiotSystem:
    """Reduced block system plus material data and cached factorizations.

    A, Ddiv act on the free displacement dofs, Mp on the interior pressure
    dofs and B maps free displacements to interior pressures. f and g are
    the current momentum and flow loads; g changes every time step.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    Mp: sp.csr_matrix
    Ddiv: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    params: MaterialParams
    free_u: np.ndarray
    free_p: np.ndarray
    _a_factor: Factorization | None = field(default=None, repr=False, compare=False)
    _m_factor: Factorization | None = field(default=None, repr=False, compare=False)

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.Mp.shape[0]

    def prepare(self) -> "BiotSystem":
        """Force both factorizations so copies share them."""
        self.a_solve
        self.m_solve
        return self

    @property
    def a_solve(self):
        if self._a_factor is None:
            self._a_factor = factorize(self.A)
        return self._a_factor.solve

    @property
    def m_solve(self):
        if self._m_factor is None:
            self._m_factor = factorize(self.Mp)
        return self._m_factor.solve


def _geometry(mesh: Mesh):
    """Per-triangle affine map data: corner coords, Jacobian, det, inv(J)'."""
    v = mesh.vertices[mesh.triangles]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0.0):
        raise ValueError("mesh contains a degenerate or inverted triangle")
    inv_jt = np.empty_like(jac)
    inv_jt[:, 0, 0] = jac[:, 1, 1]
    inv_jt[:, 0, 1] = -jac[:, 1, 0]
    inv_jt[:, 1, 0] = -jac[:, 0, 1]
    inv_jt[:, 1, 1] = jac[:, 0, 0]
    inv_jt /= det[:, None, None]
    return v, jac, det, inv_jt


def _p2_physical_gradients(mesh: Mesh):
    """Physical P2 gradients at the quadrature points, shape (nt, nq, 6, 2)."""
    _, _, det, inv_jt = _geometry(mesh)
    ref = p2_gradients(TRIANGLE_QUAD_POINTS)
    return np.einsum("eab,qib->eqia", inv_jt, ref), det


def _u_dof_indices(dofs: DofMap) -> np.ndarray:
    """Interleaved displacement dof indices per triangle, shape (nt, 12)."""
    nodes = dofs.tri_nodes
    idx = np.empty((nodes.shape[0], 12), dtype=np.int64)
    idx[:, 0::2] = 2 * nodes
    idx[:, 1::2] = 2 * nodes + 1
    return idx


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape):
    rows = np.broadcast_to(rows, local.shape)
    cols = np.broadcast_to(cols, local.shape)
    mat = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _grad_products(mesh: Mesh) -> np.ndarray:
    """gab[e,i,j,a,b] = integral over cell e of dNi/dx_a * dNj/dx_b."""
    pg, det = _p2_physical_gradients(mesh)
    return np.einsum(
        "q,eqia,eqjb,e->eijab", TRIANGLE_QUAD_WEIGHTS, pg, pg, det, optimize=True
    )


def assemble_elasticity(mesh: Mesh, dofs: DofMap, params: MaterialParams) -> sp.csr_matrix:
    """Assemble the full linear elasticity operator over all displacement dofs.

    The bilinear form is 2*mu*(eps(u), eps(v)) + lam*(div u, div v); for the
    vector P2 basis this expands into mu*(delta_ab grad.grad + cross terms)
    plus the lam div-div block.
    """
    gab = _grad_products(mesh)
    gg = gab[..., 0, 0] + gab[..., 1, 1]
    nt = mesh.num_triangles
    local = np.zeros((nt, 12, 12))
    for a in range(2):
        for b in range(2):
            block = params.mu * gab[..., b, a] + params.lam * gab[..., a, b]
            if a == b:
                block = block + params.mu * gg
            local[:, a::2, b::2] = block
    idx = _u_dof_indices(dofs)
    n = dofs.num_displacement_dofs
    return _scatter(local, idx[:, :, None], idx[:, None, :], (n, n))


def assemble_coupling(mesh: Mesh, dofs: DofMap, alpha: float) -> sp.csr_matrix:
    """Assemble B with B[q, v] = alpha * integral (div phi_v) psi_q.

    Rows are pressure dofs (vertices), columns displacement dofs.
    """
    pg, det = _p2_physical_gradients(mesh)
    vals = p1_values(TRIANGLE_QUAD_POINTS)
    local = alpha * np.einsum(
        "q,qv,eqjb,e->evjb", TRIANGLE_QUAD_WEIGHTS, vals, pg, det, optimize=True
    )
    local = local.reshape(mesh.num_triangles, 3, 12)
    rows = mesh.triangles[:, :, None]
    cols = _u_dof_indices(dofs)[:, None, :]
    shape = (dofs.num_pressure_dofs, dofs.num_displacement_dofs)
    return _scatter(local, np.broadcast_to(rows, local.shape), np.broadcast_to(cols, local.shape), shape)


def assemble_pressure_mass(mesh: Mesh, dofs: DofMap) -> sp.csr_matrix:
    """Assemble the consistent P1 pressure mass matrix over all vertices."""
    _, _, det, _ = _geometry(mesh)
    vals = p1_values(TRIANGLE_QUAD_POINTS)
    local = np.einsum("q,qv,qw,e->evw", TRIANGLE_QUAD_WEIGHTS, vals, vals, det)
    rows = mesh.triangles[:, :, None]
    cols = mesh.triangles[:, None, :]
    nv = dofs.num_pressure_dofs
    return _scatter(
        local,
        np.broadcast_to(rows, local.shape),
        np.broadcast_to(cols, local.shape),
        (nv, nv),
    )


def assemble_divdiv(mesh: Mesh, dofs: DofMap) -> sp.csr_matrix:
    """Assemble the div-div operator (div phi_i, div phi_j), all dofs.

    Its quadratic form is the squared L2 norm of the discrete divergence;
    rigid motions and every discretely divergence-free field lie in its
    kernel.
    """
    gab = _grad_products(mesh)
    nt = mesh.num_triangles
    local = np.zeros((nt, 12, 12))
    for a in range(2):
        for b in range(2):
            local[:, a::2, b::2] = gab[..., a, b]
    idx = _u_dof_indices(dofs)
    n = dofs.num_displacement_dofs
    return _scatter(local, idx[:, :, None], idx[:, None, :], (n, n))


def _quad_coords(mesh: Mesh):
    """Physical coordinates of all quadrature points, two (nt, nq) arrays."""
    v, jac, _, _ = _geometry(mesh)
    pts = v[:, None, 0, :] + np.einsum("eab,qb->eqa", jac, TRIANGLE_QUAD_POINTS)
    return pts[..., 0], pts[..., 1]


def assemble_momentum_load(mesh: Mesh, dofs: DofMap, body_force, t: float) -> np.ndarray:
    """Moment vector of the body force against the vector P2 basis.

    body_force(x, y, t) must accept arrays and return the two components.
    """
    if body_force is None:
        return np.zeros(dofs.num_displacement_dofs)
    xq, yq = _quad_coords(mesh)
    _, _, det, _ = _geometry(mesh)
    fx, fy = body_force(xq, yq, t)
    vals = p2_values(TRIANGLE_QUAD_POINTS)
    lx = np.einsum("q,qi,eq,e->ei", TRIANGLE_QUAD_WEIGHTS, vals, np.asarray(fx), det)
    ly = np.einsum("q,qi,eq,e->ei", TRIANGLE_QUAD_WEIGHTS, vals, np.asarray(fy), det)
    vec = np.zeros(dofs.num_displacement_dofs)
    np.add.at(vec, 2 * dofs.tri_nodes, lx)
    np.add.at(vec, 2 * dofs.tri_nodes + 1, ly)
    return vec


def assemble_source_moment(mesh: Mesh, dofs: DofMap, source, t: float) -> np.ndarray:
    """Moment vector of a scalar source against the P1 basis, all vertices."""
    if source is None:
        return np.zeros(dofs.num_pressure_dofs)
    xq, yq = _quad_coords(mesh)
    _, _, det, _ = _geometry(mesh)
    sval = np.asarray(source(xq, yq, t))
    vals = p1_values(TRIANGLE_QUAD_POINTS)
    lv = np.einsum("q,qv,eq,e->ev", TRIANGLE_QUAD_WEIGHTS, vals, sval, det)
    vec = np.zeros(dofs.num_pressure_dofs)
    np.add.at(vec, mesh.triangles, lv)
    return vec


def assemble_flow_rhs(
    mesh: Mesh,
    dofs: DofMap,
    params: MaterialParams,
    u_prev: np.ndarray,
    p_prev: np.ndarray | None,
    t: float,
    tau: float,
    source=None,
    matrices=None,
) -> np.ndarray:
    """Flow right-hand side for one implicit Euler step, interior dofs only.

    g[q] = inv_m*(p_prev, psi_q) + alpha*(div u_prev, psi_q)
           + tau*(source(., t), psi_q),

    where u_prev and p_prev are full-length coefficient vectors of the
    previous time step. Pass precomputed full (B, Mp) through `matrices` to
    skip reassembly.
    """
    if u_prev.shape[0] != dofs.num_displacement_dofs:
        raise ValueError(
            f"u_prev has length {u_prev.shape[0]}, "
            f"expected {dofs.num_displacement_dofs}"
        )
    if p_prev is not None and p_prev.shape[0] != dofs.num_pressure_dofs:
        raise ValueError(
            f"p_prev has length {p_prev.shape[0]}, "
            f"expected {dofs.num_pressure_dofs}"
        )
    if matrices is None:
        B = assemble_coupling(mesh, dofs, params.alpha)
        Mp = assemble_pressure_mass(mesh, dofs)
    else:
        B, Mp = matrices
    g = B @ u_prev
    if params.inv_m != 0.0 and p_prev is not None:
        g = g + params.inv_m * (Mp @ p_prev)
    if source is not None:
        g = g + tau * assemble_source_moment(mesh, dofs, source, t)
    return g[dofs.free_p]


def manufactured_sources(params: MaterialParams | None = None):
    """Closed-form body force and fluid source with parabolic profiles.

    Both vanish on the domain boundary and at t = 0. The body force carries
    a rock-scale magnitude so displacements are commensurate with the Lame
    parameters; the fluid source stays order one, which keeps the coupled
    solution well conditioned in double precision. Iteration counts of the
    splitting solver do not depend on this choice.
    """

    def profile(x, y, t):
        return t * x * (1.0 - x) * y * (1.0 - y)

    def body_force(x, y, t):
        v = SOURCE_SCALE * profile(x, y, t)
        return v, np.copy(v)

    def fluid_source(x, y, t):
        return profile(x, y, t)

    return body_force, fluid_source


def _validate_tags(dofs: DofMap) -> None:
    if dofs.u_node_tags.shape[0] != dofs.num_nodes:
        raise ValueError("displacement tag array does not match the node count")
    if dofs.p_tags.shape[0] != dofs.mesh.num_vertices:
        raise ValueError("pressure tag array does not match the vertex count")
    u_allowed = {DofTag.INTERIOR, DofTag.DIRICHLET_MOMENTUM, DofTag.NEUMANN_TOP}
    if not set(np.unique(dofs.u_node_tags)) <= u_allowed:
        raise ValueError("invalid displacement tag present")
    p_allowed = {DofTag.INTERIOR, DofTag.DIRICHLET_FLOW}
    if not set(np.unique(dofs.p_tags)) <= p_allowed:
        raise ValueError("invalid pressure tag present")


def apply_boundary_conditions(
    A: sp.csr_matrix,
    B: sp.csr_matrix,
    Mp: sp.csr_matrix,
    Ddiv: sp.csr_matrix,
    f: np.ndarray,
    dofs: DofMap,
    params: MaterialParams,
) -> BiotSystem:
    """Eliminate Dirichlet rows/columns and bundle the reduced system.

    Homogeneous data only: constrained dofs are removed outright, which
    preserves symmetry and definiteness exactly.
    """
    _validate_tags(dofs)
    free_u = dofs.free_u
    free_p = dofs.free_p
    if free_p.size == 0:
        raise ValueError(
            "no interior pressure dofs; use at least 2 subdivisions per side"
        )
    A_red = A[free_u][:, free_u].tocsr()
    B_red = B[free_p][:, free_u].tocsr()
    Mp_red = Mp[free_p][:, free_p].tocsr()
    Ddiv_red = Ddiv[free_u][:, free_u].tocsr()
    return BiotSystem(
        A=A_red,
        B=B_red,
        Mp=Mp_red,
        Ddiv=Ddiv_red,
        f=f[free_u].astype(float),
        g=np.zeros(free_p.size),
        params=params,
        free_u=free_u,
        free_p=free_p,
    )


def build_system(mesh: Mesh, dofs: DofMap, params: MaterialParams) -> BiotSystem:
    """Assemble all operators and reduce them; loads start at zero."""
    A = assemble_elasticity(mesh, dofs, params)
    B = assemble_coupling(mesh, dofs, params.alpha)
    Mp = assemble_pressure_mass(mesh, dofs)
    Ddiv = assemble_divdiv(mesh, dofs)
    f = np.zeros(dofs.num_displacement_dofs)
    return apply_boundary_conditions(A, B, Mp, Ddiv, f, dofs, params)
