"""P1 finite elements for divergence-form systems with Dirichlet data.

Degrees of freedom are interleaved per vertex: dof(v, i) = v * N + i for
component i of the N-vector nodal value at vertex v.  Stiffness entries are
assembled exactly (piecewise-constant coefficients times constant basis
gradients times triangle area); the consistent mass matrix is the standard
P1 one.  Point sources are represented by the P1 interpolation weights of the
containing triangle, so pairing the load with any discrete test field equals
the test field's value at the source point.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField
from .domain import dist_to_boundary
from .meshing import Mesh

__all__ = [
    "DiscreteField",
    "GreenColumn",
    "SolveError",
    "StiffnessOperator",
    "assemble_stiffness",
    "assemble_mass",
    "discrete_delta",
    "solve_dirichlet",
    "green_column_direct",
    "solve_source",
    "gradient_field",
]


class SolveError(RuntimeError):
    """Linear solve failed to meet the residual tolerance."""

    def __init__(self, message: str, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(eq=False)
class DiscreteField:
    """Nodal values (nv, N) of a P1 vector field; zero on the Dirichlet mask."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != len(self.mesh.vertices):
            raise ValueError("values must have one row per mesh vertex")

    @property
    def n_components(self) -> int:
        return self.values.shape[1]

    def at(self, points) -> np.ndarray:
        return self.mesh.interpolate(self.values, points)


@dataclass(eq=False)
class GreenColumn:
    """Green's matrix column(s) for a fixed source point y.

    values[v, i, k] is component i at vertex v of the solution whose source is
    the k-th unit Dirac at y, so values[v, :, :] approximates G(x_v, y).
    """

    mesh: Mesh
    y: np.ndarray
    values: np.ndarray          # (nv, N, N)
    route: str                  # "direct" | "parabolic"
    d_y: float
    provenance: dict = dc_field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def at(self, points) -> np.ndarray:
        """P1 interpolation of G(., y) at the given points, (m, N, N)."""
        return self.mesh.interpolate(self.values, points)

    def magnitude(self) -> np.ndarray:
        """Frobenius norm |G(x_v, y)| per vertex."""
        return np.sqrt(np.einsum("vik,vik->v", self.values, self.values))


@dataclass(eq=False)
class StiffnessOperator:
    """Assembled stiffness matrix with its Dirichlet reduction."""

    mesh: Mesh
    field: CoefficientField
    matrix: sp.csr_matrix        # full (nv*N, nv*N)
    free: np.ndarray             # free dof indices
    symmetric: bool

    @property
    def N(self) -> int:
        return self.field.N

    @cached_property
    def reduced(self) -> sp.csr_matrix:
        return self.matrix[self.free][:, self.free].tocsr()

    @cached_property
    def lu(self):
        return spla.splu(self.reduced.tocsc())

    @cached_property
    def lu_transpose(self):
        if self.symmetric:
            return self.lu
        return spla.splu(self.reduced.T.tocsc())

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        """Zero-padded full dof vector(s) from free dof values."""
        out_shape = (self.matrix.shape[0],) + u_free.shape[1:]
        out = np.zeros(out_shape)
        out[self.free] = u_free
        return out


def assemble_stiffness(mesh: Mesh, field: CoefficientField) -> StiffnessOperator:
    """Exact P1 stiffness matrix for piecewise-constant coefficients.

    Entry (I, J) equals the bilinear form of basis field J against basis
    field I: integral of A[alpha,beta,i,j] D_beta psi_J^j D_alpha psi_I^i.
    Raises if the mesh references a region with no coefficient block or if
    the Dirichlet set is empty.
    """
    if not mesh.boundary_mask.any():
        raise ValueError("mesh has no Dirichlet boundary vertices")
    N = field.N
    nt = len(mesh.triangles)
    # piecewise fields carry their own region map; plain meshes fall back to
    # whatever ids were stamped on the cells
    if field.region_of is not None:
        region_id = field.regions(mesh.centroids)
    else:
        region_id = mesh.cell_region_id
    missing = set(np.unique(region_id)) - set(field.blocks.keys())
    if missing:
        raise KeyError(f"mesh uses region ids without coefficient blocks: {sorted(missing)}")

    g = mesh.grads                    # (nt, 3, 2)
    local = np.zeros((nt, 3, N, 3, N))
    for rid, B in field.blocks.items():
        sel = region_id == rid
        if not sel.any():
            continue
        local[sel] = np.einsum("t,taA,tbB,ABij->taibj",
                               mesh.areas[sel], g[sel], g[sel], B, optimize=True)

    dof = (mesh.triangles[:, :, None] * N + np.arange(N)).reshape(nt, 3 * N)
    rows = np.repeat(dof, 3 * N, axis=1).ravel()
    cols = np.tile(dof, (1, 3 * N)).ravel()
    nd = len(mesh.vertices) * N
    K = sp.coo_matrix((local.reshape(nt, -1).ravel(), (rows, cols)), shape=(nd, nd)).tocsr()
    K.sum_duplicates()

    free = np.where(np.repeat(~mesh.boundary_mask, N))[0]
    return StiffnessOperator(mesh=mesh, field=field, matrix=K, free=free,
                             symmetric=field.is_symmetric())


def assemble_mass(mesh: Mesh, N: int = 1) -> sp.csr_matrix:
    """Consistent P1 mass matrix over all dofs, block identity in components."""
    nt = len(mesh.triangles)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = np.einsum("t,ab,ij->taibj", mesh.areas, base, np.eye(N))
    dof = (mesh.triangles[:, :, None] * N + np.arange(N)).reshape(nt, 3 * N)
    rows = np.repeat(dof, 3 * N, axis=1).ravel()
    cols = np.tile(dof, (1, 3 * N)).ravel()
    nd = len(mesh.vertices) * N
    M = sp.coo_matrix((local.reshape(nt, -1).ravel(), (rows, cols)), shape=(nd, nd)).tocsr()
    M.sum_duplicates()
    return M


def discrete_delta(mesh: Mesh, y, k: int = 0, N: int = 1) -> np.ndarray:
    """Load vector of a unit point source at y in component k.

    The weights are the P1 barycentric coordinates of y in its containing
    triangle, so (load, phi) = phi^k(y) for every discrete field phi and the
    pairing with the constant-one field is exactly 1.
    """
    y = np.asarray(y, dtype=float).reshape(2)
    tri_idx, bary = mesh.locate(y[None])
    if tri_idx[0] < 0:
        raise ValueError(f"source point {tuple(y)} lies outside the mesh")
    if not (0 <= k < N):
        raise ValueError(f"component k={k} out of range for N={N}")
    d = mesh.domain.boundary_distance(y[None], physical_only=False)[0]
    if d <= 1e-12:
        raise ValueError(f"source point {tuple(y)} lies on the Dirichlet boundary")
    load = np.zeros(len(mesh.vertices) * N)
    load[mesh.triangles[tri_idx[0]] * N + k] = bary[0]
    return load


def solve_dirichlet(op: StiffnessOperator, rhs: np.ndarray, tol: float = 1e-10,
                    transpose: bool = False) -> np.ndarray:
    """Solve the reduced system for full-length load vector(s).

    Direct sparse LU; if the relative residual exceeds tol an iterative
    refinement pass is tried, then SolveError (with the residual history) is
    raised.  Returns full-length dof vector(s), zero on the Dirichlet set.
    """
    rhs = np.asarray(rhs, dtype=float)
    one_dim = rhs.ndim == 1
    b = rhs.reshape(rhs.shape[0], -1)[op.free]
    A = op.reduced.T if transpose else op.reduced
    lu = op.lu_transpose if transpose else op.lu
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        out = np.zeros((op.matrix.shape[0],) + rhs.shape[1:])
        return out
    u = lu.solve(b)
    residuals = [float(np.linalg.norm(A @ u - b) / bnorm)]
    if residuals[-1] > tol:
        u = u + lu.solve(b - A @ u)  # one refinement pass
        residuals.append(float(np.linalg.norm(A @ u - b) / bnorm))
    if residuals[-1] > tol:
        raise SolveError(
            f"relative residual {residuals[-1]:.3e} above tol {tol:.3e}", residuals)
    full = op.expand(u)
    return full[:, 0] if one_dim else full.reshape((op.matrix.shape[0],) + rhs.shape[1:])


def green_column_direct(mesh: Mesh, field: CoefficientField, y, tol: float = 1e-10,
                        operator: StiffnessOperator | None = None,
                        transpose: bool = False) -> GreenColumn:
    """Green's matrix column at source y by direct sparse solves.

    Solves one Dirichlet problem per source component with the interpolation-
    weight point load; values[v, i, k] = component i at vertex v for source
    component k.  With transpose=True the transposed operator's column is
    computed (the Green column of the adjoint system).
    """
    op = assemble_stiffness(mesh, field) if operator is None else operator
    N = field.N
    loads = np.stack([discrete_delta(mesh, y, k=k, N=N) for k in range(N)], axis=1)
    sol = solve_dirichlet(op, loads, tol=tol, transpose=transpose)  # (nd, N)
    values = sol.reshape(len(mesh.vertices), N, N)
    d_y = dist_to_boundary(np.asarray(y, dtype=float), mesh.domain)
    return GreenColumn(mesh=mesh, y=np.asarray(y, dtype=float), values=values,
                       route="direct", d_y=float(d_y),
                       provenance={"h": mesh.h, "tol": tol, "transpose": bool(transpose)})


def solve_source(mesh: Mesh, field: CoefficientField, f: DiscreteField,
                 tol: float = 1e-10, operator: StiffnessOperator | None = None,
                 mass: sp.csr_matrix | None = None) -> DiscreteField:
    """Weak solution with volume density f (consistent P1 load M f).

    The returned field u satisfies the discrete weak form: stiffness applied
    to u equals the mass-weighted load of f on every free dof.
    """
    op = assemble_stiffness(mesh, field) if operator is None else operator
    N = field.N
    if f.n_components != N:
        raise ValueError(f"source has {f.n_components} components, field expects {N}")
    M = assemble_mass(mesh, N) if mass is None else mass
    load = M @ f.values.ravel()
    u = solve_dirichlet(op, load, tol=tol)
    return DiscreteField(mesh, u.reshape(len(mesh.vertices), N))


def gradient_field(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Per-triangle constant gradients of nodal values (nv, ...) -> (nt, ..., 2)."""
    vals = values[mesh.triangles]          # (nt, 3, ...)
    g = mesh.grads                         # (nt, 3, 2)
    return np.einsum("ta...,taD->t...D", vals, g)
