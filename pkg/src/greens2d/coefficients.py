"""Piecewise-constant coefficient tensors for N-component elliptic systems.

A coefficient field assigns to each region id a (2, 2, N, N) array A with
entries A[alpha, beta, i, j], defining the divergence-form operator

    (L u)^i = D_alpha ( A[alpha, beta, i, j] D_beta u^j ).

Ellipticity is certified by eigen-decomposition of the symmetrized quadratic
form: lambda is the smallest eigenvalue of Q[(i,alpha),(j,beta)] =
(A[alpha,beta,i,j] + A[beta,alpha,j,i]) / 2 over all regions, and Lambda is
the largest Frobenius norm of a region block.  No symmetry of A is assumed
anywhere; the transpose field swaps both index pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "CoefficientField",
    "validate_ellipticity",
    "transpose_field",
    "sample_block",
    "laplace",
    "identity_system",
    "checkerboard",
    "random_spd",
    "skew",
]


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Region id -> (2, 2, N, N) coefficient blocks, with certified bounds."""

    N: int
    blocks: dict
    region_of: object = None        # callable (m,2) points -> (m,) int ids, or None
    lambda_cert: float | None = None
    Lambda_cert: float | None = None

    def block(self, region_id: int) -> np.ndarray:
        try:
            return self.blocks[int(region_id)]
        except KeyError:
            raise KeyError(f"no coefficient block for region id {region_id}") from None

    def regions(self, points: np.ndarray) -> np.ndarray:
        if self.region_of is None:
            return np.zeros(len(points), dtype=int)
        return np.asarray(self.region_of(points), dtype=int)

    def is_symmetric(self) -> bool:
        """A[alpha,beta,i,j] == A[beta,alpha,j,i] exactly, in every region."""
        return all(np.array_equal(B, B.transpose(1, 0, 3, 2)) for B in self.blocks.values())

    def scaled(self, c: float) -> "CoefficientField":
        blocks = {r: c * B for r, B in self.blocks.items()}
        lam = None if self.lambda_cert is None else c * self.lambda_cert
        Lam = None if self.Lambda_cert is None else c * self.Lambda_cert
        return replace(self, blocks=blocks, lambda_cert=lam, Lambda_cert=Lam)


def _check_block(B: np.ndarray, N: int, rid) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != (2, 2, N, N):
        raise ValueError(f"region {rid}: block shape {B.shape}, expected (2, 2, {N}, {N})")
    if not np.all(np.isfinite(B)):
        raise ValueError(f"region {rid}: block has non-finite entries")
    return B


def _form_matrix(B: np.ndarray) -> np.ndarray:
    """Quadratic-form matrix Q[(i,alpha),(j,beta)] = A[alpha,beta,i,j]."""
    N = B.shape[2]
    return B.transpose(2, 0, 3, 1).reshape(2 * N, 2 * N)


def validate_ellipticity(field: CoefficientField) -> CoefficientField:
    """Certify (lambda, Lambda) by eigen-decomposition over all regions.

    Returns a copy with lambda_cert / Lambda_cert set.  Raises ValueError if
    the symmetrized form is not positive definite in some region (the
    offending region id is named).
    """
    lam = np.inf
    Lam = 0.0
    for rid, B in field.blocks.items():
        B = _check_block(B, field.N, rid)
        Q = _form_matrix(B)
        S = 0.5 * (Q + Q.T)
        ev = float(np.linalg.eigvalsh(S).min())
        if ev <= 0:
            raise ValueError(
                f"region {rid}: symmetrized form has min eigenvalue {ev:.6g} <= 0 "
                "(not strongly elliptic)")
        lam = min(lam, ev)
        Lam = max(Lam, float(np.sqrt(np.sum(B * B))))
    return replace(field, lambda_cert=lam, Lambda_cert=Lam)


def transpose_field(field: CoefficientField) -> CoefficientField:
    """Swap both index pairs: tA[alpha,beta,i,j] = A[beta,alpha,j,i].

    An involution; the certified lambda and Lambda carry over unchanged
    because the symmetrized form matrix and the Frobenius norm are identical.
    """
    blocks = {r: np.ascontiguousarray(B.transpose(1, 0, 3, 2)) for r, B in field.blocks.items()}
    return replace(field, blocks=blocks)


def sample_block(field: CoefficientField, region_id: int) -> np.ndarray:
    return field.block(region_id).copy()


# -- generators -------------------------------------------------------------

def _isotropic_block(a: float, N: int) -> np.ndarray:
    B = np.zeros((2, 2, N, N))
    for al in range(2):
        B[al, al] = a * np.eye(N)
    return B


def laplace() -> CoefficientField:
    """Scalar Laplacian: A[alpha,beta] = delta_{alpha beta}, N = 1."""
    return validate_ellipticity(CoefficientField(N=1, blocks={0: _isotropic_block(1.0, 1)}))


def identity_system(N: int) -> CoefficientField:
    """Decoupled N-component Laplacian: A[alpha,beta,i,j] = delta_ab delta_ij."""
    return validate_ellipticity(CoefficientField(N=N, blocks={0: _isotropic_block(1.0, N)}))


def checkerboard(a_min: float, a_max: float, n_cells: int,
                 bbox=(0.0, 0.0, 1.0, 1.0), N: int = 1) -> CoefficientField:
    """n_cells x n_cells checkerboard of isotropic scalar multipliers.

    Region id = column + n_cells * row over the given bounding box
    (x0, y0, x1, y1); points outside are clamped to the nearest cell.
    """
    if not (0 < a_min <= a_max):
        raise ValueError("need 0 < a_min <= a_max")
    x0, y0, x1, y1 = bbox
    n = int(n_cells)

    def region_of(points):
        pts = np.atleast_2d(points)
        ix = np.clip(((pts[:, 0] - x0) / (x1 - x0) * n).astype(int), 0, n - 1)
        iy = np.clip(((pts[:, 1] - y0) / (y1 - y0) * n).astype(int), 0, n - 1)
        return ix + n * iy

    blocks = {}
    for iy in range(n):
        for ix in range(n):
            a = a_min if (ix + iy) % 2 == 0 else a_max
            blocks[ix + n * iy] = _isotropic_block(a, N)
    return validate_ellipticity(CoefficientField(N=N, blocks=blocks, region_of=region_of))


def random_spd(seed: int, lambda_target: float, Lambda_target: float,
               N: int = 1, n_regions: int = 4, bbox=(0.0, 0.0, 1.0, 1.0)) -> CoefficientField:
    """Random symmetric positive-definite blocks with certified bounds.

    Each region gets Q^T diag(d) Q mapped back to A, with d[0] = lambda_target
    and the rest drawn so the Frobenius norm stays below Lambda_target.
    """
    if not (0 < lambda_target and Lambda_target >= lambda_target * np.sqrt(2 * N)):
        raise ValueError("need Lambda_target >= lambda_target * sqrt(2N) > 0")
    rng = np.random.default_rng(seed)
    m = 2 * N
    d_cap = np.sqrt(max(Lambda_target ** 2 - (m - 1) * lambda_target ** 2, 0.0) / m) \
        if m > 1 else Lambda_target
    d_cap = max(d_cap, lambda_target)
    blocks = {}
    for rid in range(int(n_regions)):
        Qr, _ = np.linalg.qr(rng.standard_normal((m, m)))
        d = rng.uniform(lambda_target, d_cap, size=m)
        d[rng.integers(m)] = lambda_target
        S = Qr.T @ np.diag(d) @ Qr
        S = 0.5 * (S + S.T)
        blocks[rid] = np.ascontiguousarray(
            S.reshape(N, 2, N, 2).transpose(1, 3, 0, 2))
    x0, y0, x1, y1 = bbox
    n = int(np.ceil(np.sqrt(n_regions)))

    def region_of(points):
        pts = np.atleast_2d(points)
        ix = np.clip(((pts[:, 0] - x0) / (x1 - x0) * n).astype(int), 0, n - 1)
        iy = np.clip(((pts[:, 1] - y0) / (y1 - y0) * n).astype(int), 0, n - 1)
        return (ix + n * iy) % int(n_regions)

    return validate_ellipticity(CoefficientField(N=N, blocks=blocks, region_of=region_of))


def skew(drift: float, n_strips: int = 2, bbox=(0.0, 0.0, 1.0, 1.0)) -> CoefficientField:
    """Scalar field with a region-wise sign-flipped antisymmetric part.

    Block in strip s: A = I + (-1)^s * drift * [[0, 1], [-1, 0]] (so A12 =
    +/-drift, A21 = -/+drift).  The sign flip across vertical strips is what
    makes the operator genuinely non-self-adjoint: a globally constant
    antisymmetric part drops out of the weak form identically (for H^1_0 and
    equally for P1 functions), leaving a symmetric stiffness matrix.
    The symmetrized form is the identity, so lambda = 1 for every drift.
    """
    x0, _, x1, _ = bbox
    n = int(n_strips)

    def region_of(points):
        pts = np.atleast_2d(points)
        return np.clip(((pts[:, 0] - x0) / (x1 - x0) * n).astype(int), 0, n - 1)

    blocks = {}
    for s in range(n):
        B = _isotropic_block(1.0, 1)
        d = drift if s % 2 == 0 else -drift
        B[0, 1, 0, 0] = d
        B[1, 0, 0, 0] = -d
        blocks[s] = B
    return validate_ellipticity(CoefficientField(N=1, blocks=blocks, region_of=region_of))
