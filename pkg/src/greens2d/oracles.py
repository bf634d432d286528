"""Closed-form Dirichlet Green's functions used as accuracy oracles.

Both oracles are for the scalar Laplacian: the unit disk (image charge at the
inverse point) and the half-plane (reflection).  A self-validation suite
checks boundary vanishing to 1e-12 and discrete harmonicity under a shrinking
five-point stencil; it gates any use of the oracles for acceptance decisions.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "disk_green",
    "disk_green_gradient",
    "halfplane_green",
    "oracle_selfcheck",
]

_TWO_PI = 2.0 * np.pi


def disk_green(x, y, radius: float = 1.0) -> np.ndarray:
    """Green's function of the Laplacian on the disk of given radius.

    G(x, y) = (1/2pi) ln( |y| |x - y*| / (R |x - y|) ) with y* = R^2 y / |y|^2,
    reducing to (1/2pi) ln(R / |x - y|) for y at the center.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    yv = np.asarray(y, dtype=float).reshape(2)
    R = float(radius)
    r = np.linalg.norm(X - yv, axis=1)
    ay = np.linalg.norm(yv)
    with np.errstate(divide="ignore"):
        if ay < 1e-300:
            val = np.log(R / r) / _TWO_PI
        else:
            ystar = (R * R / ay**2) * yv
            val = np.log(ay * np.linalg.norm(X - ystar, axis=1) / (R * r)) / _TWO_PI
    return val if np.asarray(x).ndim == 2 else float(val[0])


def disk_green_gradient(x, y, radius: float = 1.0) -> np.ndarray:
    """Gradient in x of the disk Green's function, shape (m, 2)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    yv = np.asarray(y, dtype=float).reshape(2)
    R = float(radius)
    dxy = X - yv
    g = -dxy / np.maximum(np.einsum("md,md->m", dxy, dxy), 1e-300)[:, None]
    ay = np.linalg.norm(yv)
    if ay >= 1e-300:
        ystar = (R * R / ay**2) * yv
        dxs = X - ystar
        g = g + dxs / np.maximum(np.einsum("md,md->m", dxs, dxs), 1e-300)[:, None]
    return g / _TWO_PI


def halfplane_green(x, y) -> np.ndarray:
    """Green's function of the Laplacian on the upper half-plane x2 > 0.

    G(x, y) = (1/2pi) ln( |x - y~| / |x - y| ) with y~ = (y1, -y2).
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    yv = np.asarray(y, dtype=float).reshape(2)
    yref = np.array([yv[0], -yv[1]])
    r = np.linalg.norm(X - yv, axis=1)
    rref = np.linalg.norm(X - yref, axis=1)
    with np.errstate(divide="ignore"):
        val = np.log(rref / r) / _TWO_PI
    return val if np.asarray(x).ndim == 2 else float(val[0])


def _stencil_defect(fn, pts: np.ndarray, eps: float) -> float:
    """Max five-point Laplacian of fn over pts at stencil size eps."""
    e1 = np.array([eps, 0.0])
    e2 = np.array([0.0, eps])
    lap = (fn(pts + e1) + fn(pts - e1) + fn(pts + e2) + fn(pts - e2) - 4 * fn(pts)) / eps**2
    return float(np.max(np.abs(lap)))


def oracle_selfcheck() -> dict:
    """Boundary vanishing and shrinking-stencil harmonicity for both oracles.

    Returns a dict of measured defects; raises AssertionError on failure.
    The harmonicity defect must shrink with the stencil (factor ~eps^2).
    """
    out = {}
    # disk: boundary values at many angles, several sources
    t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    ring = np.stack([np.cos(t), np.sin(t)], axis=1)
    worst = 0.0
    for y in ([0.0, 0.0], [0.3, 0.0], [0.35, -0.45]):
        worst = max(worst, float(np.max(np.abs(disk_green(ring, y)))))
    out["disk_boundary"] = worst
    # half-plane: boundary x2 = 0
    line = np.stack([np.linspace(-40, 40, 801), np.zeros(801)], axis=1)
    worst_h = 0.0
    for y in ([0.0, 1.0], [2.5, 0.2]):
        worst_h = max(worst_h, float(np.max(np.abs(halfplane_green(line, y)))))
    out["halfplane_boundary"] = worst_h

    rng = np.random.default_rng(1234)
    pts = rng.uniform(-0.55, 0.55, size=(64, 2))
    y = np.array([0.25, -0.1])
    pts = pts[np.linalg.norm(pts - y, axis=1) > 0.25]
    d_coarse = _stencil_defect(lambda q: disk_green(q, y), pts, 1e-3)
    d_fine = _stencil_defect(lambda q: disk_green(q, y), pts, 1e-4)
    out["disk_harmonic_coarse"], out["disk_harmonic_fine"] = d_coarse, d_fine

    hp_pts = rng.uniform([[-3.0, 0.5]], [[3.0, 4.0]], size=(64, 2))
    yh = np.array([0.5, 1.2])
    hp_pts = hp_pts[np.linalg.norm(hp_pts - yh, axis=1) > 0.5]
    h_coarse = _stencil_defect(lambda q: halfplane_green(q, yh), hp_pts, 1e-3)
    h_fine = _stencil_defect(lambda q: halfplane_green(q, yh), hp_pts, 1e-4)
    out["halfplane_harmonic_coarse"], out["halfplane_harmonic_fine"] = h_coarse, h_fine

    assert out["disk_boundary"] <= 1e-12, f"disk oracle boundary defect {worst}"
    assert out["halfplane_boundary"] <= 1e-12, f"half-plane oracle boundary defect {worst_h}"
    assert d_fine < d_coarse and d_coarse < 1e-4, "disk oracle fails harmonicity"
    assert h_fine < h_coarse and h_coarse < 1e-4, "half-plane oracle fails harmonicity"
    return out
