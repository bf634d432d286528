"""Conforming P1 triangulations of plane domains.

The generator places boundary points at spacing <= 0.72 h, fills the interior
with a hexagonal lattice at the same spacing, Delaunay-triangulates, culls
triangles outside the domain, and runs a few Laplacian smoothing passes.
Postconditions checked on every mesh: max edge <= h, min angle >= 20 degrees,
triangle areas sum to the polygon area (relative 1e-8), and every mesh
boundary edge lies on a domain boundary segment.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .domain import Domain, _loop_area

__all__ = ["Mesh", "MeshQualityError", "triangulate"]


class MeshQualityError(RuntimeError):
    pass


@dataclass(eq=False)
class Mesh:
    """Triangle mesh with Dirichlet boundary flags and per-cell region ids."""

    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counterclockwise
    boundary_mask: np.ndarray   # (nv,) bool, True on the Dirichlet boundary
    h: float                    # requested size parameter (max edge <= h)
    cell_region_id: np.ndarray  # (nt,) int
    domain: Domain

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * np.abs(_cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))

    @cached_property
    def grads(self) -> np.ndarray:
        """Gradients of the three barycentric basis functions, (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        e0 = p[:, 2] - p[:, 1]
        e1 = p[:, 0] - p[:, 2]
        e2 = p[:, 1] - p[:, 0]
        rot = np.stack([-np.stack([e0[:, 1], e1[:, 1], e2[:, 1]], axis=1),
                        np.stack([e0[:, 0], e1[:, 0], e2[:, 0]], axis=1)], axis=2)
        return rot / (2.0 * self.areas[:, None, None])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _tri_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.stack([np.linalg.norm(p[:, (a + 1) % 3] - p[:, a], axis=1)
                         for a in range(3)], axis=1)

    def max_edge(self) -> float:
        return float(self.edge_lengths().max())

    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        L = self.edge_lengths()
        a, b, c = L[:, 0], L[:, 1], L[:, 2]
        angles = []
        for opp, u, v in ((a, b, c), (b, c, a), (c, a, b)):
            cosang = np.clip((u**2 + v**2 - opp**2) / (2 * u * v), -1.0, 1.0)
            angles.append(np.arccos(cosang))
        return float(np.degrees(np.min(angles)))

    def boundary_edges(self) -> np.ndarray:
        """Edges used by exactly one triangle, as (m, 2) vertex index pairs."""
        e = np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                            self.triangles[:, [2, 0]]])
        key = np.sort(e, axis=1)
        _, idx, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
        return e[idx[counts == 1]]

    def locate(self, points, tol: float = 1e-10):
        """Containing triangle and barycentric coordinates for each point.

        Returns (tri_index, bary) with shapes (m,) and (m, 3); tri_index is -1
        for points outside the mesh.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m = len(pts)
        tri_idx = np.full(m, -1, dtype=int)
        bary = np.zeros((m, 3))
        pending = np.arange(m)
        for k in (8, 64, len(self.triangles)):
            if len(pending) == 0:
                break
            k = min(k, len(self.triangles))
            _, cand = self._tri_tree.query(pts[pending], k=k)
            cand = np.atleast_2d(cand)
            still = []
            for row, pi in enumerate(pending):
                found = False
                for t in cand[row]:
                    lam = self._bary(int(t), pts[pi])
                    if lam.min() >= -tol:
                        tri_idx[pi] = int(t)
                        bary[pi] = np.clip(lam, 0.0, None)
                        bary[pi] /= bary[pi].sum()
                        found = True
                        break
                if not found:
                    still.append(pi)
            pending = np.array(still, dtype=int)
        return tri_idx, bary

    def _bary(self, t: int, p: np.ndarray) -> np.ndarray:
        v = self.vertices[self.triangles[t]]
        T = np.array([[v[0, 0] - v[2, 0], v[1, 0] - v[2, 0]],
                      [v[0, 1] - v[2, 1], v[1, 1] - v[2, 1]]])
        lam = np.linalg.solve(T, p - v[2])
        return np.array([lam[0], lam[1], 1.0 - lam[0] - lam[1]])

    def interpolate(self, values: np.ndarray, points) -> np.ndarray:
        """P1 interpolation of nodal values (nv, ...) at the given points."""
        tri_idx, bary = self.locate(points)
        if np.any(tri_idx < 0):
            bad = np.atleast_2d(points)[tri_idx < 0][0]
            raise ValueError(f"point {tuple(bad)} lies outside the mesh")
        verts = self.triangles[tri_idx]  # (m, 3)
        vals = values[verts]             # (m, 3, ...)
        w = bary.reshape(bary.shape + (1,) * (vals.ndim - 2))
        return (vals * w).sum(axis=1)

    def with_regions(self, region_of) -> "Mesh":
        """Same mesh with cell regions reassigned by centroid sampling."""
        rid = np.asarray(region_of(self.centroids), dtype=int)
        return Mesh(self.vertices, self.triangles, self.boundary_mask, self.h,
                    rid, self.domain)


def _cross2(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _merge_collinear(loop: np.ndarray) -> np.ndarray:
    """Drop vertices interior to straight runs.

    Densely sampled graph boundaries carry far more vertices than the mesh
    needs; keeping them forces sliver triangles against the interior lattice.
    Only exactly-collinear vertices are dropped, so the polygon (and its
    area) is unchanged.
    """
    prv = loop - np.roll(loop, 1, axis=0)
    nxt = np.roll(loop, -1, axis=0) - loop
    sine = np.abs(_cross2(prv, nxt))
    keep = sine > 1e-12 * np.linalg.norm(prv, axis=1) * np.linalg.norm(nxt, axis=1)
    return loop[keep] if keep.any() else loop


def _boundary_rings(domain: Domain, spacing: float):
    """Boundary points at spacing <= `spacing`, keeping all loop corners."""
    rings = []
    for loop in domain.loops:
        loop = _merge_collinear(loop)
        pts = []
        nxt = np.roll(loop, -1, axis=0)
        for a, b in zip(loop, nxt):
            L = float(np.linalg.norm(b - a))
            n = max(1, int(np.ceil(L / spacing)))
            t = np.arange(n) / n
            pts.append(a[None] + t[:, None] * (b - a)[None])
        rings.append(np.concatenate(pts))
    return rings


def _hex_lattice(domain: Domain, spacing: float, ring_pts: np.ndarray) -> np.ndarray:
    all_loops = np.concatenate([l for l in domain.loops])
    x0, y0 = all_loops.min(axis=0) - spacing
    x1, y1 = all_loops.max(axis=0) + spacing
    dy = spacing * np.sqrt(3.0) / 2.0
    rows = []
    ny = int(np.ceil((y1 - y0) / dy)) + 1
    nx = int(np.ceil((x1 - x0) / spacing)) + 2
    for j in range(ny):
        y = y0 + j * dy
        xs = x0 + (np.arange(nx) + (0.5 if j % 2 else 0.0)) * spacing
        rows.append(np.stack([xs, np.full(nx, y)], axis=1))
    pts = np.concatenate(rows)
    inside = domain.contains(pts)
    pts = pts[inside]
    # keep a clear band along the boundary so seam triangles stay well shaped
    tree = cKDTree(ring_pts)
    d, _ = tree.query(pts, k=1)
    return pts[d >= 0.75 * spacing]


def _triangulate_points(domain: Domain, pts: np.ndarray):
    dela = Delaunay(pts)
    tris = dela.simplices
    p = pts[tris]
    signed = _cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    # drop exactly-degenerate slivers qhull emits for collinear boundary points
    scale = np.max(np.abs(p[:, 1] - p[:, 0]), initial=1.0)
    tris = tris[np.abs(signed) > 1e-12 * scale * scale]
    cen = pts[tris].mean(axis=1)
    tris = tris[domain.contains(cen)]
    p = pts[tris]
    flip = _cross2(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _smooth(domain: Domain, pts: np.ndarray, n_ring: int, iterations: int) -> np.ndarray:
    """Laplacian smoothing of interior points against a fixed adjacency."""
    pts = pts.copy()
    tris = _triangulate_points(domain, pts)
    n = len(pts)
    for _ in range(iterations):
        nbr_sum = np.zeros_like(pts)
        nbr_cnt = np.zeros(n)
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                idx = tris[:, a]
                nbr_sum[:, 0] += np.bincount(idx, weights=pts[tris[:, b], 0], minlength=n)
                nbr_sum[:, 1] += np.bincount(idx, weights=pts[tris[:, b], 1], minlength=n)
                nbr_cnt += np.bincount(idx, minlength=n)
        movable = np.arange(n) >= n_ring
        movable &= nbr_cnt > 0
        proposal = pts.copy()
        proposal[movable] = nbr_sum[movable] / nbr_cnt[movable, None]
        ok = domain.contains(proposal[movable], tol=0.0)
        stay = np.where(movable)[0][~ok]
        proposal[stay] = pts[stay]
        pts = proposal
    return pts


def triangulate(domain: Domain, h: float, region_of=None, smoothing: int = 4,
                max_retries: int = 4) -> Mesh:
    """Mesh the domain with max edge <= h and min angle >= 20 degrees.

    region_of, if given, maps an (m, 2) array of triangle centroids to integer
    region ids (piecewise-constant coefficient cells); default all zero.
    """
    if not (h > 0):
        raise ValueError("h must be positive")
    if np.isfinite(domain.width) and not (h < domain.width / 4):
        raise ValueError(f"h={h} too coarse: need h < width/4 = {domain.width / 4}")

    spacing = 0.72 * h
    last_err = None
    for attempt in range(max_retries):
        rings = _boundary_rings(domain, spacing)
        ring_pts = np.concatenate(rings)
        interior = _hex_lattice(domain, spacing, ring_pts)
        pts = np.concatenate([ring_pts, interior])
        pts = _smooth(domain, pts, n_ring=len(ring_pts), iterations=smoothing)
        tris = _triangulate_points(domain, pts)

        used = np.zeros(len(pts), dtype=bool)
        used[tris.ravel()] = True
        if not used.all():
            remap = np.cumsum(used) - 1
            pts = pts[used]
            tris = remap[tris]
        boundary_mask = np.zeros(len(pts), dtype=bool)
        boundary_mask[: int(used[:len(ring_pts)].sum())] = True

        mesh = Mesh(vertices=pts, triangles=tris, boundary_mask=boundary_mask,
                    h=h, cell_region_id=np.zeros(len(tris), dtype=int), domain=domain)
        err = _quality_problem(mesh)
        if err is None:
            if region_of is not None:
                mesh = mesh.with_regions(region_of)
            return mesh
        last_err = err
        spacing *= 0.85
    raise MeshQualityError(f"mesh generation failed after {max_retries} attempts: {last_err}")


def _quality_problem(mesh: Mesh) -> str | None:
    if mesh.max_edge() > mesh.h * (1 + 1e-12):
        return f"max edge {mesh.max_edge():.4g} exceeds h={mesh.h}"
    ang = mesh.min_angle()
    if ang < 20.0:
        return f"min angle {ang:.3g} below 20 degrees"
    area = float(mesh.areas.sum())
    target = mesh.domain.area
    if np.isfinite(target):
        if abs(area - target) > 1e-8 * target:
            return f"triangle areas sum to {area!r}, polygon area {target!r}"
    else:
        # truncated stand-in: compare against the meshed polygon's own area
        target = sum(abs(_loop_area(l)) for l in mesh.domain.loops[:1]) - \
            sum(abs(_loop_area(l)) for l in mesh.domain.loops[1:])
        if abs(area - target) > 1e-8 * target:
            return f"triangle areas sum to {area!r}, truncated polygon area {target!r}"
    # every mesh boundary edge must lie on a domain boundary segment
    be = mesh.boundary_edges()
    mids = 0.5 * (mesh.vertices[be[:, 0]] + mesh.vertices[be[:, 1]])
    d = mesh.domain.boundary_distance(mids, physical_only=False)
    if d.max() > mesh.h ** 2:
        return f"mesh boundary strays {d.max():.3g} from the domain boundary"
    if not mesh.boundary_mask[be.ravel()].all():
        return "boundary edge endpoints not flagged as boundary vertices"
    return None
