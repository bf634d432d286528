"""Plane domains: polygons, truncated strips, and Lipschitz graph domains.

A :class:`Domain` carries the boundary loops used for meshing together with
the idealized metadata (area, slab width) that enters the constant

    gamma = max(1/area, 1/width**2),

which sets the guaranteed decay rate of the Dirichlet heat semigroup and the
constants in the Green's function bounds.  Infinite domains (strips, graph
domains) are represented by a truncated polygon plus declared infinite
area/width; for graph domains the truncation walls are flagged artificial so
that distance queries and sample-point policies can tell them apart from the
physical graph boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Domain",
    "GraphProfile",
    "build_graph_domain",
    "compute_gamma",
    "dist_to_boundary",
]


def _as_loop(vertices) -> np.ndarray:
    loop = np.array(vertices, dtype=float)
    if loop.ndim != 2 or loop.shape[1] != 2 or loop.shape[0] < 3:
        raise ValueError("boundary loop must have shape (k, 2) with k >= 3")
    if np.allclose(loop[0], loop[-1]):
        loop = loop[:-1]
    loop.setflags(write=False)
    return loop


def _loop_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _loop_width(loop: np.ndarray) -> float:
    """Smallest slab width over edge-normal directions.

    Exact for convex loops (the minimal slab has a boundary edge on one side);
    an upper bound otherwise.  Overestimating the width only lowers gamma,
    which keeps gamma a certified (conservative) rate.
    """
    edges = np.roll(loop, -1, axis=0) - loop
    lengths = np.linalg.norm(edges, axis=1)
    keep = lengths > 1e-14
    normals = np.stack([-edges[keep, 1], edges[keep, 0]], axis=1) / lengths[keep, None]
    proj = normals @ loop.T  # (n_dirs, n_vertices)
    return float(np.min(proj.max(axis=1) - proj.min(axis=1)))


def _inside_loop(points: np.ndarray, loop: np.ndarray, chunk: int = 20000) -> np.ndarray:
    """Even-odd ray-crossing containment test, vectorized and chunked."""
    x1, y1 = loop[:, 0], loop[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    dy = y2 - y1
    dy = np.where(np.abs(dy) < 1e-300, 1e-300, dy)
    out = np.empty(len(points), dtype=bool)
    for lo in range(0, len(points), chunk):
        px = points[lo:lo + chunk, 0, None]
        py = points[lo:lo + chunk, 1, None]
        straddles = (y1 > py) != (y2 > py)
        xcross = x1 + (py - y1) * (x2 - x1) / dy
        out[lo:lo + chunk] = np.sum(straddles & (px < xcross), axis=1) % 2 == 1
    return out


def _min_dist_to_segments(points, a, b, chunk: int = 8192) -> np.ndarray:
    """Exact minimum distance from each point to a family of segments [a_i, b_i]."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ab = b - a
    denom = np.maximum(np.einsum("kd,kd->k", ab, ab), 1e-300)
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk]
        t = np.clip(np.einsum("mkd,kd->mk", p[:, None, :] - a[None], ab) / denom, 0.0, 1.0)
        closest = a[None] + t[..., None] * ab[None]
        out[lo:lo + chunk] = np.linalg.norm(p[:, None, :] - closest, axis=2).min(axis=1)
    return out


@dataclass(frozen=True, eq=False)
class GraphProfile:
    """Sampled Lipschitz graph x2 = phi(x1) with certified slope bound."""

    samples: np.ndarray            # (k, 2), strictly increasing abscissae
    lipschitz: float               # certified bound on |phi'|
    box: tuple                     # (x_left, x_right, y_top) truncation

    def phi(self, x1):
        return np.interp(x1, self.samples[:, 0], self.samples[:, 1])


@dataclass(frozen=True, eq=False)
class Domain:
    """A meshable plane domain.

    loops       tuple of (k, 2) vertex arrays; the first is the outer loop
                (counterclockwise), any further loops are holes (orientation
                normalized on construction).
    kind        "polygon" or "graph".
    graph       GraphProfile for kind == "graph".
    area        possibly np.inf (declared for truncated stand-ins).
    width       smallest slab width, possibly np.inf.
    physical    per-loop bool arrays: segment i (loop[i] -> loop[i+1]) is part
                of the physical boundary (False on artificial truncation walls).
    """

    loops: tuple
    kind: str = "polygon"
    graph: GraphProfile | None = None
    area: float = np.nan
    width: float = np.nan
    physical: tuple = ()

    # -- constructors ------------------------------------------------------

    @staticmethod
    def polygon(vertices, holes=(), area=None, width=None) -> "Domain":
        outer = _as_loop(vertices)
        if _loop_area(outer) < 0:
            outer = _as_loop(outer[::-1])
        loops = [outer]
        a = _loop_area(outer)
        for hole in holes:
            hl = _as_loop(hole)
            if _loop_area(hl) < 0:
                hl = _as_loop(hl[::-1])
            a -= _loop_area(hl)
            loops.append(hl)
        return Domain(
            loops=tuple(loops),
            kind="polygon",
            area=float(a if area is None else area),
            width=float(_loop_width(outer) if width is None else width),
            physical=tuple(np.ones(len(l), dtype=bool) for l in loops),
        )

    @staticmethod
    def square(side: float = 1.0, corner=(0.0, 0.0)) -> "Domain":
        cx, cy = corner
        s = float(side)
        return Domain.polygon([(cx, cy), (cx + s, cy), (cx + s, cy + s), (cx, cy + s)])

    @staticmethod
    def box(x0: float, x1: float, y0: float, y1: float) -> "Domain":
        return Domain.polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])

    @staticmethod
    def disk(radius: float = 1.0, center=(0.0, 0.0), segments: int = 256) -> "Domain":
        t = 2.0 * np.pi * np.arange(segments) / segments
        ring = np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)
        return Domain.polygon(ring)

    @staticmethod
    def strip(width: float, length: float | None = None) -> "Domain":
        """Infinite strip of the given width, truncated to length for meshing."""
        w = float(width)
        L = 8.0 * w if length is None else float(length)
        dom = Domain.polygon([(0, 0), (L, 0), (L, w), (0, w)], area=np.inf, width=w)
        phys = np.array([True, False, True, False])  # short ends are artificial
        return Domain(loops=dom.loops, kind="polygon", area=np.inf, width=w,
                      physical=(phys,))

    # -- queries -----------------------------------------------------------

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        """Boolean containment for an (m, 2) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "graph":
            x0, x1, ytop = self.graph.box
            inside = (pts[:, 1] > self.graph.phi(pts[:, 0]) - tol)
            inside &= (pts[:, 0] > x0 - tol) & (pts[:, 0] < x1 + tol) & (pts[:, 1] < ytop + tol)
            return inside
        inside = _inside_loop(pts, self.loops[0])
        for hole in self.loops[1:]:
            inside &= ~_inside_loop(pts, hole)
        if tol > 0:
            near = self.boundary_distance(pts) <= tol
            inside |= near
        return inside

    def _segment_arrays(self, physical_only: bool = False):
        starts, ends = [], []
        for loop, phys in zip(self.loops, self.physical):
            a, b = loop, np.roll(loop, -1, axis=0)
            if physical_only:
                a, b = a[phys], b[phys]
            starts.append(a)
            ends.append(b)
        return np.concatenate(starts), np.concatenate(ends)

    def boundary_distance(self, points, physical_only: bool | None = None) -> np.ndarray:
        """Distance to the boundary; graph domains measure the graph only."""
        if physical_only is None:
            physical_only = self.kind == "graph"
        a, b = self._segment_arrays(physical_only=physical_only)
        return _min_dist_to_segments(points, a, b)

    def artificial_distance(self, points) -> np.ndarray:
        """Distance to artificial truncation walls (inf if there are none)."""
        starts, ends = [], []
        for loop, phys in zip(self.loops, self.physical):
            a, b = loop, np.roll(loop, -1, axis=0)
            starts.append(a[~phys])
            ends.append(b[~phys])
        a, b = np.concatenate(starts), np.concatenate(ends)
        if len(a) == 0:
            return np.full(len(np.atleast_2d(points)), np.inf)
        return _min_dist_to_segments(points, a, b)


def compute_gamma(domain: Domain) -> float:
    """gamma = max(1/area, 1/width^2); errors if both are infinite."""
    inv_area = 0.0 if not np.isfinite(domain.area) else 1.0 / domain.area
    inv_w2 = 0.0 if not np.isfinite(domain.width) else 1.0 / domain.width ** 2
    if inv_area == 0.0 and inv_w2 == 0.0:
        raise ValueError("domain has infinite area and infinite width; gamma is undefined")
    if domain.area <= 0 or domain.width <= 0:
        raise ValueError("domain area and width must be positive")
    return max(inv_area, inv_w2)


def dist_to_boundary(x, domain: Domain, return_foot: bool = False):
    """Exact distance from an interior point to the domain boundary.

    For graph domains the distance is to the physical graph polyline and,
    with return_foot=True, the vertical foot (x1, phi(x1)) is returned as
    well; the sandwich d <= |x - foot| <= sqrt(1 + M^2) * d is checked.
    """
    pt = np.asarray(x, dtype=float).reshape(2)
    if not domain.contains(pt[None], tol=1e-12)[0]:
        raise ValueError(f"point {tuple(pt)} lies outside the domain")
    d = float(domain.boundary_distance(pt[None])[0])
    if domain.kind != "graph":
        if return_foot:
            return d, None
        return d
    foot = np.array([pt[0], float(domain.graph.phi(pt[0]))])
    vert = float(np.linalg.norm(pt - foot))
    slack = 1.0 + 1e-9
    M = domain.graph.lipschitz
    if not (d <= vert * slack and vert <= np.sqrt(1.0 + M * M) * d * slack):
        raise AssertionError(
            f"vertical-foot sandwich violated at {tuple(pt)}: d={d}, |x-foot|={vert}, M={M}"
        )
    if return_foot:
        return d, foot
    return d


def build_graph_domain(phi_samples, lipschitz: float, box) -> Domain:
    """Domain above a sampled Lipschitz graph, truncated to a Dirichlet box.

    phi_samples   (k, 2) array of (s, phi(s)) with strictly increasing s
                  covering [box[0], box[1]].
    lipschitz     certified bound M on |phi'|; all sampled slopes are checked
                  (adjacent slopes bound every divided difference, so checking
                  neighbours certifies all pairs).
    box           (x_left, x_right, y_top).
    """
    samples = np.array(phi_samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 2:
        raise ValueError("phi_samples must have shape (k, 2) with k >= 2")
    s = samples[:, 0]
    if np.any(np.diff(s) <= 0):
        raise ValueError("graph sample abscissae must be strictly increasing")
    x0, x1, ytop = (float(v) for v in box)
    if not (s[0] <= x0 and s[-1] >= x1):
        raise ValueError("graph samples must cover the truncation interval")
    slopes = np.diff(samples[:, 1]) / np.diff(s)
    bad = np.where(np.abs(slopes) > lipschitz * (1 + 1e-12))[0]
    if len(bad):
        i = int(bad[np.argmax(np.abs(slopes[bad]))])
        raise ValueError(
            "graph is not Lipschitz-{:g}: slope {:.6g} between samples "
            "({:.6g}, {:.6g}) and ({:.6g}, {:.6g})".format(
                lipschitz, slopes[i], *samples[i], *samples[i + 1])
        )
    if ytop <= samples[:, 1].max():
        raise ValueError("box top must lie above the graph")

    # clip the polyline to [x0, x1] and build the closed loop
    keep = (s > x0) & (s < x1)
    xs = np.concatenate([[x0], s[keep], [x1]])
    ys = np.interp(xs, s, samples[:, 1])
    graph_pts = np.stack([xs, ys], axis=1)
    loop = np.concatenate([graph_pts, [[x1, ytop], [x0, ytop]]])
    n_graph = len(graph_pts) - 1  # segments along the graph
    phys = np.zeros(len(loop), dtype=bool)
    phys[:n_graph] = True  # the rest (right wall, top, left wall) is artificial
    profile = GraphProfile(samples=np.ascontiguousarray(samples), lipschitz=float(lipschitz),
                           box=(x0, x1, ytop))
    return Domain(loops=(_as_loop(loop),), kind="graph", graph=profile,
                  area=np.inf, width=np.inf, physical=(phys,))
