"""Tabular export/import: CSV with fixed schemas, report blocks as text.

All numbers are written with '.' decimal separator in exponent notation
with 17 significant digits, so float64 values survive a round-trip
exactly and identical runs produce byte-identical files.  The header row
names each column with its unit in brackets.
"""

import numpy as np

from .elliptic import DiscreteField, GreenColumn
from .estimates import EstimateReport
from .fundamental import FundamentalColumn
from .heatkernel import KernelColumn


def format_number(v: float) -> str:
    """Exponent notation, 17 significant digits (exact float64 round-trip)."""
    return f"{float(v):.16e}"


def write_csv(path, names, units, rows) -> None:
    """Rows of floats under a 'name [unit]' header; empty rows -> header only."""
    if len(names) != len(units):
        raise ValueError("names and units must have the same length")
    header = ",".join(f"{n} [{u}]" for n, u in zip(names, units))
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(format_number(v) for v in row) + "\n")


def read_table(path):
    """Inverse of write_csv: (names, units, data) with data shaped (m, k)."""
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip()
        names, units = [], []
        for part in header.split(","):
            part = part.strip()
            if part.endswith("]") and " [" in part:
                name, unit = part.rsplit(" [", 1)
                names.append(name)
                units.append(unit[:-1])
            else:
                names.append(part)
                units.append("")
        body = f.read().strip()
    if not body:
        data = np.empty((0, len(names)))
    else:
        data = np.array([[float(v) for v in line.split(",")]
                         for line in body.splitlines()])
    return names, units, data


def _matrix_names(prefix: str, N: int):
    return [f"{prefix}[{i}][{j}]" for i in range(N) for j in range(N)]


def _green_rows(col, mask):
    mesh = col.mesh
    pts = mesh.vertices
    source = col.y if isinstance(col, GreenColumn) else col.x
    if mask is None:
        mask = np.ones(len(pts), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (len(pts),):
            raise ValueError("mask must have one entry per mesh vertex")
    dx = mesh.domain.boundary_distance(pts[mask])
    dist = np.linalg.norm(pts[mask] - np.asarray(source, dtype=float), axis=1)
    vals = col.values[mask].reshape(mask.sum(), -1)
    return np.column_stack([pts[mask], dx, dist, vals])


def export_table(artifact, path, format: str = "csv", mask=None) -> None:
    """Write an artifact to path; schema depends on the artifact type.

    GreenColumn / FundamentalColumn: one row per (selected) mesh vertex
    with columns (x1, x2, dx, dist_xy, G[i][j]...); dx is the distance to
    the domain boundary and dist_xy the distance to the source point.
    KernelColumn: (t, l2_norm) per time slice.  DiscreteField: (x1, x2,
    u[i]...).  EstimateReport with format='report': the report block text.
    An empty row selection produces a header-only CSV.
    """
    if format == "report":
        if not isinstance(artifact, EstimateReport):
            raise TypeError("report format requires an EstimateReport")
        with open(path, "w", encoding="ascii", newline="\n") as f:
            f.write(artifact.text() + "\n")
        return
    if format != "csv":
        raise ValueError(f"unknown format {format!r}; choices: csv, report")

    if isinstance(artifact, GreenColumn):
        N = artifact.values.shape[1]
        names = ["x1", "x2", "dx", "dist_xy"] + _matrix_names("G", N)
        units = ["length"] * 4 + ["1"] * N ** 2
        write_csv(path, names, units, _green_rows(artifact, mask))
    elif isinstance(artifact, FundamentalColumn):
        names = ["x1", "x2", "dx", "dist_xy"] + _matrix_names("Gamma", artifact.N)
        units = ["length"] * 4 + ["1"] * artifact.N ** 2
        write_csv(path, names, units, _green_rows(artifact, mask))
    elif isinstance(artifact, KernelColumn):
        rows = [(s.t, s.l2_norm) for s in artifact.slices]
        write_csv(path, ["t", "l2_norm"], ["time", "1"], rows)
    elif isinstance(artifact, DiscreteField):
        n = artifact.n_components
        names = ["x1", "x2"] + [f"u[{i}]" for i in range(n)]
        units = ["length"] * 2 + ["1"] * n
        rows = np.column_stack([artifact.mesh.vertices, artifact.values])
        if mask is not None:
            rows = rows[np.asarray(mask, dtype=bool)]
        write_csv(path, names, units, rows)
    elif isinstance(artifact, EstimateReport):
        raise ValueError("EstimateReport exports with format='report'")
    else:
        raise TypeError(f"no export schema for {type(artifact).__name__}")
