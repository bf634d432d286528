"""Shared meshes and operators (session-scoped: the fine disk is expensive)."""

import numpy as np
import pytest

from greens2d import coefficients, domain, elliptic, meshing


@pytest.fixture(scope="session")
def laplace_field():
    return coefficients.laplace()


@pytest.fixture(scope="session")
def square_mesh():
    """Unit square, h = 0.05."""
    return meshing.triangulate(domain.Domain.square(1.0), 0.05)


@pytest.fixture(scope="session")
def disk_coarse():
    """Unit disk, h = 0.1, boundary polygon matched to the target spacing."""
    return meshing.triangulate(domain.Domain.disk(1.0, segments=90), 0.1)


@pytest.fixture(scope="session")
def disk_fine():
    """Unit disk at the acceptance resolution h = 0.02."""
    return meshing.triangulate(domain.Domain.disk(1.0, segments=512), 0.02)


@pytest.fixture(scope="session")
def disk_coarse_op(disk_coarse, laplace_field):
    return elliptic.assemble_stiffness(disk_coarse, laplace_field)


@pytest.fixture(scope="session")
def disk_fine_op(disk_fine, laplace_field):
    return elliptic.assemble_stiffness(disk_fine, laplace_field)


REFERENCE_SOURCES = [np.array([0.0, 0.0]), np.array([0.3, 0.0]),
                     np.array([0.5, 0.5]) / np.sqrt(2.0) * 0.5]


@pytest.fixture(scope="session")
def disk_fine_columns(disk_fine, disk_fine_op, laplace_field):
    """Direct-route Green columns at the three reference sources."""
    return [elliptic.green_column_direct(disk_fine, laplace_field, y, operator=disk_fine_op)
            for y in REFERENCE_SOURCES]


@pytest.fixture(scope="session")
def disk_refinement(laplace_field):
    """One disk polygon meshed at h in {0.08, 0.04, 0.02} with Laplacian columns.

    Maps h -> (mesh, operator, {"center": column at 0, "off": column at
    (0.3, 0)}); the shared polygon (segments=180) keeps the refinement
    comparisons about the field, not the boundary approximation.
    """
    disk = domain.Domain.disk(1.0, segments=180)
    out = {}
    for h in (0.08, 0.04, 0.02):
        mesh = meshing.triangulate(disk, h)
        op = elliptic.assemble_stiffness(mesh, laplace_field)
        cols = {tag: elliptic.green_column_direct(mesh, laplace_field, y, operator=op)
                for tag, y in [("center", (0.0, 0.0)), ("off", (0.3, 0.0))]}
        out[h] = (mesh, op, cols)
    return out


@pytest.fixture(scope="session")
def checker_square_pair():
    """16x16 checkerboard a in {1, 10} on the unit square at h = 0.04 and 0.02.

    Maps h -> (mesh, column); the source sits at the center of a tile so the
    near field starts inside a homogeneous cell.
    """
    sq = domain.Domain.polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    field = coefficients.checkerboard(1.0, 10.0, 16)
    y = (0.53125, 0.53125)
    out = {}
    for h in (0.04, 0.02):
        mesh = meshing.triangulate(sq, h, region_of=field.region_of)
        op = elliptic.assemble_stiffness(mesh, field)
        out[h] = (mesh, elliptic.green_column_direct(mesh, field, y, operator=op))
    return out


@pytest.fixture(scope="session")
def skew_columns():
    """Green columns of the skew-drift field and its transpose at two sources.

    The skew field needs a region-tagged mesh (strip ids), so it does not
    share the square_mesh fixture.
    """
    field = coefficients.skew(0.5, n_strips=2)
    mesh = meshing.triangulate(domain.Domain.square(1.0), 0.05,
                               region_of=field.region_of)
    tfield = coefficients.transpose_field(field)
    op = elliptic.assemble_stiffness(mesh, field)
    top = elliptic.assemble_stiffness(mesh, tfield)
    pts = [(0.3, 0.4), (0.7, 0.6)]
    cols = [elliptic.green_column_direct(mesh, field, p, operator=op) for p in pts]
    tcols = [elliptic.green_column_direct(mesh, tfield, p, operator=top) for p in pts]
    return cols, tcols
