"""Heat-kernel evolution, truncation, and the time-integral route."""

import numpy as np
import pytest

from greens2d import domain, meshing
from greens2d.coefficients import checkerboard, laplace
from greens2d.elliptic import assemble_mass, assemble_stiffness, green_column_direct
from greens2d.heatkernel import (TimeGrid, accumulate_time_integral, effective_gamma,
                                 green_column_parabolic, heat_kernel_column,
                                 kbar_norm_history, measure_decay_rate,
                                 parabolic_step, truncation_time)

from greens2d.estimates import admissible_mask


# -- time grids --------------------------------------------------------------

def test_graded_grid_shape():
    g = TimeGrid.graded(1e-4, 1.3, 2.0, dt_max=0.25)
    assert g.nodes[0] == 0.0
    assert g.nodes[1] == 1e-4
    assert np.all(np.diff(g.nodes) > 0)
    assert np.diff(g.nodes).max() <= 0.25 + 1e-15
    assert g.T == 2.0


def test_graded_grid_ratio_cap():
    d = np.diff(TimeGrid.graded(1e-4, 1.3, 2.0, dt_max=0.25).nodes)
    growth = d[1:] / d[:-1]
    assert growth.max() <= 1.3 + 1e-12


def test_graded_grid_include_inserts_node():
    g = TimeGrid.graded(1e-4, 1.3, 2.0, dt_max=0.25, include=(1.0,))
    assert np.any(g.nodes == 1.0)


def test_graded_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid.graded(-1e-4, 1.3, 1.0)
    with pytest.raises(ValueError):
        TimeGrid.graded(1e-4, 2.5, 1.0)
    with pytest.raises(ValueError):
        TimeGrid.graded(1e-4, 1.0, 1.0)
    with pytest.raises(ValueError):
        TimeGrid.graded(1e-4, 1.3, 1e-5)


# -- single steps ------------------------------------------------------------

def test_step_of_zero_is_zero(square_mesh):
    op = assemble_stiffness(square_mesh, laplace())
    M = assemble_mass(square_mesh, 1)
    u = np.zeros(len(square_mesh.vertices))
    assert np.array_equal(parabolic_step(op, M, u, 0.1), u)


def test_step_damps_eigenfunction_by_resolvent_factor(square_mesh):
    m = square_mesh
    op = assemble_stiffness(m, laplace())
    M = assemble_mass(m, 1)
    u = np.sin(np.pi * m.vertices[:, 0]) * np.sin(np.pi * m.vertices[:, 1])
    u[m.boundary_mask] = 0.0
    lam_h = float(u @ (op.matrix @ u)) / float(u @ (M @ u))
    assert lam_h == pytest.approx(2 * np.pi**2, rel=0.05)
    dt = 1e-3
    u1 = parabolic_step(op, M, u, dt)
    big = np.abs(u) > 0.3
    ratios = u1[big] / u[big]
    assert np.median(ratios) == pytest.approx(1.0 / (1.0 + dt * lam_h), rel=5e-4)


def test_step_dissipates_mass_norm(square_mesh):
    m = square_mesh
    op = assemble_stiffness(m, laplace())
    M = assemble_mass(m, 1)
    rng = np.random.default_rng(8)
    u = rng.standard_normal(len(m.vertices))
    u[m.boundary_mask] = 0.0
    u1 = parabolic_step(op, M, u, 0.05)
    assert u1 @ (M @ u1) <= u @ (M @ u) + 1e-12


def test_step_requires_positive_dt(square_mesh):
    op = assemble_stiffness(square_mesh, laplace())
    M = assemble_mass(square_mesh, 1)
    with pytest.raises(ValueError):
        parabolic_step(op, M, np.zeros(len(square_mesh.vertices)), -0.1)


# -- kernel columns ----------------------------------------------------------

def test_kernel_evolution_disk(disk_coarse, disk_coarse_op, laplace_field):
    m = disk_coarse
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 0.6, dt_max=0.25)
    col = heat_kernel_column(m, laplace_field, (0.3, 0.0), grid, operator=disk_coarse_op)
    assert len(col.slices) == len(grid.nodes)
    # Dirichlet mask respected at every slice
    for s in col.slices:
        assert np.abs(s.values[m.boundary_mask]).max() == 0.0
    # dissipation after the first step
    l2 = col.l2_norms()
    assert np.all(np.diff(l2[1:]) <= 1e-12)


def test_mass_conservation_proxy(disk_coarse, disk_coarse_op, laplace_field):
    # integral of K(t1, ., y) over the disk stays within [0.95, 1]
    m = disk_coarse
    M = assemble_mass(m, 1)
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, m.h**2, dt_max=0.25)
    col = heat_kernel_column(m, laplace_field, (0.0, 0.0), grid,
                             operator=disk_coarse_op, mass=M)
    w = M @ np.ones(len(m.vertices))
    integral = float(w @ col.slices[1].values[:, 0, 0])
    assert 0.95 <= integral <= 1.0 + 1e-9


def test_l2_short_time_slope(disk_coarse, disk_coarse_op, laplace_field):
    # ||K(t)||_L2^2 ~ t^-1 for h^2 < t < d_y^2/4, before boundary decay bites
    m = disk_coarse
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 0.49, dt_max=0.25)
    col = heat_kernel_column(m, laplace_field, (0.3, 0.0), grid, operator=disk_coarse_op)
    t, l2 = col.times(), col.l2_norms()
    sel = (t > m.h**2) & (t < col.d_y**2 / 4)
    slope = np.polyfit(np.log(t[sel]), np.log(l2[sel]), 1)[0]
    assert -1.3 <= slope <= -0.7


def test_late_time_ratio_beats_certified_decay(square_mesh, laplace_field):
    m = square_mesh
    op = assemble_stiffness(m, laplace_field)
    gamma = effective_gamma(m)
    lam = laplace_field.lambda_cert
    dt_max = 1.0 / (4 * lam * gamma)
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 4.0, dt_max=dt_max)
    col = heat_kernel_column(m, laplace_field, (0.5, 0.5), grid, operator=op)
    t, l2 = col.times(), col.l2_norms()
    d = np.diff(t)
    tail = np.isclose(d, dt_max)
    ratios = l2[1:][tail] / l2[:-1][tail]
    assert ratios.max() <= np.exp(-4 * lam * gamma * dt_max) * 1.1


def test_measured_decay_rate_exceeds_certified(square_mesh, laplace_field):
    m = square_mesh
    op = assemble_stiffness(m, laplace_field)
    gamma = effective_gamma(m)
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 4.0, dt_max=0.25)
    col = heat_kernel_column(m, laplace_field, (0.5, 0.5), grid, operator=op)
    rate = measure_decay_rate(col)
    assert rate >= 0.8 * 4 * laplace_field.lambda_cert * gamma


def test_pointwise_bound_constant_is_free_kernel_sized(disk_coarse, disk_coarse_op,
                                                       laplace_field):
    m = disk_coarse
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 0.6, dt_max=0.25)
    col = heat_kernel_column(m, laplace_field, (0.3, 0.0), grid, operator=disk_coarse_op)
    # the free heat kernel gives sup |K| max(sqrt(t), r)^2 = max(1/4pi, e^-1/pi)
    assert 0.05 <= col.pointwise_C <= 0.5


def test_kernel_column_validates_grid_and_source(disk_coarse, laplace_field):
    m = disk_coarse
    with pytest.raises(ValueError, match="h\\^2/4"):
        heat_kernel_column(m, laplace_field, (0.3, 0.0),
                           TimeGrid.graded(m.h**2, 1.3, 1.0))
    with pytest.raises(ValueError, match="4h"):
        heat_kernel_column(m, laplace_field, (0.95, 0.0),
                           TimeGrid.graded(m.h**2 / 8, 1.3, 1.0))


# -- truncation --------------------------------------------------------------

def test_truncation_time_closed_form():
    # T = ln(A / (2 lam gamma eps)) / (2 lam gamma)
    T = truncation_time(1.0, 1.0, 0.3, 1e-8, prefactor=1.0)
    assert T == pytest.approx(np.log(1.0 / (2 * 1e-8)) / 2.0, rel=1e-12)
    assert T == pytest.approx(8.8638, abs=5e-4)


def test_truncation_time_doubling_rule():
    lam, gamma = 0.7, 2.0
    T1 = truncation_time(lam, gamma, 0.1, 1e-6)
    T2 = truncation_time(lam, gamma, 0.1, 5e-7)
    assert T2 - T1 == pytest.approx(np.log(2.0) / (2 * lam * gamma), rel=1e-12)


def test_truncation_time_rejects_bad_gamma():
    with pytest.raises(ValueError):
        truncation_time(1.0, 0.0, 0.3, 1e-6)
    with pytest.raises(ValueError):
        truncation_time(1.0, -1.0, 0.3, 1e-6)


# -- time integral and route agreement ---------------------------------------

def test_integral_additivity(disk_coarse, disk_coarse_op, laplace_field):
    m = disk_coarse
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 2.0, dt_max=0.5, include=(1.0,))
    col = heat_kernel_column(m, laplace_field, (0.3, 0.0), grid, operator=disk_coarse_op)
    i_mid = int(np.argmin(np.abs(col.times() - 1.0)))
    assert col.times()[i_mid] == 1.0
    full = accumulate_time_integral(col)
    left = accumulate_time_integral(col, col.slices[:i_mid + 1])
    right = accumulate_time_integral(col, col.slices[i_mid:])
    defect = np.abs(full.values - left.values - right.values).max()
    assert defect <= 1e-12
    assert full.route == "parabolic"


def test_single_slice_integrates_to_zero(disk_coarse, disk_coarse_op, laplace_field):
    m = disk_coarse
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 0.1)
    col = heat_kernel_column(m, laplace_field, (0.3, 0.0), grid, operator=disk_coarse_op)
    z = accumulate_time_integral(col, col.slices[:1])
    assert np.abs(z.values).max() == 0.0


def test_route_agreement_laplacian(disk_coarse, disk_coarse_op, laplace_field):
    m = disk_coarse
    y = np.array([0.3, 0.0])
    direct = green_column_direct(m, laplace_field, y, operator=disk_coarse_op)
    par = green_column_parabolic(m, laplace_field, y, eps=1e-6, operator=disk_coarse_op)
    adm = admissible_mask(m, y)
    err = np.abs(par.values[adm, 0, 0] - direct.values[adm, 0, 0]).max()
    assert err / np.abs(direct.values[adm, 0, 0]).max() <= 1e-10


def test_route_agreement_checkerboard(square_mesh):
    cb = checkerboard(1.0, 10.0, 4)
    m = square_mesh
    op = assemble_stiffness(m, cb)
    y = np.array([0.5, 0.5])
    direct = green_column_direct(m, cb, y, operator=op)
    par = green_column_parabolic(m, cb, y, eps=1e-6, operator=op)
    adm = admissible_mask(m, y)
    err = np.abs(par.values[adm, 0, 0] - direct.values[adm, 0, 0]).max()
    assert err / np.abs(direct.values[adm, 0, 0]).max() <= 1e-10


def test_doubling_truncation_moves_result_less_than_2eps(disk_coarse, disk_coarse_op,
                                                         laplace_field):
    m = disk_coarse
    y = np.array([0.3, 0.0])
    eps = 1e-6
    gamma = effective_gamma(m)
    T = truncation_time(laplace_field.lambda_cert, gamma, 0.7, eps)
    vals = {}
    for Tk in (T, 2 * T):
        grid = TimeGrid.graded(m.h**2 / 8, 1.3, Tk, dt_max=0.25)
        col = heat_kernel_column(m, laplace_field, y, grid, operator=disk_coarse_op)
        vals[Tk] = accumulate_time_integral(col).values
    assert np.abs(vals[2 * T] - vals[T]).max() <= 2 * eps


def test_parabolic_provenance(disk_coarse, disk_coarse_op, laplace_field):
    g = green_column_parabolic(disk_coarse, laplace_field, (0.3, 0.0), eps=1e-6,
                               operator=disk_coarse_op)
    for key in ("T", "eps", "t1", "ratio", "dt_max", "n_steps", "tail_prefactor"):
        assert key in g.provenance
    assert g.provenance["eps"] == 1e-6


# -- running norms of the partial integral -----------------------------------

def test_kbar_norms_saturate(disk_coarse, disk_coarse_op, laplace_field):
    m = disk_coarse
    grid = TimeGrid.graded(m.h**2 / 8, 1.3, 8.0, dt_max=0.79)
    col = heat_kernel_column(m, laplace_field, (0.3, 0.0), grid, operator=disk_coarse_op)
    hist = kbar_norm_history(col)
    for key in ("ball_lp", "off_l4", "grad_ball_lp", "off_grad_l2"):
        v = hist[key]
        assert np.all(np.diff(v) >= -1e-12 * v.max())       # monotone up
        assert v[-4] >= 0.999 * v[-1]                        # saturated
