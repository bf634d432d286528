"""Tests for config parsing, table export, and the command-line driver.

Config errors must name the offending section.key; CSV export must round-trip
float64 exactly; rerunning a fixed config must reproduce output byte for byte.
"""

import textwrap

import numpy as np
import pytest

from greens2d.cli import main, run_config
from greens2d.coefficients import laplace
from greens2d.config import ConfigError, load_config
from greens2d.domain import Domain
from greens2d.elliptic import DiscreteField, green_column_direct
from greens2d.estimates import EstimateReport
from greens2d.heatkernel import TimeGrid, heat_kernel_column
from greens2d.io import export_table, format_number, read_table, write_csv
from greens2d.meshing import triangulate


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


GREEN_INI = """\
    [run]
    command = green
    seed = 0

    [domain]
    kind = disk
    radius = 1.0
    segments = 64

    [coefficients]
    kind = laplace

    [mesh]
    h = 0.1

    [green]
    sources = 0.3, 0.0
    route = both
    eps = 1e-6
"""


# -- config parsing -----------------------------------------------------------


def test_green_config_fields(tmp_path):
    cfg = load_config(_write(tmp_path, GREEN_INI))
    assert cfg.command == "green"
    assert cfg.h == 0.1
    assert cfg.route == "both"
    assert cfg.sources == ((0.3, 0.0),)
    assert cfg.build_domain().boundary_distance(np.zeros((1, 2)))[0] == pytest.approx(1.0, rel=1e-3)
    assert cfg.build_field().lambda_cert == 1.0


def test_missing_h_names_the_key(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace("h = 0.1", ""))
    with pytest.raises(ConfigError, match=r"mesh\.h"):
        load_config(path)


def test_bad_float_names_the_key(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace("h = 0.1", "h = abc"))
    with pytest.raises(ConfigError, match=r"mesh\.h"):
        load_config(path)


def test_bad_route_choice(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace("route = both", "route = banana"))
    with pytest.raises(ConfigError, match=r"green\.route"):
        load_config(path)


def test_bad_point_names_the_key(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace("sources = 0.3, 0.0",
                                              "sources = 0.3"))
    with pytest.raises(ConfigError, match=r"green\.sources"):
        load_config(path)


def test_missing_sources_for_green(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace("sources = 0.3, 0.0", ""))
    with pytest.raises(ConfigError, match=r"green\.sources"):
        load_config(path)


def test_command_conflict_with_subcommand(tmp_path):
    path = _write(tmp_path, GREEN_INI)
    with pytest.raises(ConfigError, match=r"run\.command"):
        load_config(path, command="solve")


def test_command_required_without_override(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace("command = green", ""))
    with pytest.raises(ConfigError, match=r"run\.command"):
        load_config(path)


def test_missing_file_is_a_config_error():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/run.ini")


def test_box_bounds_must_be_ordered(tmp_path):
    path = _write(tmp_path, """\
        [run]
        command = solve
        [domain]
        kind = box
        x0 = 1.0
        x1 = -1.0
        y0 = 0.0
        y1 = 1.0
        [mesh]
        h = 0.1
    """)
    with pytest.raises(ConfigError, match="x0 < x1"):
        load_config(path)


def test_checkerboard_field_spec(tmp_path):
    path = _write(tmp_path, GREEN_INI.replace(
        "kind = laplace", "kind = checkerboard\na = 1.0\nb = 9.0\ntiles = 4"))
    cfg = load_config(path)
    field = cfg.build_field()
    assert field.lambda_cert == pytest.approx(1.0)
    assert field.Lambda_cert == pytest.approx(9.0)


def test_unknown_verify_check(tmp_path):
    path = _write(tmp_path, """\
        [run]
        command = verify
        [domain]
        kind = square
        [coefficients]
        kind = laplace
        [mesh]
        h = 0.1
        [verify]
        checks = oracles, bogus
        sources = 0.3, 0.4 ; 0.7, 0.6
    """)
    with pytest.raises(ConfigError, match=r"verify\.checks"):
        load_config(path)


def test_symmetry_check_needs_two_sources(tmp_path):
    path = _write(tmp_path, """\
        [run]
        command = verify
        [domain]
        kind = square
        [coefficients]
        kind = laplace
        [mesh]
        h = 0.1
        [verify]
        checks = symmetry
        sources = 0.3, 0.4
    """)
    with pytest.raises(ConfigError, match=r"verify\.sources"):
        load_config(path)


FUND_INI = """\
    [run]
    command = fundamental
    [coefficients]
    kind = laplace
    [mesh]
    h = 0.25
    [fundamental]
    box_size = 4.0
    grid = -1.5, 1.5, 0.25
    scales = 0.5, 1.0
"""


def test_fundamental_overrides_domain_with_box(tmp_path):
    cfg = load_config(_write(tmp_path, FUND_INI))
    assert cfg.domain_spec == {"kind": "box", "bounds": (-4.0, 4.0, -4.0, 4.0)}
    assert cfg.fundamental["x"] == (0.0, 0.0)


def test_fundamental_grid_validation(tmp_path):
    path = _write(tmp_path, FUND_INI.replace("grid = -1.5, 1.5, 0.25",
                                             "grid = 1.5, -1.5, 0.25"))
    with pytest.raises(ConfigError, match=r"fundamental\.grid"):
        load_config(path)


def test_fundamental_scales_validation(tmp_path):
    path = _write(tmp_path, FUND_INI.replace("scales = 0.5, 1.0",
                                             "scales = 0.5"))
    with pytest.raises(ConfigError, match=r"fundamental\.scales"):
        load_config(path)


# -- CSV round-trip -----------------------------------------------------------


def test_format_number_round_trips_exactly():
    vals = [1.0 / 3.0, -1e-300, 1e300, np.pi, 5.0, -0.0, 4.9406564584124654e-324]
    for v in vals:
        assert float(format_number(v)) == v


def test_write_read_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    rows = rng.standard_normal((23, 3)) * np.array([1e-12, 1.0, 1e9])
    path = str(tmp_path / "t.csv")
    write_csv(path, ["a", "b", "c"], ["1", "length", "time"], rows)
    names, units, data = read_table(path)
    assert names == ["a", "b", "c"]
    assert units == ["1", "length", "time"]
    assert np.array_equal(data, rows)


def test_empty_rows_write_header_only(tmp_path):
    path = str(tmp_path / "t.csv")
    write_csv(path, ["a"], ["1"], np.zeros((0, 1)))
    names, units, data = read_table(path)
    assert names == ["a"] and data.shape == (0, 1)


# -- artifact export ----------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_column():
    mesh = triangulate(Domain.disk(1.0, segments=48), 0.3)
    return mesh, green_column_direct(mesh, laplace(), (0.3, 0.0))


def test_export_green_column_schema(tiny_column, tmp_path):
    mesh, col = tiny_column
    path = str(tmp_path / "g.csv")
    export_table(col, path)
    names, units, data = read_table(path)
    assert names == ["x1", "x2", "dx", "dist_xy", "G[0][0]"]
    assert data.shape == (len(mesh.vertices), 5)
    # dist_xy column really is the distance to the stored source point
    d = np.linalg.norm(data[:, :2] - np.asarray(col.y), axis=1)
    assert np.abs(data[:, 3] - d).max() < 1e-12


def test_export_green_column_with_mask(tiny_column, tmp_path):
    mesh, col = tiny_column
    mask = np.linalg.norm(mesh.vertices - np.asarray(col.y), axis=1) > 0.5
    path = str(tmp_path / "g.csv")
    export_table(col, path, mask=mask)
    _, _, data = read_table(path)
    assert data.shape[0] == int(mask.sum())


def test_export_discrete_field(tiny_column, tmp_path):
    mesh, _ = tiny_column
    u = DiscreteField(mesh, np.arange(len(mesh.vertices), dtype=float))
    path = str(tmp_path / "u.csv")
    export_table(u, path)
    names, _, data = read_table(path)
    assert names == ["x1", "x2", "u[0]"]
    assert np.array_equal(data[:, 2], u.values[:, 0])


def test_export_kernel_column(tiny_column, tmp_path):
    mesh, _ = tiny_column
    grid = TimeGrid.graded(1e-3, 2.0, 2e-2)
    kcol = heat_kernel_column(mesh, laplace(), (0.3, 0.0), grid)
    path = str(tmp_path / "k.csv")
    export_table(kcol, path)
    names, _, data = read_table(path)
    assert names == ["t", "l2_norm"]
    assert data.shape[0] == len(kcol.slices)
    assert np.all(np.diff(data[:, 0]) > 0)


def test_export_report_text(tmp_path):
    report = EstimateReport(estimate="demo-check", fitted={"gap": 0.5},
                            samples="3 points", tolerance="gap <= 1",
                            passed=True)
    path = str(tmp_path / "r.txt")
    export_table(report, path, format="report")
    text = open(path).read()
    assert "[demo-check]" in text and "pass: true" in text


def test_export_report_as_csv_rejected(tmp_path):
    report = EstimateReport(estimate="demo", fitted={}, samples="",
                            tolerance="", passed=True)
    with pytest.raises(ValueError, match="report"):
        export_table(report, str(tmp_path / "r.csv"))


def test_export_unknown_artifact(tmp_path):
    with pytest.raises(TypeError):
        export_table(object(), str(tmp_path / "x.csv"))


# -- command-line driver ------------------------------------------------------


@pytest.fixture(scope="module")
def green_runs(tmp_path_factory):
    """Run the same green config twice into separate directories."""
    base = tmp_path_factory.mktemp("cli")
    path = _write(base, GREEN_INI)
    outs = []
    for tag in ("a", "b"):
        out = base / f"out_{tag}"
        assert run_config(path, outdir=str(out)) == 0
        outs.append(out)
    return outs


def test_green_run_writes_both_routes(green_runs):
    out = green_runs[0]
    for name in ("green_0_direct.csv", "green_0_parabolic.csv",
                 "route_gap_0.txt"):
        assert (out / name).is_file()
    assert "pass: true" in (out / "route_gap_0.txt").read_text()


def test_green_mask_respects_policy(green_runs):
    _, _, data = read_table(str(green_runs[0] / "green_0_direct.csv"))
    # defaults keep vertices >= 4h from the source and from the boundary
    assert data[:, 3].min() >= 4 * 0.1 - 1e-12
    assert data[:, 2].min() >= 4 * 0.1 - 1e-12


def test_rerun_is_byte_identical(green_runs):
    a, b = green_runs
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_solve_run_and_center_value(tmp_path, capsys):
    path = _write(tmp_path, """\
        [run]
        command = solve
        [domain]
        kind = disk
        segments = 64
        [coefficients]
        kind = laplace
        [mesh]
        h = 0.15
        [output]
        dir = %s
    """ % (tmp_path / "out"))
    assert run_config(path) == 0
    _, _, data = read_table(str(tmp_path / "out" / "solve_u.csv"))
    # -Lap u = 1 on the unit disk peaks at u(0) = 1/4
    assert data[:, 2].min() == 0.0
    assert data[:, 2].max() == pytest.approx(0.25, rel=0.05)


def test_failing_report_exits_one(tmp_path):
    path = _write(tmp_path, """\
        [run]
        command = heatkernel
        [domain]
        kind = square
        [coefficients]
        kind = laplace
        [mesh]
        h = 0.15
        [heatkernel]
        source = 0.5, 0.5
        rate_factor = 50.0
        [output]
        dir = %s
    """ % (tmp_path / "out"))
    assert run_config(path) == 1
    assert "pass: false" in (tmp_path / "out" / "decay_rate.txt").read_text()


def test_config_error_exits_two(tmp_path, capsys):
    path = _write(tmp_path, GREEN_INI.replace("h = 0.1", ""))
    assert run_config(path) == 2
    assert "config error: mesh.h" in capsys.readouterr().err


def test_module_error_exits_two(tmp_path, capsys):
    path = _write(tmp_path, GREEN_INI.replace("h = 0.1", "h = 0.9"))
    assert run_config(path, outdir=str(tmp_path / "out")) == 2
    assert "error:" in capsys.readouterr().err


def test_empty_admissible_set_is_diagnosed(tmp_path, capsys):
    path = _write(tmp_path, GREEN_INI + "\n[policy]\nmin_dist_factor = 50\n")
    assert run_config(path, outdir=str(tmp_path / "out")) == 2
    assert "no admissible vertices" in capsys.readouterr().err


def test_main_subcommand_round_trip(tmp_path):
    path = _write(tmp_path, """\
        [run]
        command = verify
        [domain]
        kind = square
        [coefficients]
        kind = laplace
        [mesh]
        h = 0.15
        [verify]
        checks = oracles, symmetry, convolution
        sources = 0.3, 0.4 ; 0.7, 0.6
    """)
    out = tmp_path / "out"
    assert main(["verify", "--config", path, "--out", str(out)]) == 0
    for name in ("verify_oracle-selfcheck.txt", "verify_symmetry-defect.txt",
                 "verify_convolution-identity.txt"):
        assert (out / name).is_file()


def test_main_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_threads_override_matches_serial(tmp_path):
    ini = GREEN_INI.replace("sources = 0.3, 0.0",
                            "sources = 0.3, 0.0 ; -0.2, 0.4")
    path = _write(tmp_path, ini)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert run_config(path, outdir=str(out1)) == 0
    assert run_config(path, outdir=str(out2), threads=2) == 0
    for p in sorted(out1.iterdir()):
        assert p.read_bytes() == (out2 / p.name).read_bytes()
