"""Run configuration: flat sectioned key/value files parsed into RunConfig.

The format is INI (configparser): one level of sections, plain key = value
lines, '#' or ';' line comments.  Every getter raises ConfigError naming
the offending section.key so a bad file fails with a usable diagnostic.
"""

import configparser
from dataclasses import dataclass, field as dc_field

from .coefficients import (CoefficientField, checkerboard, identity_system,
                           laplace, random_spd, skew)
from .domain import Domain, build_graph_domain

COMMANDS = ("solve", "green", "heatkernel", "verify", "fundamental")
ROUTES = ("direct", "parabolic", "both")
VERIFY_CHECKS = ("oracles", "symmetry", "log_bound", "convolution")


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


@dataclass(eq=False)
class RunConfig:
    """Parsed, validated run description: one command plus its inputs.

    A fixed config (including seed) determines the run completely; nothing
    downstream reads the clock, the environment, or any other hidden state.
    """

    command: str
    domain_spec: dict
    coefficient_spec: dict
    h: float
    route: str = "direct"
    tol: float = 1e-10
    eps: float = 1e-6
    sources: tuple = ()
    policy: dict = dc_field(default_factory=lambda: {"min_dist_factor": 4.0,
                                                     "min_wall_factor": 4.0})
    outdir: str = "out"
    seed: int = 0
    threads: int = 1
    solve: dict = dc_field(default_factory=dict)
    heatkernel: dict = dc_field(default_factory=dict)
    verify: dict = dc_field(default_factory=dict)
    fundamental: dict = dc_field(default_factory=dict)

    def build_domain(self) -> Domain:
        return _build_domain(self.domain_spec)

    def build_field(self) -> CoefficientField:
        return _build_field(self.coefficient_spec)


class _Section:
    """One config section with typed getters that name the key on failure."""

    def __init__(self, parser, name):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}

    def __contains__(self, key):
        return key in self.raw

    def get(self, key, default=None, required=False):
        if key in self.raw:
            return self.raw[key]
        if required:
            raise ConfigError(f"{self.name}.{key}: missing required key")
        return default

    def get_float(self, key, default=None, required=False, positive=False):
        raw = self.get(key, required=required)
        if raw is None:
            return default
        try:
            val = float(raw)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: not a number: {raw!r}") from None
        if positive and not (val > 0):
            raise ConfigError(f"{self.name}.{key}: must be positive, got {val}")
        return val

    def get_int(self, key, default=None, required=False, positive=False):
        raw = self.get(key, required=required)
        if raw is None:
            return default
        try:
            val = int(raw)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: not an integer: {raw!r}") from None
        if positive and not (val > 0):
            raise ConfigError(f"{self.name}.{key}: must be positive, got {val}")
        return val

    def get_choice(self, key, choices, default=None, required=False):
        raw = self.get(key, default=default, required=required)
        if raw is None:
            return None
        raw = raw.strip().lower()
        if raw not in choices:
            raise ConfigError(f"{self.name}.{key}: {raw!r} not one of {choices}")
        return raw

    def get_point(self, key, default=None, required=False):
        raw = self.get(key, required=required)
        if raw is None:
            return default
        return _parse_point(self.name, key, raw)

    def get_points(self, key, default=(), required=False):
        raw = self.get(key, required=required)
        if raw is None:
            return tuple(default)
        return tuple(_parse_point(self.name, key, part)
                     for part in raw.split(";") if part.strip())

    def get_floats(self, key, default=(), required=False):
        raw = self.get(key, required=required)
        if raw is None:
            return tuple(default)
        try:
            return tuple(float(p) for p in raw.split(",") if p.strip())
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: not a number list: {raw!r}") from None


def _parse_point(section, key, raw):
    parts = [p for p in raw.split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"{section}.{key}: expected 'x,y', got {raw!r}")
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError:
        raise ConfigError(f"{section}.{key}: not a number pair: {raw!r}") from None


def _build_domain(spec: dict) -> Domain:
    kind = spec["kind"]
    if kind == "disk":
        return Domain.disk(spec["radius"], segments=spec["segments"])
    if kind == "square":
        return Domain.square(spec["side"], corner=spec["corner"])
    if kind == "box":
        return Domain.box(*spec["bounds"])
    if kind == "graph":
        return build_graph_domain(spec["samples"], spec["lipschitz"], spec["box"])
    raise ConfigError(f"domain.kind: unknown kind {kind!r}")


def _build_field(spec: dict) -> CoefficientField:
    kind = spec["kind"]
    if kind == "laplace":
        return laplace()
    if kind == "identity":
        return identity_system(spec["n"])
    if kind == "checkerboard":
        return checkerboard(spec["a"], spec["b"], spec["tiles"], bbox=spec["bbox"])
    if kind == "skew":
        return skew(spec["drift"], n_strips=spec["strips"])
    if kind == "random":
        return random_spd(spec["seed"], spec["lam"], spec["Lam"],
                          n_regions=spec["regions"])
    raise ConfigError(f"coefficients.kind: unknown kind {kind!r}")


def _domain_spec(sec: _Section) -> dict:
    kind = sec.get_choice("kind", ("disk", "square", "box", "graph"),
                          required=True)
    spec = {"kind": kind}
    if kind == "disk":
        spec["radius"] = sec.get_float("radius", default=1.0, positive=True)
        spec["segments"] = sec.get_int("segments", default=256, positive=True)
    elif kind == "square":
        spec["side"] = sec.get_float("side", default=1.0, positive=True)
        spec["corner"] = sec.get_point("corner", default=(0.0, 0.0))
    elif kind == "box":
        bounds = tuple(sec.get_float(k, required=True)
                       for k in ("x0", "x1", "y0", "y1"))
        if bounds[0] >= bounds[1] or bounds[2] >= bounds[3]:
            raise ConfigError("domain.x0: box bounds must satisfy x0 < x1, y0 < y1")
        spec["bounds"] = bounds
    elif kind == "graph":
        pts = sec.get_points("samples", required=True)
        if len(pts) < 2:
            raise ConfigError("domain.samples: need at least two profile samples")
        spec["samples"] = [list(p) for p in pts]
        spec["lipschitz"] = sec.get_float("lipschitz", required=True)
        box = sec.get_floats("box", required=True)
        if len(box) != 3:
            raise ConfigError("domain.box: expected 'x0,x1,ytop'")
        spec["box"] = tuple(box)
    # fail fast on anything the constructors would reject later
    try:
        _build_domain(spec)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"domain.kind: invalid {kind} domain: {exc}") from exc
    return spec


def _coefficient_spec(sec: _Section) -> dict:
    kind = sec.get_choice("kind", ("laplace", "identity", "checkerboard",
                                   "skew", "random"), default="laplace")
    spec = {"kind": kind}
    if kind == "identity":
        spec["n"] = sec.get_int("n", default=1, positive=True)
    elif kind == "checkerboard":
        spec["a"] = sec.get_float("a", default=1.0, positive=True)
        spec["b"] = sec.get_float("b", default=10.0, positive=True)
        spec["tiles"] = sec.get_int("tiles", default=16, positive=True)
        bbox = sec.get_floats("bbox", default=(0.0, 0.0, 1.0, 1.0))
        if len(bbox) != 4:
            raise ConfigError("coefficients.bbox: expected 'x0,y0,x1,y1'")
        spec["bbox"] = tuple(bbox)
    elif kind == "skew":
        spec["drift"] = sec.get_float("drift", default=0.5)
        spec["strips"] = sec.get_int("strips", default=2, positive=True)
    elif kind == "random":
        spec["seed"] = sec.get_int("seed", default=0)
        spec["lam"] = sec.get_float("lam", default=1.0, positive=True)
        spec["Lam"] = sec.get_float("Lam", default=10.0, positive=True)
        spec["regions"] = sec.get_int("regions", default=4, positive=True)
    try:
        _build_field(spec)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"coefficients.kind: invalid {kind} field: {exc}") from exc
    return spec


def load_config(path, command: str | None = None) -> RunConfig:
    """Parse and validate a config file; raises ConfigError with the key.

    An explicit command (from a CLI subcommand) must agree with any
    run.command in the file; with neither, the file must name one.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found or unreadable: {path}")

    run = _Section(parser, "run")
    file_command = run.get_choice("command", COMMANDS, required=command is None)
    if command is not None and file_command is not None and command != file_command:
        raise ConfigError(f"run.command: {file_command!r} conflicts with the "
                          f"{command!r} subcommand")
    command = command or file_command
    mesh = _Section(parser, "mesh")
    green = _Section(parser, "green")
    policy = _Section(parser, "policy")
    output = _Section(parser, "output")
    cfg = RunConfig(
        command=command,
        domain_spec=(_domain_spec(_Section(parser, "domain"))
                     if command != "fundamental" else {"kind": "box"}),
        coefficient_spec=_coefficient_spec(_Section(parser, "coefficients")),
        h=mesh.get_float("h", required=True, positive=True),
        route=green.get_choice("route", ROUTES, default="direct"),
        tol=green.get_float("tol", default=1e-10, positive=True),
        eps=green.get_float("eps", default=1e-6, positive=True),
        sources=green.get_points("sources"),
        policy={"min_dist_factor": policy.get_float("min_dist_factor",
                                                    default=4.0, positive=True),
                "min_wall_factor": policy.get_float("min_wall_factor",
                                                    default=4.0, positive=True)},
        outdir=output.get("dir", default="out"),
        seed=run.get_int("seed", default=0),
        threads=run.get_int("threads", default=1, positive=True),
    )

    if command == "green" and not cfg.sources:
        raise ConfigError("green.sources: missing required key")

    sol = _Section(parser, "solve")
    if command == "solve":
        f_kind = sol.get_choice("f", ("one", "bump"), default="one")
        cfg.solve = {"f": f_kind}
        if f_kind == "bump":
            cfg.solve["center"] = sol.get_point("center", required=True)
            cfg.solve["rho"] = sol.get_float("rho", required=True, positive=True)

    hk = _Section(parser, "heatkernel")
    if command == "heatkernel":
        cfg.heatkernel = {
            "source": hk.get_point("source", required=True),
            "eps": hk.get_float("eps", default=1e-6, positive=True),
            "rate_factor": hk.get_float("rate_factor", default=0.8,
                                        positive=True),
        }

    ver = _Section(parser, "verify")
    if command == "verify":
        raw = ver.get("checks", default=", ".join(VERIFY_CHECKS))
        checks = tuple(c.strip() for c in raw.split(",") if c.strip())
        for c in checks:
            if c not in VERIFY_CHECKS:
                raise ConfigError(f"verify.checks: unknown check {c!r} "
                                  f"(choices {VERIFY_CHECKS})")
        # verify.sources takes precedence; [green] acts as a shared fallback.
        cfg.sources = ver.get_points("sources", default=cfg.sources)
        if not cfg.sources:
            raise ConfigError("verify.sources: missing required key")
        if "symmetry" in checks and len(cfg.sources) < 2:
            raise ConfigError("verify.sources: the symmetry check needs at "
                              "least two source points")
        cfg.verify = {"checks": checks}

    fund = _Section(parser, "fundamental")
    if command == "fundamental":
        grid = fund.get_floats("grid", required=True)
        if len(grid) != 3 or grid[0] >= grid[1] or grid[2] <= 0:
            raise ConfigError("fundamental.grid: expected 'lo,hi,step' with "
                              "lo < hi and step > 0")
        scales = fund.get_floats("scales", default=(0.25, 0.5, 1.0))
        if len(scales) < 2 or any(s <= 0 for s in scales):
            raise ConfigError("fundamental.scales: need >= 2 positive scales")
        cfg.fundamental = {
            "x": fund.get_point("x", default=(0.0, 0.0)),
            "box_size": fund.get_float("box_size", required=True, positive=True),
            "split_time": fund.get_float("split_time", default=1.0,
                                         positive=True),
            "grid": tuple(grid),
            "scales": scales,
        }
        b = cfg.fundamental["box_size"]
        cfg.domain_spec = {"kind": "box", "bounds": (-b, b, -b, b)}

    return cfg
