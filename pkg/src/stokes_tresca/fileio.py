"""Run configuration files, VTK output and convergence CSV."""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .config import SolverConfig
from .errors import ConfigurationError
from .mesh import FRICTION, SIDES, generate_rectangle, load_msh

CSV_HEADER = "outer_iter,inner_iters,du_h1,dp_l2,div_l2"

_SOLVER_KEYS = {
    "nu": float,
    "rho": float,
    "epsilon": float,
    "epsilon_schedule": "bool",
    "xi": float,
    "tau_p": float,
    "pressure_update": str,
    "inner_tol": float,
    "outer_tol": float,
    "div_tol": float,
    "max_inner": int,
    "max_outer": int,
    "lambda_step_mode": str,
    "cg_tol": float,
}
_RUN_KEYS = {
    "mesh.nx": int,
    "mesh.ny": int,
    "mesh.width": float,
    "mesh.height": float,
    "mesh.msh_path": str,
    "bc.friction_sides": "sides",
    "force.preset": str,
    "force.side": "side",
    "output.dir": str,
    "output.formats": "formats",
}
_FORMATS = ("vtk", "csv")
_PRESET = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


class ConfigError(ConfigurationError):
    """A configuration file entry is missing, unknown or invalid."""


@dataclass(frozen=True)
class RunConfig:
    mesh_nx: int | None = None
    mesh_ny: int | None = None
    mesh_width: float = 1.0
    mesh_height: float = 1.0
    msh_path: str | None = None
    friction_sides: tuple = ()
    force_preset: str = "zero"
    force_side: str | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "."
    formats: tuple = _FORMATS
    base_dir: str = "."

    def build_mesh(self):
        if self.msh_path is not None:
            path = Path(self.msh_path)
            return load_msh(path if path.is_absolute() else Path(self.base_dir) / path)
        rule = {side: FRICTION for side in self.friction_sides}
        return generate_rectangle(self.mesh_nx, self.mesh_ny, self.mesh_width, self.mesh_height, rule)

    def build_force(self, mesh):
        side = self.force_side or (self.friction_sides[0] if self.friction_sides else None)
        return make_force(self.force_preset, mesh, side)


def _bool(text):
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _convert(kind, text):
    if kind == "bool":
        return _bool(text)
    if kind == "sides":
        items = [s.strip().lower() for s in text.split(",") if s.strip()]
        if items == ["none"]:
            return ()
        bad = [s for s in items if s not in SIDES]
        if bad:
            raise ValueError(f"unknown side {bad[0]!r}; expected {', '.join(SIDES)} or none")
        return tuple(dict.fromkeys(items))
    if kind == "side":
        side = text.strip().lower()
        if side not in SIDES:
            raise ValueError(f"unknown side {side!r}; expected one of {', '.join(SIDES)}")
        return side
    if kind == "formats":
        items = tuple(s.strip().lower() for s in text.split(",") if s.strip())
        bad = [s for s in items if s not in _FORMATS]
        if bad or not items:
            raise ValueError(f"formats must be a list drawn from {', '.join(_FORMATS)}")
        return items
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text.strip()


def parse_preset(text):
    """Split ``name(a, b)`` into ``("name", [a, b])``."""
    m = _PRESET.match(text)
    if not m:
        raise ValueError(f"cannot parse force preset {text!r}")
    name, args = m.group(1).lower(), m.group(2)
    values = [float(a) for a in args.split(",")] if args and args.strip() else []
    expected = {"zero": 0, "constant": 2, "shear": 1}
    if name not in expected:
        raise ValueError(f"unknown force preset {name!r}; expected zero, constant(cx, cy) or shear(magnitude)")
    if len(values) != expected[name]:
        raise ValueError(f"force preset {name} takes {expected[name]} argument(s), got {len(values)}")
    return name, values


def make_force(preset, mesh, side=None):
    """Body force for a preset string: ``None``, a constant pair or a callable.

    ``shear(m)`` is a lid-like drive along ``side``: it points along that
    wall (+x for bottom/top, +y for left/right) with magnitude ``m`` at
    the wall, decaying linearly to zero at the opposite side of the
    bounding box.
    """
    name, args = parse_preset(preset)
    if name == "zero":
        return None
    if name == "constant":
        return tuple(args)
    if side is None:
        raise ConfigError("force preset shear needs a wall: set force.side or a friction side")
    mag = args[0]
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    axis = 1 if side in ("bottom", "top") else 0
    span = hi[axis] - lo[axis]
    wall = lo[axis] if side in ("bottom", "left") else hi[axis]
    direction = np.array([1.0, 0.0]) if axis == 1 else np.array([0.0, 1.0])

    def force(points):
        decay = np.clip(1.0 - np.abs(points[:, axis] - wall) / span, 0.0, 1.0)
        return mag * decay[:, None] * direction[None, :]

    return force


def parse_config(path):
    """Read a ``key = value`` run file (``#`` starts a comment)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from None
    run, solver, lines = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in lines:
            raise ConfigError(f"{path}:{lineno}: key {key!r} repeated (first on line {lines[key]})")
        kind = _SOLVER_KEYS.get(key, _RUN_KEYS.get(key))
        if kind is None:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            converted = _convert(kind, value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None
        (solver if key in _SOLVER_KEYS else run)[key] = converted
        lines[key] = lineno

    try:
        solver_cfg = SolverConfig(**solver)
    except ConfigurationError as exc:
        key = str(exc).split(" ", 1)[0]
        where = f":{lines[key]}" if key in lines else ""
        raise ConfigError(f"{path}{where}: {exc}") from None

    has_grid = "mesh.nx" in run or "mesh.ny" in run
    has_file = "mesh.msh_path" in run
    if has_grid == has_file:
        raise ConfigError(f"{path}: give exactly one mesh source: mesh.nx/mesh.ny or mesh.msh_path")
    if has_grid and not ("mesh.nx" in run and "mesh.ny" in run):
        raise ConfigError(f"{path}: mesh.nx and mesh.ny must both be set")
    for key in ("mesh.nx", "mesh.ny"):
        if key in run and run[key] < 1:
            raise ConfigError(f"{path}:{lines[key]}: {key} must be >= 1")
    for key in ("mesh.width", "mesh.height"):
        if key in run and not run[key] > 0:
            raise ConfigError(f"{path}:{lines[key]}: {key} must be > 0")
    if "force.preset" in run:
        try:
            parse_preset(run["force.preset"])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lines['force.preset']}: force.preset: {exc}") from None

    return RunConfig(
        mesh_nx=run.get("mesh.nx"),
        mesh_ny=run.get("mesh.ny"),
        mesh_width=run.get("mesh.width", 1.0),
        mesh_height=run.get("mesh.height", 1.0),
        msh_path=run.get("mesh.msh_path"),
        friction_sides=run.get("bc.friction_sides", ()),
        force_preset=run.get("force.preset", "zero"),
        force_side=run.get("force.side"),
        solver=solver_cfg,
        output_dir=run.get("output.dir", "."),
        formats=run.get("output.formats", _FORMATS),
        base_dir=str(path.parent),
    )


def emit_config(cfg):
    """Render ``cfg`` in the format read by :func:`parse_config`."""
    out = []
    if cfg.msh_path is not None:
        out.append(f"mesh.msh_path = {cfg.msh_path}")
    else:
        out += [f"mesh.nx = {cfg.mesh_nx}", f"mesh.ny = {cfg.mesh_ny}"]
    out += [
        f"mesh.width = {cfg.mesh_width!r}",
        f"mesh.height = {cfg.mesh_height!r}",
        f"bc.friction_sides = {', '.join(cfg.friction_sides) or 'none'}",
        f"force.preset = {cfg.force_preset}",
        *([f"force.side = {cfg.force_side}"] if cfg.force_side else []),
        f"output.dir = {cfg.output_dir}",
        f"output.formats = {', '.join(cfg.formats)}",
    ]
    s = cfg.solver
    for f in fields(s):
        if f.name not in _SOLVER_KEYS:
            continue
        value = getattr(s, f.name)
        if isinstance(value, bool):
            text = "on" if value else "off"
        elif isinstance(value, float):
            text = repr(value)
        elif isinstance(value, np.ndarray):
            raise ConfigError("per-node xi cannot be written to a config file")
        else:
            text = str(value)
        out.append(f"{f.name} = {text}")
    return "\n".join(out) + "\n"


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x):
    return repr(float(x))


def write_vtk(mesh, velocity, pressure, divergence, path, title="stokes-tresca solution"):
    """Legacy ASCII VTK (3.0) unstructured grid with solution fields."""
    velocity = np.asarray(velocity, dtype=float).reshape(-1, 2)
    pressure = np.asarray(pressure, dtype=float)
    divergence = np.asarray(divergence, dtype=float)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    if velocity.shape[0] != nv or pressure.shape != (nt,) or divergence.shape != (nt,):
        raise ValueError("field sizes do not match the mesh")
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {nv}")
    lines.append("VECTORS velocity double")
    lines += [f"{_num(x)} {_num(y)} 0" for x, y in velocity]
    lines.append(f"CELL_DATA {nt}")
    for name, values in (("pressure", pressure), ("divergence", divergence)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_num(v) for v in values]
    try:
        _atomic_write(path, "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc.strerror or exc}") from exc


def convergence_rows(report):
    return [
        (n, int(inner), du, dp, div)
        for n, (inner, du, dp, div) in enumerate(
            zip(report.inner_iterations, report.du_h1, report.dp_l2, report.div_l2), start=1)
    ]


def write_convergence_csv(report, path):
    lines = [CSV_HEADER]
    lines += [f"{n},{inner},{_num(du)},{_num(dp)},{_num(div)}" for n, inner, du, dp, div in convergence_rows(report)]
    try:
        _atomic_write(path, "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV file {path}: {exc.strerror or exc}") from exc
