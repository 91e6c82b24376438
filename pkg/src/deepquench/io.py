"""Run configuration, DQF1 field snapshots and CSV output.

Configuration text
------------------
Line oriented ``section.key = value`` pairs; ``#`` starts a comment and
blank lines are ignored.  Every key has a documented default (see
:data:`SCHEMA`).  Field-valued keys (targets, initial data, control)
accept a number, ``cos:A0,A1,k`` for ``A0 + A1 cos(k pi x / Lx)``, or the
path of a DQF1 snapshot file (relative paths resolve against the config
file's directory).

Snapshot layout
---------------
``b"DQF1"``, then little-endian int32 ``dim, nx, ny``, then float64
``dx, dy, t``, then ``nx * ny`` float64 values in row-major order (x
fastest).  A stream is a plain concatenation of such records; series
(trajectories, controls) are written as one record per time level.
"""

from __future__ import annotations

import csv
import io as _io
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from deepquench.errors import ConfigError, SnapshotFormatError
from deepquench.mesh import Grid, TimeGrid

MAGIC = b"DQF1"
_HEADER = struct.Struct("<4s3i3d")
HEADER_SIZE = _HEADER.size          # 40 bytes


# -- snapshots ---------------------------------------------------------------

@dataclass
class Snapshot:
    values: np.ndarray
    dim: int
    nx: int
    ny: int
    dx: float
    dy: float
    t: float = 0.0

    @property
    def grid(self) -> Grid:
        return Grid(self.dim, self.nx, self.ny, self.dx, self.dy)


def write_snapshot(values, grid: Grid, t: float = 0.0) -> bytes:
    values = grid.check(values)
    head = _HEADER.pack(MAGIC, grid.dim, grid.nx, grid.ny, grid.dx, grid.dy, float(t))
    return head + np.ascontiguousarray(values, dtype="<f8").tobytes()


def _read_record(data: bytes, offset: int):
    if len(data) - offset < HEADER_SIZE:
        raise SnapshotFormatError(f"truncated header at byte {offset}")
    magic, dim, nx, ny, dx, dy, t = _HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r} at byte {offset}")
    if dim not in (1, 2):
        raise SnapshotFormatError(f"dimension {dim} is not 1 or 2")
    if nx < 1 or ny < 1 or (dim == 1 and ny != 1):
        raise SnapshotFormatError(f"inconsistent sizes nx={nx}, ny={ny} for dim={dim}")
    n = nx * ny
    start = offset + HEADER_SIZE
    if len(data) - start < 8 * n:
        raise SnapshotFormatError(
            f"truncated payload: expected {8 * n} bytes, found {len(data) - start}")
    vals = np.frombuffer(data, dtype="<f8", count=n, offset=start).astype(float)
    return Snapshot(vals, dim, nx, ny, dx, dy, t), start + 8 * n


def read_snapshot(data: bytes) -> Snapshot:
    """Decode exactly one record."""
    snap, end = _read_record(data, 0)
    if end != len(data):
        raise SnapshotFormatError(f"{len(data) - end} trailing bytes after the record")
    return snap


def write_series(series, grid: Grid, times) -> bytes:
    series = np.asarray(series, dtype=float)
    if len(times) != series.shape[0]:
        raise SnapshotFormatError("one time stamp per record expected")
    return b"".join(write_snapshot(row, grid, t) for row, t in zip(series, times))


def read_series(data: bytes) -> list:
    out, offset = [], 0
    while offset < len(data):
        snap, offset = _read_record(data, offset)
        if out and (snap.dim, snap.nx, snap.ny) != (out[0].dim, out[0].nx, out[0].ny):
            raise SnapshotFormatError("records of a stream must share one grid")
        out.append(snap)
    if not out:
        raise SnapshotFormatError("empty stream")
    return out


# -- CSV ---------------------------------------------------------------------

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    Path(path).write_text(csv_text(header, rows), encoding="utf-8")


def read_csv(path):
    """Return ``(header, rows)`` with rows as lists of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


# -- configuration -----------------------------------------------------------

INF = math.inf


def _float(s):
    return float(s)


def _int(s):
    return int(s)


def _bool(s):
    t = s.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s):
    return s.strip()


def _field(s):
    """Field spec: float, 'cos:...' or a path string."""
    t = s.strip()
    try:
        return float(t)
    except ValueError:
        pass
    if t.startswith("cos:"):
        parts = t[4:].split(",")
        if len(parts) != 3:
            raise ValueError("cos: needs A0,A1,k")
        [float(p) for p in parts]
        return t
    if not t:
        raise ValueError("empty field spec")
    return t


def _opt_float(s):
    t = s.strip().lower()
    return None if t in ("auto", "none") else float(t)


# section -> key -> (parser, default)
SCHEMA = {
    "grid": {"dim": (_int, 1), "nx": (_int, 64), "ny": (_int, 1),
             "dx": (_float, 1.0 / 64), "dy": (_float, 1.0)},
    "time": {"T": (_float, 1.0), "Nt": (_int, 1000)},
    "model": {"alpha": (_float, 1.0), "beta": (_float, 1.0),
              "b0": (_float, 0.0), "b1": (_float, 0.0), "b2": (_float, 0.0),
              "b3": (_float, 0.0), "b4": (_float, 0.0),
              "pi": (_str, "linear"), "pi_slope": (_float, 1.0),
              "P": (_str, "smoothstep"), "P0": (_float, 1.0),
              "P_width": (_float, 2.0), "P_center": (_float, 0.0),
              "p": (_float, 1.0)},
    "targets": {"phiQ": (_field, 0.0), "sigmaQ": (_field, 0.0),
                "phiOmega": (_field, 0.0), "sigmaOmega": (_field, 0.0)},
    "bounds": {"u_min": (_float, -INF), "u_max": (_float, INF)},
    "init": {"mu0": (_field, 0.0), "phi0": (_field, 0.0), "sigma0": (_field, 0.0)},
    "control": {"u": (_field, 0.0), "gamma": (_float, 0.25)},
    "quench": {"gamma0": (_float, 0.5), "ratio": (_float, 0.5), "n_levels": (_int, 7)},
    "optimizer": {"max_outer_iters": (_int, 200), "step0": (_float, 1.0),
                  "armijo_c": (_float, 1e-4), "armijo_shrink": (_float, 0.5),
                  "stat_tol": (_opt_float, None), "stat_rtol": (_float, 1e-6),
                  "mode": (_str, "plain"), "bb": (_bool, True)},
    "newton": {"tol": (_float, 1e-10), "max_iters": (_int, 50)},
    "check": {"eps": (_float, 1e-5), "rtol": (_float, 1e-5), "newton_tol": (_float, 1e-12),
              "seed": (_int, 0)},
    "output": {"dir": (_str, "out")},
}


def defaults() -> dict:
    return {(s, k): d for s, keys in SCHEMA.items() for k, (_, d) in keys.items()}


@dataclass
class RunConfig:
    """Validated configuration: a mapping ``(section, key) -> value``."""

    values: dict = field(default_factory=defaults)
    base_dir: str = field(default=".", compare=False)

    def __getitem__(self, item):
        section, key = item.split(".", 1)
        return self.values[(section, key)]

    def section(self, name) -> dict:
        return {k: v for (s, k), v in self.values.items() if s == name}


def _fmt_config_value(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for s, keys in SCHEMA.items():
        for k in keys:
            lines.append(f"{s}.{k} = {_fmt_config_value(cfg.values[(s, k)])}")
        lines.append("")
    return "\n".join(lines)


def parse_config(text: str, base_dir: str | os.PathLike = ".") -> RunConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        Lists every syntax error (with line numbers) and every violated
        hypothesis, not just the first one found.
    """
    vals = defaults()
    problems = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'section.key = value'")
            continue
        lhs, rhs = (t.strip() for t in line.split("=", 1))
        if "." not in lhs:
            problems.append(f"line {lineno}: key {lhs!r} lacks a section")
            continue
        s, k = lhs.split(".", 1)
        if s not in SCHEMA:
            problems.append(f"line {lineno}: unknown section {s!r}")
            continue
        if k not in SCHEMA[s]:
            problems.append(f"line {lineno}: unknown key {lhs!r}")
            continue
        if (s, k) in seen:
            problems.append(f"line {lineno}: {lhs} already set on line {seen[(s, k)]}")
            continue
        seen[(s, k)] = lineno
        try:
            vals[(s, k)] = SCHEMA[s][k][0](rhs)
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {lhs}: {exc}")
    cfg = RunConfig(vals, str(base_dir))
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return parse_config(text, path.parent)


def validate(cfg: RunConfig) -> list:
    """All hypothesis and consistency violations of a parsed config."""
    v = cfg.values
    out = []
    dim, nx, ny = v[("grid", "dim")], v[("grid", "nx")], v[("grid", "ny")]
    if dim not in (1, 2):
        out.append("grid.dim must be 1 or 2")
    if nx < 2 or (dim == 2 and ny < 2) or ny < 1:
        out.append("grid.nx (and grid.ny in 2-D) must be >= 2")
    if dim == 1 and ny != 1:
        out.append("grid.ny must be 1 in 1-D")
    if not (v[("grid", "dx")] > 0 and v[("grid", "dy")] > 0):
        out.append("grid.dx and grid.dy must be > 0")
    if not v[("time", "T")] > 0 or v[("time", "Nt")] < 1:
        out.append("time.T must be > 0 and time.Nt >= 1")
    b = [v[("model", f"b{i}")] for i in range(5)]
    if any(x < 0 for x in b):
        out.append("H1: cost weights b0..b4 must be nonnegative")
    elif all(x == 0 for x in b):
        out.append("H1: cost weights b0..b4 must not all be zero")
    if not v[("bounds", "u_min")] <= v[("bounds", "u_max")]:
        out.append("H2: bounds.u_min <= bounds.u_max must hold")
    if not v[("model", "alpha")] > 0:
        out.append("H3: alpha must be > 0")
    if not v[("model", "beta")] > 0:
        out.append("H3: beta must be > 0")
    if v[("model", "P")] not in ("constant", "smoothstep"):
        out.append(f"model.P: unknown variant {v[('model', 'P')]!r}")
    if v[("model", "P0")] < 0:
        out.append("H4: P0 must be >= 0")
    if not v[("model", "P_width")] > 0:
        out.append("model.P_width must be > 0")
    if v[("model", "pi")] not in ("linear", "quartic-clamped"):
        out.append(f"model.pi: unknown variant {v[('model', 'pi')]!r}")
    if not v[("model", "p")] > 0:
        out.append("model.p: quench exponent must be > 0")
    if not 0 < v[("control", "gamma")] <= 1:
        out.append("control.gamma must lie in (0, 1]")
    if not 0 < v[("quench", "gamma0")] <= 1:
        out.append("quench.gamma0 must lie in (0, 1]")
    if not 0 < v[("quench", "ratio")] < 1:
        out.append("quench.ratio must lie in (0, 1)")
    if v[("quench", "n_levels")] < 1:
        out.append("quench.n_levels must be >= 1")
    if v[("optimizer", "mode")] not in ("plain", "adapted"):
        out.append("optimizer.mode must be plain or adapted")
    if not v[("optimizer", "step0")] > 0:
        out.append("optimizer.step0 must be > 0")
    if not 0 < v[("optimizer", "armijo_c")] < 1:
        out.append("optimizer.armijo_c must lie in (0, 1)")
    if not 0 < v[("optimizer", "armijo_shrink")] < 1:
        out.append("optimizer.armijo_shrink must lie in (0, 1)")
    for s in ("targets", "init", "control"):
        for k, (parser, _) in SCHEMA[s].items():
            spec = v[(s, k)]
            if parser is _field and isinstance(spec, str) and not spec.startswith("cos:"):
                p = Path(cfg.base_dir, spec)
                if not p.is_file():
                    out.append(f"{s}.{k}: file {spec!r} not found")
    if not out:
        # H7 needs the resolved phi0; only checked once the grid is sane
        try:
            phi0 = resolve_field(cfg, v[("init", "phi0")], build_grid(cfg))
            if np.any(np.abs(phi0) > 1.0):
                out.append("H7: |phi0| <= 1 must hold")
        except (SnapshotFormatError, ConfigError) as exc:
            out.append(f"init.phi0: {exc}")
    return out


# -- config -> model objects -------------------------------------------------

def build_grid(cfg: RunConfig) -> Grid:
    s = cfg.section("grid")
    return Grid(s["dim"], s["nx"], s["ny"], s["dx"], s["dy"])


def build_timegrid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(cfg["time.T"], cfg["time.Nt"])


def _load_spec_file(cfg, spec):
    data = Path(cfg.base_dir, spec).read_bytes()
    return read_series(data)


def resolve_field(cfg: RunConfig, spec, grid: Grid, n_levels: int | None = None):
    """Evaluate a field spec on ``grid``.

    Snapshot streams with ``n_levels`` records give a series; a single
    record gives one field.
    """
    if isinstance(spec, float):
        return np.full(grid.size, spec)
    if spec.startswith("cos:"):
        a0, a1, k = (float(p) for p in spec[4:].split(","))
        x = grid.coordinates() if grid.dim == 1 else grid.coordinates()[0]
        return a0 + a1 * np.cos(k * np.pi * x / grid.lx)
    snaps = _load_spec_file(cfg, spec)
    for sn in snaps:
        if (sn.dim, sn.nx, sn.ny) != (grid.dim, grid.nx, grid.ny):
            raise ConfigError(f"snapshot {spec!r} has grid {sn.dim}D {sn.nx}x{sn.ny}, "
                              f"config has {grid.dim}D {grid.nx}x{grid.ny}")
    if len(snaps) == 1:
        return snaps[0].values
    if n_levels is not None and len(snaps) == n_levels:
        return np.stack([sn.values for sn in snaps])
    raise ConfigError(f"snapshot {spec!r} holds {len(snaps)} records; expected 1"
                      + (f" or {n_levels}" if n_levels else ""))


def build_params(cfg: RunConfig):
    from deepquench.model import ControlBounds, ModelParams, TrackingTargets
    from deepquench.potentials import PiSpec, ProliferationSpec, QuenchWeight

    grid, tg = build_grid(cfg), build_timegrid(cfg)
    m = cfg.section("model")
    t = {k: resolve_field(cfg, v, grid, tg.Nt + 1) for k, v in cfg.section("targets").items()}
    return ModelParams(
        alpha=m["alpha"], beta=m["beta"],
        b0=m["b0"], b1=m["b1"], b2=m["b2"], b3=m["b3"], b4=m["b4"],
        pi=PiSpec(m["pi"], m["pi_slope"]),
        prolif=ProliferationSpec(m["P"], m["P0"], m["P_width"], m["P_center"]),
        quench=QuenchWeight(m["p"]),
        targets=TrackingTargets(**t),
        bounds=ControlBounds(cfg["bounds.u_min"], cfg["bounds.u_max"]),
    )


def build_problem(cfg: RunConfig, newton_tol: float | None = None):
    from deepquench.model import NewtonOptions, Problem

    grid, tg = build_grid(cfg), build_timegrid(cfg)
    init = {k: resolve_field(cfg, v, grid) for k, v in cfg.section("init").items()}
    newton = NewtonOptions(tol=newton_tol or cfg["newton.tol"], max_iters=cfg["newton.max_iters"])
    return Problem(grid, tg, build_params(cfg), init["mu0"], init["phi0"], init["sigma0"], newton)


def build_control(cfg: RunConfig, problem) -> np.ndarray:
    """Control from ``control.u``: a field held constant in time, or a stream of Nt records."""
    u = resolve_field(cfg, cfg["control.u"], problem.grid, problem.tg.Nt)
    if u.ndim == 1:
        u = np.broadcast_to(u, problem.control_shape).copy()
    return problem.check_control(u)


def build_optimizer_options(cfg: RunConfig):
    from deepquench.control import OptimizerOptions

    o = cfg.section("optimizer")
    return OptimizerOptions(max_outer_iters=o["max_outer_iters"], step0=o["step0"],
                            armijo_c=o["armijo_c"], armijo_shrink=o["armijo_shrink"],
                            stat_tol=o["stat_tol"], stat_rtol=o["stat_rtol"],
                            mode=o["mode"], bb=o["bb"])


def build_schedule(cfg: RunConfig):
    from deepquench.control import QuenchSchedule

    q = cfg.section("quench")
    return QuenchSchedule(q["gamma0"], q["ratio"], q["n_levels"], build_optimizer_options(cfg))
