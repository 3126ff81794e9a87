"""Configuration, run orchestration, verification and file formats."""

from __future__ import annotations

import argparse
import csv
import json
import struct
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, SolverError, TableError
from .field import FieldState
from .geometry import Box, DistState, SpatialDomain, VelocityGrid
from .landau import LandauOperator, PotentialParams, SplitParams, weight_exponents
from .maxwellian import DEFAULT_N_V, DEFAULT_V_MAX, Projector, sqrt_maxwellian
from .transport import check_cfl

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
CSV_HEADER = ("t", "mass_plus", "mass_minus", "total_energy", "e_nu", "d_nu", "e_plain", "min_F")
SNAPSHOT_VERSION = 1


# -- configuration -------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_boxes(text: str) -> list[Box]:
    boxes = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vals = [float(x) for x in chunk.replace(" ", "").split(",")]
        if len(vals) != 6:
            raise ValueError(f"a box needs 6 numbers lo1,lo2,lo3,hi1,hi2,hi3, got {len(vals)}")
        boxes.append(Box(tuple(vals[:3]), tuple(vals[3:])))
    if not boxes:
        raise ValueError("at least one box is required")
    return boxes


def _parse_times(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(" ", "").split(",") if x)


def _fmt_float(x: float) -> str:
    return repr(float(x))


_PARSERS = {
    "float": float,
    "int": int,
    "bool": _parse_bool,
    "str": str.strip,
    "boxes": _parse_boxes,
    "times": _parse_times,
    "optfloat": float,
}


@dataclass
class RunConfig:
    """Validated run configuration; ``None`` marks values resolved from others."""

    # domain
    boxes: tuple = (Box((0.0, 0.0, 0.0), (4.0, 1.0, 1.0)),)
    h_x: float = 0.125
    active_dims: int = 1
    # velocity grid
    n_v: int = DEFAULT_N_V
    v_max: float = DEFAULT_V_MAX
    # physics
    gamma: float = 0.0
    l: float | None = None
    nu: float = 0.05
    eps: float = 0.1
    R: float | None = None
    # stepping
    dt: float | None = None
    t_end: float = 1.0
    picard_tol: float = 1e-9
    picard_max: int = 10
    scheme: str = "imex_ak"
    solver: str = "direct"
    nonlinear: bool = True
    # initial data
    init: str = "wave"
    amplitude: float = 1e-3
    seed: int = 20240601
    # diagnostics
    diag_order: int = 1
    cadence: int = 1
    fit_t0: float = 0.2
    fit_t1: float | None = None
    fit_mode: str = "fixed"
    # output
    out_dir: str = "out"
    csv_name: str = "series.csv"
    snapshot_times: tuple = ()

    # key -> parser kind
    KINDS = {
        "boxes": "boxes", "h_x": "float", "active_dims": "int", "n_v": "int", "v_max": "float",
        "gamma": "float", "l": "optfloat", "nu": "float", "eps": "float", "R": "optfloat",
        "dt": "optfloat", "t_end": "float", "picard_tol": "float", "picard_max": "int",
        "scheme": "str", "solver": "str", "nonlinear": "bool", "init": "str", "amplitude": "float",
        "seed": "int", "diag_order": "int", "cadence": "int", "fit_t0": "float", "fit_t1": "optfloat",
        "fit_mode": "str", "out_dir": "str", "csv_name": "str", "snapshot_times": "times",
    }

    @property
    def params(self) -> PotentialParams:
        return PotentialParams(self.gamma)

    @property
    def hardness(self) -> str:
        return self.params.hardness

    @property
    def rq(self) -> tuple[float, float]:
        return weight_exponents(self.gamma)

    @property
    def split(self) -> SplitParams:
        return SplitParams(self.eps, self.R)

    def build(self):
        """Return ``(SpatialDomain, VelocityGrid)``."""
        return SpatialDomain(list(self.boxes), self.h_x, self.active_dims), VelocityGrid(self.n_v, self.v_max)


def _err(msg: str, key: str, lines: dict) -> ConfigError:
    return ConfigError(msg, key=key, line=lines.get(key))


def parse_config(text: str) -> RunConfig:
    """Parse a flat ``key = value`` document (``#`` starts a comment)."""
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, val = (s.strip() for s in body.split("=", 1))
        if key not in RunConfig.KINDS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", key=key, line=lineno)
        try:
            values[key] = _PARSERS[RunConfig.KINDS[key]](val)
        except ValueError as exc:
            raise ConfigError(f"type mismatch: {exc}", key=key, line=lineno) from None
        lines[key] = lineno
    cfg = RunConfig(**values)
    return validate_config(cfg, lines)


def validate_config(cfg: RunConfig, lines: dict | None = None) -> RunConfig:
    """Check every constraint, resolve derived defaults and return ``cfg``."""
    lines = lines or {}
    if cfg.n_v < 2 or cfg.n_v % 2:
        raise _err(f"n_v must be even and at least 2, got {cfg.n_v}", "n_v", lines)
    if cfg.v_max < 5.0:
        raise _err(f"v_max must be at least 5 (standard deviations of mu), got {cfg.v_max}", "v_max", lines)
    if not -3.0 <= cfg.gamma <= 1.0:
        raise _err(f"gamma must lie in [-3, 1], got {cfg.gamma}", "gamma", lines)
    if cfg.nu < 0:
        raise _err(f"nu must be non-negative, got {cfg.nu}", "nu", lines)
    if cfg.R is None:
        cfg.R = 0.6 * cfg.v_max
    if not 0 < cfg.eps < cfg.R:
        raise _err(f"need 0 < eps < R, got eps={cfg.eps}, R={cfg.R}", "eps" if "eps" in lines else "R", lines)
    if cfg.R > cfg.v_max:
        raise _err(f"R ({cfg.R}) must not exceed v_max ({cfg.v_max})", "R", lines)
    if cfg.l is None:
        cfg.l = 3.0 * cfg.rq[1]
    try:
        domain, grid = cfg.build()
    except ConfigError as exc:
        raise _err(exc.message, exc.key or "boxes", lines) from None
    hmin = float(np.min(domain.h[: domain.active_dims]))
    if cfg.dt is None:
        # largest step within 0.9 of the CFL bound that divides t_end evenly
        cfl = 0.9 * hmin / cfg.v_max
        cfg.dt = cfg.t_end / np.ceil(cfg.t_end / cfl) if cfg.t_end > 0 else cfl
    if not cfg.dt > 0:
        raise _err(f"dt must be positive, got {cfg.dt}", "dt", lines)
    try:
        check_cfl(cfg.dt, domain, grid)
    except ConfigError as exc:
        key = "dt" if "dt" in lines else ("h_x" if "h_x" in lines else "v_max")
        raise _err(exc.message, key, lines) from None
    if cfg.t_end < 0:
        raise _err(f"t_end must be non-negative, got {cfg.t_end}", "t_end", lines)
    if not 0 < cfg.picard_tol <= 1e-2:
        raise _err(f"picard_tol must lie in (0, 1e-2], got {cfg.picard_tol}", "picard_tol", lines)
    if cfg.picard_max < 1:
        raise _err("picard_max must be at least 1", "picard_max", lines)
    if cfg.scheme not in ("imex_ak", "fully_explicit"):
        raise _err(f"scheme must be imex_ak or fully_explicit, got {cfg.scheme!r}", "scheme", lines)
    if cfg.solver not in ("direct", "cg"):
        raise _err(f"solver must be direct or cg, got {cfg.solver!r}", "solver", lines)
    if cfg.init not in ("zero", "wave", "random"):
        raise _err(f"init must be zero, wave or random, got {cfg.init!r}", "init", lines)
    if not 0 <= cfg.diag_order <= 3:
        raise _err(f"diag_order must lie in 0..3, got {cfg.diag_order}", "diag_order", lines)
    if cfg.cadence < 1:
        raise _err("cadence must be at least 1", "cadence", lines)
    if cfg.fit_mode not in ("fixed", "free"):
        raise _err(f"fit_mode must be fixed or free, got {cfg.fit_mode!r}", "fit_mode", lines)
    if not 0 <= cfg.seed < 2**64:
        raise _err("seed must be a 64-bit unsigned integer", "seed", lines)
    if any(t < 0 for t in cfg.snapshot_times):
        raise _err("snapshot times must be non-negative", "snapshot_times", lines)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Canonical ``key = value`` text; unset optional keys are omitted."""
    out = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        kind = RunConfig.KINDS[f.name]
        if val is None:
            continue
        if kind == "boxes":
            txt = "; ".join(",".join(_fmt_float(x) for x in (*b.lo, *b.hi)) for b in val)
        elif kind == "times":
            txt = ",".join(_fmt_float(x) for x in val)
        elif kind in ("float", "optfloat"):
            txt = _fmt_float(val)
        elif kind == "bool":
            txt = "true" if val else "false"
        else:
            txt = str(val)
        out.append(f"{f.name} = {txt}")
    return "\n".join(out) + "\n"


# -- initial data -------------------------------------------------------------------------

def initial_state(domain: SpatialDomain, grid: VelocityGrid, kind: str = "wave", amplitude: float = 1e-3,
                  seed: int = 0) -> DistState:
    """Charge-neutral initial perturbation compatible with specular walls.

    ``wave``: low cosine modes, with odd-in-``v_i`` parts carried by sines
    along ``x_i``.  ``random``: the same structure with coefficients drawn
    from a ``PCG64`` generator seeded by ``seed``.
    """
    f = np.zeros((2, domain.n_cells) + grid.shape)
    if kind == "zero" or amplitude == 0:
        return DistState(f)
    m12 = sqrt_maxwellian(grid.v)
    v = grid.v
    dims = domain.active_dims
    xi = (domain.centers - domain.origin) / domain.extent
    cos = np.cos(np.pi * xi)
    sin = np.sin(np.pi * xi)
    C = np.prod(cos[:, :dims], axis=1)
    S = [sin[:, i] * np.prod(np.delete(cos[:, :dims], i, axis=1), axis=1) for i in range(dims)]

    def cell(u):
        return u[:, None, None, None]

    if kind == "wave":
        ca = (0.5, -0.3)
        cc = (0.2, 0.0)
        cb = (0.3, 0.0)
        cst = (0.0, 0.2)
        cross = (0.2, 0.0)
    elif kind == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        ca, cc, cb, cst, cross = (tuple(rng.uniform(-0.5, 0.5, 2)) for _ in range(5))
    else:
        raise ConfigError(f"unknown initial data kind {kind!r}", key="init")
    for s in range(2):
        u = 1.0 + ca[s] * cell(C) + cc[s] * cell(C) * (grid.vsq - 3.0)
        u = u + cst[s] * cell(C) * (v[..., 1] ** 2 - 1.0)
        for i in range(dims):
            u = u + cb[s] * cell(S[i]) * v[..., i]
            j = (i + 1) % 3
            u = u + cross[s] * cell(S[i]) * v[..., i] * v[..., j]
        f[s] = amplitude * u * m12
    # enforce exact discrete charge neutrality through the uniform density of f_-
    rho = grid.integrate((f[0] - f[1]) * m12)
    mass_mu = float(grid.integrate(m12 * m12))
    f[1] += float(np.mean(rho)) / mass_mu * m12
    return DistState(f)


# -- snapshots ---------------------------------------------------------------------------

def write_snapshot(path, state: DistState, domain: SpatialDomain, grid: VelocityGrid, meta: dict | None = None):
    """Binary snapshot: ``<u8`` header length, UTF-8 JSON header, ``<f8`` data.

    Data are stored on the full spatial lattice in the order
    ``[species][x1][x2][x3][v1][v2][v3]``; lattice cells outside the domain
    hold zeros and are listed in the header mask.
    """
    header = {
        "version": SNAPSHOT_VERSION,
        "time": float(state.t),
        "dims": domain.active_dims,
        "lattice_shape": list(domain.shape),
        "h": [float(x) for x in domain.h],
        "origin": [float(x) for x in domain.origin],
        "boxes": [[*map(float, b.lo), *map(float, b.hi)] for b in domain.boxes],
        "n_v": grid.n_v,
        "v_max": float(grid.v_max),
        "mask": np.flatnonzero(domain.mask.ravel()).tolist(),
        "order": "species,x1,x2,x3,v1,v2,v3",
        "dtype": "<f8",
    }
    header.update(meta or {})
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    lattice = domain.to_lattice(np.asarray(state.f, dtype=np.float64), cell_axis=1)
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(lattice, dtype="<f8").tobytes())
    except OSError as exc:
        raise SolverError(f"cannot write snapshot {path}: {exc}") from None
    return path


def read_snapshot(path):
    """Return ``(header, f)`` with ``f`` in compact ``(2, n_cells, n, n, n)`` form."""
    data = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8:8 + n].decode("utf-8"))
    nv = header["n_v"]
    shape = (2, *header["lattice_shape"], nv, nv, nv)
    arr = np.frombuffer(data[8 + n:], dtype="<f8")
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"snapshot {path} holds {arr.size} values, expected {int(np.prod(shape))}")
    lattice = arr.reshape(shape)
    mask = np.zeros(int(np.prod(header["lattice_shape"])), dtype=bool)
    mask[header["mask"]] = True
    mask = mask.reshape(header["lattice_shape"])
    f = lattice[:, mask]
    return header, np.array(f, dtype=np.float64)


# -- series I/O --------------------------------------------------------------------------

def write_series(path, records) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for rec in records:
                w.writerow([format(float(x), ".17g") for x in rec.row()])
    except OSError as exc:
        raise SolverError(f"cannot write series {path}: {exc}") from None


def read_series(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} holds no records")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


# -- orchestration ----------------------------------------------------------------------

def build_stepper(cfg: RunConfig):
    from .integrator import StepConfig, Stepper

    domain, grid = cfg.build()
    op = LandauOperator(grid, cfg.params)
    step_cfg = StepConfig(dt=cfg.dt, t_end=cfg.t_end, picard_tol=cfg.picard_tol, picard_max=cfg.picard_max,
                          scheme=cfg.scheme, solver=cfg.solver, nonlinear=cfg.nonlinear)
    return Stepper(domain, grid, op, step_cfg, cfg.split)


def run_simulation(cfg: RunConfig, out_dir=None, log=print):
    """Run a configured simulation, writing the CSV series and snapshots."""
    from .diagnostics import Diagnostics
    from .integrator import run

    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stepper = build_stepper(cfg)
    domain, grid, op = stepper.domain, stepper.grid, stepper.op
    diag = Diagnostics(domain, op, l=cfg.l, nu=cfg.nu, diag_order=cfg.diag_order)
    meta = {"gamma": cfg.gamma, "l": cfg.l, "nu": cfg.nu, "seed": cfg.seed}

    def hook(state, fs):
        name = out / f"snapshot_t{state.t:.6f}.bin"
        write_snapshot(name, state, domain, grid, meta)
        log(f"snapshot {name}")

    initial = initial_state(domain, grid, cfg.init, cfg.amplitude, cfg.seed)
    result = run(initial, stepper, diag, cfg.cadence, cfg.snapshot_times, hook)
    csv_path = out / cfg.csv_name
    write_series(csv_path, result.records)
    log(f"wrote {len(result.records)} records to {csv_path}")
    log(f"max ||E||^4 = {max(r.e_field_quartic for r in result.records):.6e}")
    return result, csv_path


# -- subcommands ---------------------------------------------------------------------------

def _load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    run_simulation(cfg, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import run_suite

    cfg = _load_config(args.config) if args.config else validate_config(RunConfig())
    results = run_suite(cfg, quick=args.quick)
    failed = 0
    for r in results:
        print(r.line())
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} properties passed (PCG64 seed {cfg.seed})")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_fit_decay(args) -> int:
    from .diagnostics import fit_decay

    series = read_series(args.csv)
    if args.column not in series:
        raise ConfigError(f"column {args.column!r} not in {args.csv}", key="column")
    t, e = series["t"], series[args.column]
    window = (args.t0 if args.t0 is not None else float(t.min()), args.t1 if args.t1 is not None else float(t.max()))
    fit = fit_decay(np.stack([t, e], axis=1), args.p, args.p_value, window)
    print(f"delta = {fit.delta:.10g}")
    print(f"p = {fit.p_exponent:.10g}")
    print(f"r_squared = {fit.r_squared:.10g}")
    print(f"window = [{fit.window[0]:.6g}, {fit.window[1]:.6g}]")
    return EXIT_OK


def cmd_inspect(args) -> int:
    header, f = read_snapshot(args.snapshot)
    for k in sorted(header):
        if k == "mask":
            print(f"cells = {len(header['mask'])}")
        else:
            print(f"{k} = {header[k]}")
    grid = VelocityGrid(header["n_v"], header["v_max"])
    coef = Projector(grid).coefficients(f)
    vol = float(np.prod(header["h"]))
    names = ("a_plus", "a_minus", "b_1", "b_2", "b_3", "c")
    for k, name in enumerate(names):
        col = coef[:, k]
        print(f"{name}: max|.| = {np.max(np.abs(col)) if col.size else 0.0:.6e}  integral = {np.sum(col) * vol:.6e}")
    print(f"max|f| = {np.max(np.abs(f)) if f.size else 0.0:.6e}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description="Two-species Vlasov-Poisson-Landau simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a simulation")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("verify", help="operator property suites")
    v.add_argument("config", nargs="?")
    v.add_argument("--quick", action="store_true", help="skip the refinement comparisons")
    v.set_defaults(func=cmd_verify)
    fd = sub.add_parser("fit-decay", help="fit log E = c - delta t^p to a series")
    fd.add_argument("csv")
    fd.add_argument("--p", choices=("fixed", "free"), default="fixed")
    fd.add_argument("--p-value", type=float, default=1.0)
    fd.add_argument("--column", default="e_plain")
    fd.add_argument("--t0", type=float, default=None)
    fd.add_argument("--t1", type=float, default=None)
    fd.set_defaults(func=cmd_fit_decay)
    ins = sub.add_parser("inspect", help="print snapshot metadata and moments")
    ins.add_argument("snapshot")
    ins.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, TableError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
