"""Convergence-study driver: INI configuration, refinement loop, CSV/VTK output."""
from __future__ import annotations

import configparser
import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cases import example_case
from .fields import ERROR_COLUMNS, compute_errors
from .forms import assemble_linear_blocks, assemble_rhs, build_spaces, dirichlet_values
from .mesh import DARCY, STOKES, build_interface_glue, build_staggered, generate_primal
from .solver import PicardSettings, solve_coupled
from .verify import fit_rate

log = logging.getLogger(__name__)

CSV_HEADER = ("level", "h", "ndof_sigma", "ndof_uS", "ndof_pS", "ndof_uD", "ndof_pD",
              *ERROR_COLUMNS, "picard_iters", "seconds")
# error columns measured on the Darcy mesh; their rates use the Darcy grid spacing
DARCY_COLUMNS = ("e_uD_L2", "e_pD_L2", "e_pD_ZD", "e_super_pD")


class ConfigError(ValueError):
    pass


class LevelError(RuntimeError):
    def __init__(self, level, nx, cause):
        super().__init__(f"level {level} (nx={nx}): {type(cause).__name__}: {cause}")
        self.level, self.nx, self.cause = level, nx, cause


@dataclass(frozen=True)
class RunConfig:
    case: str = "example1"
    levels: tuple = (4, 8, 16, 32)
    k: int = 1
    stokes_kind: str = "triangular"
    darcy_kind: str = "triangular"
    distortion: float = 0.0
    seed: int = 0
    nonmatching: bool = False
    darcy_offset: int = 1
    point_rule: str = "centroid"
    picard: PicardSettings = PicardSettings()
    G: float | None = None
    output: str | None = None
    vtk: bool = False
    timing: bool = False
    windows: dict = field(default_factory=dict)

    def __post_init__(self):
        lv = tuple(int(v) for v in self.levels)
        if not lv or any(b <= a for a, b in zip(lv, lv[1:])) or lv[0] < 1:
            raise ConfigError("levels must be positive and strictly increasing")
        if self.k not in (1, 2, 3):
            raise ConfigError("k must be 1, 2 or 3")
        object.__setattr__(self, "levels", lv)


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def load_config(path) -> RunConfig:
    """Read an INI file with sections [run], [mesh], [picard], [physics], [output], [windows]."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep column names case-sensitive
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path}")
    return config_from_parser(cp, base=Path(path).parent)


def config_from_parser(cp: configparser.ConfigParser, base=Path(".")) -> RunConfig:
    known = {"run", "mesh", "picard", "physics", "output", "windows"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    run = cp["run"] if cp.has_section("run") else {}
    mesh = cp["mesh"] if cp.has_section("mesh") else {}
    pic = cp["picard"] if cp.has_section("picard") else {}
    phys = cp["physics"] if cp.has_section("physics") else {}
    out = cp["output"] if cp.has_section("output") else {}
    try:
        picard = PicardSettings(
            tol_rel=float(pic.get("tol_rel", 1e-10)), tol_res=float(pic.get("tol_res", 1e-10)),
            max_iters=int(pic.get("max_iters", 50)), initial_guess=pic.get("initial_guess", "zero"),
            damping=float(pic.get("damping", 1.0)), seed=int(pic.get("seed", 0)),
            linear=pic.get("linear", "direct"))
        kind = mesh.get("kind", "triangular")
        outdir = out.get("directory")
        if outdir is not None and not Path(outdir).is_absolute():
            outdir = str(base / outdir)
        windows = {}
        if cp.has_section("windows"):
            for col, text in cp["windows"].items():
                if col not in ERROR_COLUMNS:
                    raise ConfigError(f"unknown window column {col}")
                lo, hi = _floats(text)
                windows[col] = (lo, hi)
        return RunConfig(
            case=run.get("case", "example1"),
            levels=tuple(int(v) for v in _floats(run.get("levels", "4 8 16 32"))),
            k=int(run.get("k", 1)),
            stokes_kind=mesh.get("stokes_kind", kind), darcy_kind=mesh.get("darcy_kind", kind),
            distortion=float(mesh.get("distortion", 0.0)), seed=int(mesh.get("seed", 0)),
            nonmatching=_bool(mesh.get("nonmatching", "false")),
            darcy_offset=int(mesh.get("darcy_offset", 1)),
            point_rule=mesh.get("point_rule", "centroid"),
            picard=picard,
            G=float(phys["G"]) if "G" in phys else None,
            output=outdir, vtk=_bool(out.get("vtk", "false")), timing=_bool(out.get("timing", "false")),
            windows=windows)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# -- one level ---------------------------------------------------------------------

def _grid(box, nx):
    (x0, x1), _ = box
    return (x1 - x0) / nx


def build_problem(config: RunConfig, nx: int):
    """Meshes, glue, spaces and assembled system of one refinement level."""
    case = example_case(config.case, G=config.G if config.G is not None else 1.0)
    nd = nx + config.darcy_offset if config.nonmatching else nx
    dist = config.distortion
    pS = generate_primal(config.stokes_kind, nx, nx, domain=case.stokes_box, distortion=dist,
                         seed=config.seed, subdomain=STOKES, interface_side=case.stokes_interface_side)
    pD = generate_primal(config.darcy_kind, nd, nd, domain=case.darcy_box, distortion=dist,
                         seed=config.seed + 1, subdomain=DARCY, interface_side=case.darcy_interface_side)
    mS = build_staggered(pS, config.point_rule)
    mD = build_staggered(pD, config.point_rule)
    glue = build_interface_glue(mS, mD)
    spaces = build_spaces(mS, mD, config.k, case.darcy_dirichlet_filter)
    system = assemble_linear_blocks(mS, mD, spaces, case.params, glue)
    return case, (mS, mD), glue, spaces, system, (_grid(case.stokes_box, nx), _grid(case.darcy_box, nd))


def solve_level(config: RunConfig, level: int, nx: int):
    """Solve one level; returns (row dict, fields, meshes, trace)."""
    t0 = time.perf_counter()
    try:
        case, meshes, glue, spaces, system, (hS, hD) = build_problem(config, nx)
        rhs = assemble_rhs(case, spaces, glue)
        lift = dirichlet_values(spaces, case)
        fields, _, trace = solve_coupled(system, rhs, lift, config.picard)
        errors = compute_errors(fields, case) if case.has_exact else {c: float("nan") for c in ERROR_COLUMNS}
    except Exception as exc:  # reported with level context by the caller
        raise LevelError(level, nx, exc) from exc
    seconds = time.perf_counter() - t0
    log.info("level %d nx=%d: %d Picard iterations, %.2f s", level, nx, trace.iterations, seconds)
    sz = spaces.sizes
    row = {"level": level, "h": hS, "ndof_sigma": sz["sigma"], "ndof_uS": sz["uS"], "ndof_pS": sz["pS"],
           "ndof_uD": sz["uD"], "ndof_pD": sz["pD"], **errors, "picard_iters": trace.iterations,
           "seconds": seconds if config.timing else 0.0, "_h_darcy": hD}
    return row, fields, meshes, trace


def _level_task(args):
    config, level, nx = args
    row, fields, meshes, _ = solve_level(config, level, nx)
    if config.vtk and config.output:
        emit_vtk(fields, meshes, Path(config.output) / f"level{level}.vtk")
    return row


# -- reports -----------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    config: RunConfig
    rows: list
    rates: dict
    failures: list = field(default_factory=list)

    def window_results(self):
        """{column: (slope, lo, hi, passed)} for the configured windows."""
        out = {}
        for col, (lo, hi) in self.config.windows.items():
            fit = self.rates.get(col)
            slope = fit.slope if fit is not None else float("nan")
            out[col] = (slope, lo, hi, fit is not None and fit.within(lo, hi))
        return out

    @property
    def passed(self):
        return not self.failures and all(r[3] for r in self.window_results().values())

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_HEADER])
        return buf.getvalue()

    def rate_text(self):
        lines = ["column,slope,last_ratio"]
        for col in ERROR_COLUMNS:
            fit = self.rates.get(col)
            if fit is not None:
                lines.append(f"{col},{fit.slope:.4f},{fit.last_ratio:.4f}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def compute_rates(rows):
    rates = {}
    if len(rows) < 3:
        return rates
    for col in ERROR_COLUMNS:
        hcol = "_h_darcy" if col in DARCY_COLUMNS else "h"
        pts = [(r[hcol], r[col]) for r in rows]
        if any(not np.isfinite(e) for _, e in pts):
            continue
        try:
            rates[col] = fit_rate(pts)
        except ValueError as exc:
            log.warning("no rate for %s: %s", col, exc)
    return rates


def run_convergence(config: RunConfig, parallel=False) -> ConvergenceReport:
    """Solve every level, fit rates, and write CSV / rate summary / VTK when an output dir is set."""
    tasks = [(config, i, nx) for i, nx in enumerate(config.levels)]
    rows, failures = [], []
    if config.output:
        Path(config.output).mkdir(parents=True, exist_ok=True)
    if parallel and len(tasks) > 1:
        with ProcessPoolExecutor() as pool:
            futures = [pool.submit(_level_task, t) for t in tasks]
            for fut in futures:
                try:
                    rows.append(fut.result())
                except LevelError as exc:
                    failures.append(str(exc))
    else:
        for t in tasks:
            try:
                rows.append(_level_task(t))
            except LevelError as exc:
                log.error("%s", exc)
                failures.append(str(exc))
    rows.sort(key=lambda r: -r["h"])
    report = ConvergenceReport(config, rows, compute_rates(rows), failures)
    if config.output:
        out = Path(config.output)
        (out / "convergence.csv").write_text(report.csv_text())
        (out / "rates.csv").write_text(report.rate_text())
    return report


# -- VTK -----------------------------------------------------------------------------

def _cell_average(f, mesh, ncomp):
    from .forms import _volume_quad

    tri = np.arange(mesh.n_tris)
    xi, wj = _volume_quad(mesh, 2 * f.k)
    v = f.values_ref(tri, xi)
    area = wj.sum(axis=1)
    if v.ndim == 4:  # (1, n, q, 2)
        return np.einsum("nq,nqd->nd", wj, v[0]) / area[:, None]
    avg = np.einsum("nq,cnq->nc", wj, v) / area[:, None]
    return avg if ncomp > 1 else avg[:, 0]


def emit_vtk(fields, meshes, path):
    """Legacy ASCII unstructured grid of both subdomains with per-triangle averages."""
    mS, mD = meshes
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nS, nD = mS.n_tris, mD.n_tris
    pts = np.vstack([mS.points, mD.points])
    tris = np.vstack([mS.tris, mD.tris + len(mS.points)])
    zero2 = np.zeros((nD, 2))
    uS = np.vstack([_cell_average(fields["uS"], mS, 2), zero2])
    uD = np.vstack([np.zeros((nS, 2)), _cell_average(fields["uD"], mD, 1)])
    pS = np.concatenate([_cell_average(fields["pS"], mS, 1), np.zeros(nD)])
    pD = np.concatenate([np.zeros(nS), _cell_average(fields["pD"], mD, 1)])
    sub = np.concatenate([np.zeros(nS, dtype=int), np.ones(nD, dtype=int)])

    def g(v):
        return format(float(v), ".12g")

    out = ["# vtk DataFile Version 3.0", "staggered DG Stokes/Darcy-Forchheimer solution", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    out += [f"{g(x)} {g(y)} 0" for x, y in pts]
    out.append(f"CELLS {len(tris)} {4 * len(tris)}")
    out += [f"3 {a} {b} {c}" for a, b, c in tris]
    out.append(f"CELL_TYPES {len(tris)}")
    out += ["5"] * len(tris)
    out.append(f"CELL_DATA {len(tris)}")
    for name, vec in (("u_S", uS), ("u_D", uD)):
        out.append(f"VECTORS {name} double")
        out += [f"{g(a)} {g(b)} 0" for a, b in vec]
    for name, sc in (("p_S", pS), ("p_D", pD)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [g(v) for v in sc]
    out += ["SCALARS subdomain int 1", "LOOKUP_TABLE default"]
    out += [str(v) for v in sub]
    try:
        path.write_text("\n".join(out) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def with_levels(config: RunConfig, levels) -> RunConfig:
    return replace(config, levels=tuple(levels))
