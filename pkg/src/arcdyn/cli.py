"""Configuration-driven runner.

Config files are flat ``key = value`` lines with dotted namespaces
(``model.gx = 10.0``); values are parsed as JSON scalars or lists, ``#``
starts a comment. Every key must be known; ``--set key=value`` overrides
individual entries. All emitted CSV files are RFC-4180 (CRLF) with
``#``-prefixed header comment lines carrying units and a schema version,
and a run writes a JSON manifest with content hashes so reruns can be
verified bit for bit.

Exit codes: 0 ok, 2 config error, 3 numerical error, 4 leakage/validation
error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import os
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .efactor import marginal_density, overlap_field
from .errors import ArcdynError, ConfigError
from .interference import (adiabatic_spinor, assemble_total, cross_density,
                           nac_region_mass, reduced_density_matrix)
from .model import (GridSpec, ModelParams, assemble_hamiltonian, compute_nac,
                    diagonalize_bo, energy_width)
from .perturb import perturbation_series
from .propagator import run_adiabatic, run_component
from .cfgspec import CONFIG_SPEC, DEFAULTS_TEXT

SCHEMA_VERSION = 1
MODES = ("full", "adiabatic", "sweep", "perturb")
CRLF = "\r\n"


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# config handling

def _parse_value(key: str, raw: str, lineno: int):
    kind = CONFIG_SPEC[key]
    if kind is str:
        return raw.strip()
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(
            f"line {lineno}: cannot parse value for '{key}': {raw!r}")
    if kind is float and isinstance(val, (int, float)) \
            and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if kind is bool and isinstance(val, bool):
        return val
    if kind is list and isinstance(val, list):
        return [float(v) for v in val]
    raise ConfigError(
        f"line {lineno}: value for '{key}' must be {kind.__name__}, "
        f"got {raw!r}")


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {line.rstrip()!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in CONFIG_SPEC:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        out[key] = _parse_value(key, raw, lineno)
    return out


def load_config(path: str | None, overrides=()) -> dict:
    cfg = parse_config_text(DEFAULTS_TEXT)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}")
        cfg.update(parse_config_text(text))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in CONFIG_SPEC:
            raise ConfigError(f"--set: unknown key '{key}'")
        cfg[key] = _parse_value(key, raw, 0)
    return cfg


@dataclass
class RunConfig:
    """Materialized configuration: model, grid, schedule and tolerances."""

    params: ModelParams
    grid: GridSpec
    mode: str
    scheme: str
    dt_factor: float
    krylov_cap: int
    snapshots: np.ndarray
    eps_den: float
    tol_prop: float
    tol_nac: float
    boundary_tol: float
    sweep_jl: list
    sweep_kappa: list
    sweep_workers: int
    perturb_series: list
    perturb_wbt_read: float
    perturb_quad_steps: int
    emit_plots: bool
    raw: dict

    @classmethod
    def from_dict(cls, cfg: dict) -> "RunConfig":
        try:
            c1 = cfg["model.c1"] * complex(
                math.cos(cfg["model.phi_rel"]), math.sin(cfg["model.phi_rel"]))
            params = ModelParams(
                g0=cfg["model.g0"], gx=cfg["model.gx"],
                kappa=cfg["model.kappa"], alpha=int(cfg["model.alpha"]),
                K=cfg["model.K"], LW=cfg["model.LW"], Lx=cfg["model.Lx"],
                sigma=cfg["model.sigma"], JL=cfg["model.JL"],
                c0=complex(cfg["model.c0"]), c1=c1)
            grid = GridSpec(n_points=cfg["grid.n_points"], dR=cfg["grid.dR"])
        except (ValueError, ArcdynError) as exc:
            raise ConfigError(f"invalid model/grid values: {exc}")
        if cfg["run.snapshots"] and cfg["run.snapshot_range"]:
            raise ConfigError(
                "set either run.snapshots or run.snapshot_range, not both")
        if cfg["run.snapshots"]:
            snaps = np.asarray(cfg["run.snapshots"], dtype=float)
        elif cfg["run.snapshot_range"]:
            rng = cfg["run.snapshot_range"]
            if len(rng) != 3:
                raise ConfigError(
                    "run.snapshot_range must be [start, stop, step]")
            start, stop, step = rng
            if step <= 0 or stop < start:
                raise ConfigError("run.snapshot_range needs step > 0 and "
                                  "stop >= start")
            count = int(round((stop - start) / step))
            snaps = start + step * np.arange(count + 1)
        else:
            raise ConfigError("no snapshot schedule configured")
        if snaps.size == 0 or snaps[0] < 0 or np.any(np.diff(snaps) <= 0):
            raise ConfigError("snapshot schedule must be non-negative and "
                              "strictly increasing")
        mode = cfg["run.mode"]
        if mode not in MODES:
            raise ConfigError(f"run.mode must be one of {MODES}")
        scheme = cfg["run.scheme"]
        if scheme not in ("lanczos", "chebyshev", "crank_nicolson"):
            raise ConfigError(f"unknown run.scheme '{scheme}'")
        return cls(
            params=params, grid=grid, mode=mode, scheme=scheme,
            dt_factor=cfg["run.dt_factor"],
            krylov_cap=int(cfg["run.krylov_cap"]), snapshots=snaps,
            eps_den=cfg["tol.eps_den"], tol_prop=cfg["tol.tol_prop"],
            tol_nac=cfg["tol.tol_nac"], boundary_tol=cfg["tol.boundary"],
            sweep_jl=cfg["sweep.JL"], sweep_kappa=cfg["sweep.kappa"],
            sweep_workers=int(cfg["sweep.workers"]),
            perturb_series=cfg["perturb.JL_series"],
            perturb_wbt_read=cfg["perturb.wbt_read"],
            perturb_quad_steps=int(cfg["perturb.quad_steps"]),
            emit_plots=cfg["figures.emit"], raw=dict(cfg))


# ---------------------------------------------------------------------------
# deterministic writers

def _write_lines(path: str, comments: list[str], header: str,
                 rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}{CRLF}")
        fh.write(header + CRLF)
        for row in rows:
            fh.write(",".join(row) + CRLF)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _snapshot_rows(R, n0, n1, n01, n_total, ov, valid):
    for i in range(R.size):
        yield (_fmt(R[i]), _fmt(n0[i]), _fmt(n1[i]), _fmt(n01[i].real),
               _fmt(n01[i].imag), _fmt(n_total[i]), _fmt(abs(ov[i])),
               str(int(valid[i])))


# ---------------------------------------------------------------------------
# run pipelines

def _emit_bo_profile(out_dir: str, rc: RunConfig, bo) -> str:
    nac = compute_nac(rc.params, rc.grid, bo, tol_nac=rc.tol_nac)
    path = os.path.join(out_dir, "profile_bo.csv")
    R = rc.grid.coords()
    rows = ((_fmt(R[i]), _fmt(bo.eps0[i]), _fmt(bo.eps1[i]), _fmt(nac[i]))
            for i in range(R.size))
    _write_lines(path, [f"arcdyn bo profile v{SCHEMA_VERSION}",
                        "units: R [sigma]; eps [g0]; nac [1/sigma]"],
                 "R,eps0,eps1,nac", rows)
    return path


def _rho_rows(wbts, rhos):
    for wbt, rho in zip(wbts, rhos):
        cells = [_fmt(wbt)]
        for l in range(2):
            for m in range(2):
                cells.append(_fmt(rho[l, m].real))
                cells.append(_fmt(rho[l, m].imag))
        yield tuple(cells)


def run_single(rc: RunConfig, out_dir: str) -> dict:
    """Execute one full or adiabatic run and emit its artifact set.

    Returns derived summary values (omega_B, R0, interference weight at the
    final snapshot, peak overlap at R0)."""
    os.makedirs(out_dir, exist_ok=True)
    t_start = time.monotonic()
    params, grid = rc.params, rc.grid
    bo = diagonalize_bo(params, grid)
    files = {}
    files["profile_bo.csv"] = _emit_bo_profile(out_dir, rc, bo)
    h = assemble_hamiltonian(params, grid)
    omega_b = energy_width(h)
    kw = dict(scheme=rc.scheme, dt_factor=rc.dt_factor, tol=rc.tol_prop,
              krylov_cap=rc.krylov_cap, boundary_tol=rc.boundary_tol,
              bo=bo, omega_b=omega_b)
    if rc.mode == "adiabatic":
        rec0 = run_adiabatic(0, params, grid, rc.snapshots, **kw)
        rec1 = run_adiabatic(1, params, grid, rc.snapshots, **kw)
        fields0 = [adiabatic_spinor(f, bo) for f in rec0.fields]
        fields1 = [adiabatic_spinor(f, bo) for f in rec1.fields]
    else:
        rec0 = run_component(0, params, grid, rc.snapshots, h=h, **kw)
        rec1 = run_component(1, params, grid, rc.snapshots, h=h, **kw)
        fields0 = rec0.fields
        fields1 = rec1.fields
    R = grid.coords()
    snap_meta = []
    overlaps = []
    n01s = []
    rhos = []
    for i, wbt in enumerate(rc.snapshots):
        n0 = marginal_density(fields0[i])
        n1 = marginal_density(fields1[i])
        n01 = cross_density(fields0[i], fields1[i])
        dec = assemble_total(n0, n1, n01, params.c0, params.c1, grid)
        ov, valid = overlap_field(fields0[i], fields1[i], rc.eps_den)
        overlaps.append((ov, valid))
        n01s.append(n01)
        name = f"snapshot_{i:03d}.csv"
        path = os.path.join(out_dir, name)
        _write_lines(
            path,
            [f"arcdyn snapshot profile v{SCHEMA_VERSION}",
             f"wbt = {_fmt(wbt)}; t = {_fmt(wbt / omega_b)} [1/g0]",
             "units: R [sigma]; densities [1/sigma]; overlap dimensionless"],
            "R,n0,n1,re_n01,im_n01,n_total,abs_overlap,validity",
            _snapshot_rows(R, n0, n1, n01, dec.n_total, ov, valid))
        files[name] = path
        snap_meta.append({"file": name, "wbt": float(wbt),
                          "weight": dec.weight})
        psi_sup = fields0[i].copy()
        psi_sup.values = (params.c0 * fields0[i].values
                          + params.c1 * fields1[i].values)
        rhos.append(reduced_density_matrix(psi_sup, bo).rho)
    # readout coordinate: argmax of |overlap| over all snapshots and R
    best = (0.0, (grid.n_points - 1) // 2)
    for ov, valid in overlaps:
        mag = np.where(valid, np.abs(ov), 0.0)
        j = int(np.argmax(mag))
        if mag[j] > best[0]:
            best = (float(mag[j]), j)
    r0_index = best[1]
    r0 = float(R[r0_index])
    ts_rows = ((_fmt(wbt), _fmt(abs(overlaps[i][0][r0_index])),
                _fmt(abs(n01s[i][r0_index])))
               for i, wbt in enumerate(rc.snapshots))
    path = os.path.join(out_dir, "timeseries.csv")
    _write_lines(path,
                 [f"arcdyn growth series v{SCHEMA_VERSION}",
                  f"R0 = {_fmt(r0)} [sigma] (argmax |overlap| over run)",
                  "units: wbt dimensionless; magnitudes dimensionless"],
                 "wbt,abs_overlap_r0,abs_n01_r0", ts_rows)
    files["timeseries.csv"] = path
    path = os.path.join(out_dir, "rho_e.csv")
    _write_lines(path,
                 [f"arcdyn reduced electronic density matrix v{SCHEMA_VERSION}",
                  "BO basis, smooth sign convention"],
                 "wbt,re_rho00,im_rho00,re_rho01,im_rho01,"
                 "re_rho10,im_rho10,re_rho11,im_rho11",
                 _rho_rows(rc.snapshots, rhos))
    files["rho_e.csv"] = path
    nac_mass = nac_region_mass(n01s[-1], bo.nac)
    derived = {
        "omega_b": float(omega_b),
        "r0": r0,
        "r0_index": r0_index,
        "max_abs_overlap_r0": best[0],
        "weight_final": snap_meta[-1]["weight"],
        "nac_mass_final": nac_mass,
        "total_steps": int(rec0.steps + rec1.steps),
    }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "mode": rc.mode,
        "config": rc.raw,
        "derived": derived,
        "snapshots": snap_meta,
        "files": {name: _sha256(p) for name, p in sorted(files.items())},
        "timing": {"wall_s": time.monotonic() - t_start},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return derived


def _sweep_cell(args):
    cfg_raw, jl, kappa, cell_dir = args
    cfg = dict(cfg_raw)
    cfg["model.JL"] = jl
    cfg["model.kappa"] = kappa
    cfg["run.mode"] = "full"
    rc = RunConfig.from_dict(cfg)
    return run_single(rc, cell_dir)


def run_sweep(rc: RunConfig, out_dir: str) -> list[dict]:
    """One full run per (JL, kappa) grid point; failed cells are recorded
    and do not abort the sweep."""
    jls = rc.sweep_jl or [rc.params.JL]
    kappas = rc.sweep_kappa or [rc.params.kappa]
    if not rc.sweep_jl and not rc.sweep_kappa:
        raise ConfigError("sweep mode needs at least one non-empty axis "
                          "(sweep.JL or sweep.kappa)")
    os.makedirs(out_dir, exist_ok=True)
    cells = [(jl, kp) for jl in jls for kp in kappas]
    args = []
    for jl, kp in cells:
        cell_dir = os.path.join(out_dir, "cells",
                                f"JL_{_fmt(jl)}__kappa_{_fmt(kp)}")
        args.append((rc.raw, jl, kp, cell_dir))
    results = [None] * len(cells)
    if rc.sweep_workers > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=rc.sweep_workers) as pool:
            futs = {pool.submit(_sweep_cell, a): i
                    for i, a in enumerate(args)}
            for fut, i in futs.items():
                try:
                    results[i] = ("ok", fut.result())
                except ArcdynError as exc:
                    results[i] = (f"error:{type(exc).__name__}", None)
    else:
        for i, a in enumerate(args):
            try:
                results[i] = ("ok", _sweep_cell(a))
            except ArcdynError as exc:
                results[i] = (f"error:{type(exc).__name__}", None)
    rows = []
    summary = []
    for (jl, kp), (status, derived) in zip(cells, results):
        if derived is None:
            rows.append((_fmt(jl), _fmt(kp), "nan", "nan", "nan", "nan",
                         status))
            summary.append({"JL": jl, "kappa": kp, "status": status})
        else:
            rows.append((_fmt(jl), _fmt(kp), _fmt(derived["omega_b"]),
                         _fmt(derived["r0"]),
                         _fmt(derived["max_abs_overlap_r0"]),
                         _fmt(derived["weight_final"]), status))
            summary.append({"JL": jl, "kappa": kp, "status": status,
                            **derived})
    path = os.path.join(out_dir, "sweep_summary.csv")
    _write_lines(path,
                 [f"arcdyn sweep summary v{SCHEMA_VERSION}"],
                 "JL,kappa,omega_B,R0,max_abs_overlap_r0,W_end,status",
                 rows)
    return summary


def run_perturb(rc: RunConfig, out_dir: str) -> dict:
    """Perturbation-order study over the configured JL series."""
    os.makedirs(out_dir, exist_ok=True)
    series = perturbation_series(
        rc.params, rc.grid, rc.perturb_series, wbt_read=rc.perturb_wbt_read,
        quad_steps=rc.perturb_quad_steps, scheme=rc.scheme, tol=rc.tol_prop,
        eps_den=rc.eps_den)
    comp = series.comparison
    rows = []
    for (jl, ex, pr, res), dn, det in zip(comp.table, comp.residual_norm,
                                          series.details):
        lam = jl / rc.params.g0
        rows.append((_fmt(jl), _fmt(lam), _fmt(ex), _fmt(pr), _fmt(res),
                     _fmt(dn), _fmt(det.quad_rel_error)))
    path = os.path.join(out_dir, "perturb_series.csv")
    _write_lines(
        path,
        [f"arcdyn perturbation series v{SCHEMA_VERSION}",
         f"readout wbt = {_fmt(series.wbt_read)}; "
         f"omega_B_ref = {_fmt(series.omega_b_ref)}; "
         f"R0 = {_fmt(comp.r0)}"],
        "JL,lambda,abs_exact_r0,abs_pred_r0,residual_r0,residual_l2,"
        "quad_rel_error", rows)
    summary = {
        "slope": comp.slope,
        "slope_stderr": comp.slope_stderr,
        "slope_norm": comp.slope_norm,
        "per_r_slope_median": comp.per_r_slope_median,
        "r0": comp.r0,
        "wbt_read": series.wbt_read,
        "t_read": series.t_read,
        "omega_b_ref": series.omega_b_ref,
        "jl_values": [float(j) for j in comp.jl_values],
        "residual_at_r0": [float(r) for r in comp.residual_at_r0],
        "residual_norm": [float(r) for r in comp.residual_norm],
    }
    with open(os.path.join(out_dir, "slope_summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------------------
# optional hand-off to the figure renderer

def _find_renderer():
    env = os.environ.get("ARCDYN_RENDER")
    if env:
        return env.split()
    node = shutil.which("node")
    if node is None:
        return None
    probe = os.getcwd()
    for _ in range(6):
        cand = os.path.join(probe, "frontend", "dist", "render.js")
        if os.path.exists(cand):
            return [node, cand]
        parent = os.path.dirname(probe)
        if parent == probe:
            break
        probe = parent
    return None


def emit_plots(out_dir: str, mode: str) -> None:
    """Write plot specs for the rendered layouts and shell out to the
    figure renderer if it is installed; missing renderer is tolerated."""
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    specs = []
    if mode in ("full", "adiabatic"):
        manifest = json.load(open(os.path.join(out_dir, "manifest.json"),
                                  encoding="utf-8"))
        snaps = manifest["snapshots"]
        want = []
        for target in (5.0, 10.0, 20.0):
            if snaps:
                best = min(snaps, key=lambda s: abs(s["wbt"] - target))
                if best["file"] not in want:
                    want.append(best["file"])
        specs = [
            ("landscape", {"layout": "landscape",
                           "inputs": [os.path.join(out_dir, "profile_bo.csv")],
                           "output": os.path.join(fig_dir, "landscape.svg")}),
            ("growth", {"layout": "growth",
                        "inputs": [os.path.join(out_dir, "timeseries.csv")],
                        "output": os.path.join(fig_dir, "growth.svg")}),
            ("snapshots", {"layout": "snapshots",
                           "inputs": [os.path.join(out_dir, f)
                                      for f in want],
                           "output": os.path.join(fig_dir, "snapshots.svg")}),
        ]
    renderer = _find_renderer()
    for name, spec in specs:
        spec_path = os.path.join(fig_dir, f"{name}.json")
        with open(spec_path, "w", encoding="utf-8") as fh:
            json.dump(spec, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if renderer is None:
            continue
        try:
            subprocess.run(renderer + ["--spec", spec_path], check=True,
                           capture_output=True, text=True)
        except (OSError, subprocess.CalledProcessError) as exc:
            print(f"warning: figure renderer failed for {name}: {exc}",
                  file=sys.stderr)
    if renderer is None:
        print("note: figure renderer not found; wrote plot specs only",
              file=sys.stderr)


# ---------------------------------------------------------------------------
# entry point

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="arcdyn",
        description="Coupled electron-nuclear dynamics on the double-arc "
                    "model")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute a configured run")
    runp.add_argument("--config", help="config file (defaults shipped with "
                      "the package apply first)")
    runp.add_argument("--set", action="append", default=[], metavar="K=V",
                      help="override a single config key")
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--mode", choices=MODES,
                      help="override run.mode from the config")
    runp.add_argument("--emit-plots", action="store_true",
                      help="render figures via the frontend if available")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.mode:
            cfg["run.mode"] = args.mode
        rc = RunConfig.from_dict(cfg)
        if args.emit_plots:
            rc = replace(rc, emit_plots=True)
        if rc.mode in ("full", "adiabatic"):
            derived = run_single(rc, args.out)
            print(f"omega_B = {derived['omega_b']:.6g}, "
                  f"R0 = {derived['r0']:.6g}, "
                  f"max|overlap|(R0) = {derived['max_abs_overlap_r0']:.6g}")
        elif rc.mode == "sweep":
            summary = run_sweep(rc, args.out)
            failed = [s for s in summary if s["status"] != "ok"]
            print(f"sweep: {len(summary) - len(failed)} ok, "
                  f"{len(failed)} failed")
        else:
            summary = run_perturb(rc, args.out)
            print(f"residual slope = {summary['slope']:.3f} "
                  f"+- {summary['slope_stderr']:.3f}")
        if rc.emit_plots:
            emit_plots(args.out, rc.mode)
    except ArcdynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
