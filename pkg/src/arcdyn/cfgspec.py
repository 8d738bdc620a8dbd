"""Config schema: the full set of known keys with their value types, plus
the shipped default scenario."""

from __future__ import annotations

from importlib import resources

CONFIG_SPEC: dict[str, type] = {
    "model.g0": float,
    "model.gx": float,
    "model.kappa": float,
    "model.alpha": int,
    "model.K": float,
    "model.LW": float,
    "model.Lx": float,
    "model.sigma": float,
    "model.JL": float,
    "model.c0": float,
    "model.c1": float,
    "model.phi_rel": float,
    "grid.n_points": int,
    "grid.dR": float,
    "run.mode": str,
    "run.scheme": str,
    "run.dt_factor": float,
    "run.krylov_cap": int,
    "run.snapshots": list,
    "run.snapshot_range": list,
    "tol.eps_den": float,
    "tol.tol_prop": float,
    "tol.tol_nac": float,
    "tol.boundary": float,
    "sweep.JL": list,
    "sweep.kappa": list,
    "sweep.workers": int,
    "perturb.JL_series": list,
    "perturb.wbt_read": float,
    "perturb.quad_steps": int,
    "figures.emit": bool,
}

DEFAULTS_TEXT = (resources.files("arcdyn") / "data" / "defaults.cfg") \
    .read_text(encoding="utf-8")
