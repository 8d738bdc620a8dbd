"""Small-mass-ratio expansion of the electronic-factor overlap.

On the grid the mass ratio enters only through the hopping amplitude, so
orders are counted in the dimensionless parameter lambda = JL / g0. The
zeroth-order factors evolve with pure BO phases and stay orthogonal; the
first-order overlap prediction is driven by the non-Hermitian
electron-nuclear correlation operator

    enc = mu U_K + mu U_Q - mu eps_NA,
    mu U_K = JL dR^2 (-i d/dR - A)^2,
    mu U_Q = 2 JL dR^2 p (-i d/dR - A),

acting on the zeroth-order factor, with p the nuclear momentum function of
the adiabatic reference evolution. All reported first-order quantities
already carry the lambda prefactor; the defect of the prediction against a
fully propagated overlap shrinks as lambda^2, which `compare_orders`
verifies by a log-log fit over a JL series.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .efactor import extract_factors, masked_derivative
from .errors import (InsufficientSeries, QuadratureError, ScheduleMismatch,
                     StencilError)
from .model import (BOData, GridSpec, ModelParams, assemble_hamiltonian,
                    diagonalize_bo, energy_width)
from .propagator import RunRecord, SpinorField, run_adiabatic, run_component

DEFAULT_QUAD_RTOL = 1e-6


@dataclass
class ZerothOrderFactors:
    """Zeroth-order EF data for one surface: the analytic BO-phase factors
    plus the adiabatic nuclear fields they pair with on a uniform mesh."""

    surface: int
    bo: BOData
    grid: GridSpec
    jl: float                  # hopping of the run that produced chi
    times: np.ndarray          # raw t, uniform, starting at 0
    chi: np.ndarray            # (nt, n) adiabatic nuclear fields
    validity: np.ndarray       # (n,) common density mask over the mesh

    @property
    def eps(self) -> np.ndarray:
        return self.bo.eps0 if self.surface == 0 else self.bo.eps1

    @property
    def evec(self) -> np.ndarray:
        return self.bo.evec0 if self.surface == 0 else self.bo.evec1

    def phi0(self, i: int) -> np.ndarray:
        """phi_k^(0)(t_i, R) = exp(-i eps_k(R) t_i) evec_k(R)."""
        return np.exp(-1j * self.eps * self.times[i])[:, None] * self.evec

    def a0(self, i: int) -> np.ndarray:
        """Vector potential of phi0 at mesh index i (central differences)."""
        ph = self.phi0(i)
        d, ok = masked_derivative(ph, np.ones(self.grid.n_points, bool),
                                  self.grid.dR)
        a = np.real(np.einsum("ij,ij->i", np.conj(ph), -1j * d))
        return np.where(ok, a, 0.0)

    def p0(self, i: int) -> np.ndarray:
        """Momentum function -i (d chi/dR)/chi of the adiabatic field
        (A = 0 for the real BO electronic factor in this pairing)."""
        chi = self.chi[i]
        d, ok = masked_derivative(chi, self.validity, self.grid.dR)
        p = np.zeros(self.grid.n_points, dtype=complex)
        m = ok & self.validity
        p[m] = -1j * d[m] / chi[m]
        return p


def zeroth_factors(k: int, bo: BOData, adiabatic_record: RunRecord,
                   eps_den: float = 1e-12) -> ZerothOrderFactors:
    """Collect zeroth-order data from a run_adiabatic record on a uniform
    mesh starting at t = 0."""
    rec = adiabatic_record
    if rec.kind != "adiabatic" or rec.surface != k:
        raise ScheduleMismatch(
            f"record is {rec.kind} on surface {rec.surface}, expected "
            f"adiabatic on {k}")
    times = rec.times
    if times[0] != 0.0:
        raise ScheduleMismatch("zeroth-order mesh must start at t = 0")
    steps = np.diff(times)
    if steps.size and np.max(np.abs(steps - steps[0])) > 1e-9 * times[-1]:
        raise ScheduleMismatch("zeroth-order mesh must be uniform")
    chi = np.stack([f.chi for f in rec.fields])
    dens = np.abs(chi) ** 2
    floor = eps_den * dens.max()
    validity = np.all(dens >= floor, axis=0)
    return ZerothOrderFactors(surface=k, bo=bo, grid=rec.grid,
                              jl=rec.params.JL, times=times, chi=chi,
                              validity=validity)


def apply_enc(phi_field: np.ndarray, p_field: np.ndarray,
              a_field: np.ndarray, grid: GridSpec, jl: float) -> np.ndarray:
    """Action of the electron-nuclear correlation term (with its lambda
    prefactor) on a spinor field: [mu U_K + mu U_Q - mu eps_NA] phi.

    Gradients are 3-point central stencils (one-sided at the ends); the
    mu/(2M) and mu/M prefactors are expressed through the hopping via
    JL = mu / (2 M dR^2). eps_NA is the pointwise U_K expectation, kept
    real, so the returned field is the full non-Hermitian correlation
    action used by the first-order overlap integrand.
    """
    if grid.n_points < 3:
        raise StencilError("ENC stencils need at least 3 grid points")
    full = np.ones(grid.n_points, dtype=bool)
    mu_2m = jl * grid.dR ** 2
    d1phi, _ = masked_derivative(phi_field, full, grid.dR)
    d1a, _ = masked_derivative(a_field, full, grid.dR)
    lap = np.empty_like(phi_field)
    lap[1:-1] = (phi_field[2:] - 2 * phi_field[1:-1] + phi_field[:-2]) \
        / grid.dR ** 2
    lap[0] = (phi_field[2] - 2 * phi_field[1] + phi_field[0]) / grid.dR ** 2
    lap[-1] = (phi_field[-3] - 2 * phi_field[-2] + phi_field[-1]) \
        / grid.dR ** 2
    uk = mu_2m * (-lap + 1j * d1a[:, None] * phi_field
                  + 2j * a_field[:, None] * d1phi
                  + (a_field ** 2)[:, None] * phi_field)
    eps_na = np.real(np.einsum("ij,ij->i", np.conj(phi_field), uk))
    uq = 2.0 * mu_2m * p_field[:, None] * (-1j * d1phi
                                           - a_field[:, None] * phi_field)
    return uk + uq - eps_na[:, None] * phi_field


@dataclass
class S1Result:
    """First-order overlap prediction field and its quadrature health."""

    s1: np.ndarray            # (n,) complex, carries the lambda prefactor
    validity: np.ndarray
    t: float
    quad_steps: int
    quad_rel_error: float


def s1_overlap(j: int, k: int, zeroth_j: ZerothOrderFactors,
               zeroth_k: ZerothOrderFactors, t: float | None = None,
               quad_steps: int | None = None,
               rel_tol: float = DEFAULT_QUAD_RTOL) -> S1Result:
    """First-order overlap prediction

        i * int_0^t dt' [ <phi_j0|(enc_j)^dag|phi_k0> - <phi_j0|enc_k|phi_k0> ]

    by composite trapezoid on the zeroth-order mesh. The embedded half-mesh
    estimate (Richardson, O(h^2) rule) must stay below rel_tol relative to
    the field maximum, else QuadratureError.
    """
    if j == k:
        raise ValueError("s1_overlap needs two distinct surfaces")
    if zeroth_j.surface != j or zeroth_k.surface != k:
        raise ScheduleMismatch("zeroth-order factors on wrong surfaces")
    if zeroth_j.times.shape != zeroth_k.times.shape or np.any(
            np.abs(zeroth_j.times - zeroth_k.times) > 1e-12):
        raise ScheduleMismatch("zeroth-order meshes differ")
    times = zeroth_j.times
    if t is None:
        m = len(times) - 1
    else:
        m = int(np.argmin(np.abs(times - t)))
        if abs(times[m] - t) > 1e-9 * max(times[-1], 1.0):
            raise ScheduleMismatch(f"t = {t} is not on the zeroth-order mesh")
    if quad_steps is not None and quad_steps != m:
        raise ScheduleMismatch(
            f"mesh provides {m} panels up to t, {quad_steps} requested")
    if m == 0:  # empty integral
        return S1Result(s1=np.zeros(zeroth_j.grid.n_points, dtype=complex),
                        validity=zeroth_j.validity & zeroth_k.validity,
                        t=0.0, quad_steps=0, quad_rel_error=0.0)
    if m < 2 or m % 2 == 1:
        raise QuadratureError("need an even panel count >= 2 for the "
                              "half-mesh error estimate")
    if zeroth_j.jl != zeroth_k.jl:
        raise ScheduleMismatch("zeroth-order factors from different JL runs")
    grid = zeroth_j.grid
    jl = zeroth_j.jl
    integ = np.empty((m + 1, grid.n_points), dtype=complex)
    for i in range(m + 1):
        ph_j = zeroth_j.phi0(i)
        ph_k = zeroth_k.phi0(i)
        w_j = apply_enc(ph_j, zeroth_j.p0(i), zeroth_j.a0(i), grid, jl)
        w_k = apply_enc(ph_k, zeroth_k.p0(i), zeroth_k.a0(i), grid, jl)
        integ[i] = (np.einsum("ij,ij->i", np.conj(w_j), ph_k)
                    - np.einsum("ij,ij->i", np.conj(ph_j), w_k))
    dt = times[1] - times[0]
    s1 = 1j * np.trapezoid(integ[: m + 1], dx=dt, axis=0)
    s1_half = 1j * np.trapezoid(integ[: m + 1 : 2], dx=2 * dt, axis=0)
    validity = zeroth_j.validity & zeroth_k.validity
    scale = float(np.max(np.abs(s1[validity]))) if validity.any() else 0.0
    rel = 0.0
    if scale > 0.0:
        rel = float(np.max(np.abs(s1 - s1_half)[validity]) / (3.0 * scale))
        if rel > rel_tol:
            raise QuadratureError(
                f"quadrature self-check {rel:.3e} above {rel_tol:.1e}; "
                f"refine the zeroth-order mesh")
    return S1Result(s1=s1, validity=validity, t=float(times[m]),
                    quad_steps=m, quad_rel_error=rel)


def aligned_exact_overlap(psi_j: SpinorField, psi_k: SpinorField,
                          bo: BOData, j: int = 0, k: int = 1,
                          eps_den: float = 1e-12):
    """Exact electronic-factor overlap with each factor phase-aligned to its
    zeroth-order reference exp(-i eps t) evec, so the complex value is
    directly comparable to the first-order prediction."""
    t = psi_j.time
    _, phi_j, v_j = extract_factors(psi_j, eps_den)
    _, phi_k, v_k = extract_factors(psi_k, eps_den)
    valid = v_j & v_k
    eps = (bo.eps0, bo.eps1)
    ev = (bo.evec0, bo.evec1)
    ph_j0 = np.exp(-1j * eps[j] * t)[:, None] * ev[j]
    ph_k0 = np.exp(-1j * eps[k] * t)[:, None] * ev[k]
    d_j = np.angle(np.einsum("ij,ij->i", np.conj(ph_j0), phi_j))
    d_k = np.angle(np.einsum("ij,ij->i", np.conj(ph_k0), phi_k))
    raw = np.einsum("ij,ij->i", np.conj(phi_j), phi_k)
    out = np.zeros_like(raw)
    out[valid] = np.exp(1j * (d_j - d_k))[valid] * raw[valid]
    return out, valid


@dataclass
class OrderComparison:
    """Log-log scaling of the first-order defect over a JL series."""

    jl_values: np.ndarray
    residual_norm: np.ndarray     # L2 over R per JL
    residual_at_r0: np.ndarray
    slope: float                  # fit on residual_at_r0
    slope_stderr: float
    slope_norm: float             # fit on residual_norm
    per_r_slope_median: float
    r0_index: int
    r0: float
    table: list                   # (jl, |exact|(R0), |pred|(R0), residual)


def _loglog_slope(x: np.ndarray, y: np.ndarray):
    lx, ly = np.log(x), np.log(y)
    a = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(a, ly, rcond=None)
    dof = len(x) - 2
    if dof > 0 and res.size:
        sigma2 = float(res[0]) / dof
        stderr = float(np.sqrt(sigma2 / np.sum((lx - lx.mean()) ** 2)))
    else:
        stderr = 0.0
    return float(coef[0]), stderr


def compare_orders(jl_values, exact_fields, pred_fields, validities,
                   grid: GridSpec) -> OrderComparison:
    """Compare exact overlaps against first-order predictions across a JL
    series and fit the residual's log-log slope (expected near 2)."""
    jl = np.asarray(jl_values, dtype=float)
    if len(exact_fields) != len(jl) or len(pred_fields) != len(jl):
        raise ValueError("one exact and one predicted field per JL")
    fit = jl > 0.0
    if np.count_nonzero(fit) < 3:
        raise InsufficientSeries(
            "need at least 3 positive JL values for the scaling fit")
    common = np.logical_and.reduce([np.asarray(v) for v in validities])
    ref = np.argmax(jl)
    r0_index = int(np.argmax(np.abs(exact_fields[ref]) * common))
    res_fields = [np.abs(e - p) for e, p in zip(exact_fields, pred_fields)]
    res_norm = np.array([np.sqrt(np.sum(r[common] ** 2) * grid.dR)
                         for r in res_fields])
    res_r0 = np.array([r[r0_index] for r in res_fields])
    slope, stderr = _loglog_slope(jl[fit], np.maximum(res_r0[fit], 1e-300))
    slope_norm, _ = _loglog_slope(jl[fit], np.maximum(res_norm[fit], 1e-300))
    stack = np.stack([r for r, f in zip(res_fields, fit) if f])
    point_ok = common & np.all(stack > 1e-14, axis=0)
    if point_ok.any():
        lx = np.log(jl[fit])
        ly = np.log(stack[:, point_ok])
        xc = lx - lx.mean()
        slopes = (xc[:, None] * (ly - ly.mean(axis=0))).sum(axis=0) \
            / np.sum(xc ** 2)
        per_r_median = float(np.median(slopes))
    else:
        per_r_median = float("nan")
    table = [(float(j), float(np.abs(e[r0_index])),
              float(np.abs(p[r0_index])), float(r[r0_index]))
             for j, e, p, r in zip(jl, exact_fields, pred_fields, res_fields)]
    return OrderComparison(
        jl_values=jl, residual_norm=res_norm, residual_at_r0=res_r0,
        slope=slope, slope_stderr=stderr, slope_norm=slope_norm,
        per_r_slope_median=per_r_median, r0_index=r0_index,
        r0=float(grid.coords()[r0_index]), table=table)


@dataclass
class SeriesRunDetail:
    jl: float
    omega_b: float
    exact: np.ndarray
    pred: np.ndarray
    validity: np.ndarray
    quad_rel_error: float


@dataclass
class PerturbationSeries:
    comparison: OrderComparison
    details: list
    omega_b_ref: float
    wbt_read: float
    t_read: float


def perturbation_series(params: ModelParams, grid: GridSpec, jl_values,
                        wbt_read: float = 5.0, quad_steps: int = 400,
                        scheme: str = "lanczos", tol: float = 1e-13,
                        eps_den: float = 1e-12) -> PerturbationSeries:
    """Run the full scaling study: for each JL, propagate both components
    exactly, build the first-order prediction from adiabatic references,
    and fit the residual scaling.

    All runs share a common reference omega_B (taken from the largest JL in
    the series) so the readout happens at one matched dimensionless time,
    i.e. one common raw time.
    """
    jl = np.asarray(jl_values, dtype=float)
    if np.count_nonzero(jl > 0) < 3:
        raise InsufficientSeries(
            "need at least 3 positive JL values in the series")
    bo = diagonalize_bo(params, grid)  # BO data is independent of JL
    p_ref = replace(params, JL=float(np.max(jl)))
    omega_ref = energy_width(assemble_hamiltonian(p_ref, grid))
    mesh = np.linspace(0.0, wbt_read, quad_steps + 1)
    details = []
    for jval in jl:
        p_run = replace(params, JL=float(jval))
        h = assemble_hamiltonian(p_run, grid)
        r0 = run_component(0, p_run, grid, [wbt_read], scheme=scheme,
                           tol=tol, bo=bo, h=h, omega_b=omega_ref)
        r1 = run_component(1, p_run, grid, [wbt_read], scheme=scheme,
                           tol=tol, bo=bo, h=h, omega_b=omega_ref)
        a0 = run_adiabatic(0, p_run, grid, mesh, scheme=scheme, tol=tol,
                           bo=bo, omega_b=omega_ref)
        a1 = run_adiabatic(1, p_run, grid, mesh, scheme=scheme, tol=tol,
                           bo=bo, omega_b=omega_ref)
        zf0 = zeroth_factors(0, bo, a0, eps_den)
        zf1 = zeroth_factors(1, bo, a1, eps_den)
        s1 = s1_overlap(0, 1, zf0, zf1)
        exact, val = aligned_exact_overlap(r0.fields[0], r1.fields[0], bo,
                                           eps_den=eps_den)
        details.append(SeriesRunDetail(
            jl=float(jval), omega_b=omega_ref, exact=exact, pred=s1.s1,
            validity=val & s1.validity,
            quad_rel_error=s1.quad_rel_error))
    comparison = compare_orders(
        jl, [d.exact for d in details], [d.pred for d in details],
        [d.validity for d in details], grid)
    return PerturbationSeries(comparison=comparison, details=details,
                              omega_b_ref=omega_ref, wbt_read=wbt_read,
                              t_read=wbt_read / omega_ref)
