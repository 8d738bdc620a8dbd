"""Exact-factorization diagnostics extracted from propagated components.

Each component psi_k(r, R, t) is factorized pointwise as Y_k(R, t) *
phi_k(r; t, R) with <phi|phi> = 1 wherever the marginal density is above a
relative floor; below the floor the factorization is singular and points are
masked rather than set to NaN. The headline observable is the electronic
factor overlap <phi_0(t,R)|phi_1(t,R)>, whose magnitude is gauge invariant
and whose growth from zero quantifies de-orthogonalisation.

Gauge convention: at every (R, t) the largest-magnitude diabatic component
of phi is made real and positive. All reported magnitudes are independent of
this choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BOData, GridSpec, ModelParams, eval_potentials
from .propagator import SpinorField

DEFAULT_EPS_DEN = 1e-12  # relative to max_R n


def marginal_density(psi: SpinorField) -> np.ndarray:
    """n(R) = sum_r |psi(r, R)|^2."""
    return np.sum(np.abs(psi.values) ** 2, axis=1)


def _density_mask(n: np.ndarray, eps_den: float) -> np.ndarray:
    peak = float(np.max(n)) if n.size else 0.0
    if peak == 0.0:
        return np.zeros_like(n, dtype=bool)
    return n >= eps_den * peak


def extract_factors(psi: SpinorField, eps_den: float = DEFAULT_EPS_DEN):
    """Pointwise factorization psi = Y * phi on the valid region.

    Returns (y_abs, phi_field, validity): y_abs = sqrt(n), phi_field the
    gauge-fixed electronic factor (largest diabatic component real positive,
    <phi|phi> = 1), validity False where n < eps_den * max(n).
    """
    n = marginal_density(psi)
    valid = _density_mask(n, eps_den)
    y_abs = np.where(valid, np.sqrt(n), 0.0)
    phi = np.zeros_like(psi.values)
    v = psi.values[valid]
    big = np.take_along_axis(
        v, np.argmax(np.abs(v), axis=1)[:, None], axis=1)[:, 0]
    gauge = np.exp(-1j * np.angle(big))
    phi[valid] = v * (gauge / y_abs[valid])[:, None]
    return y_abs, phi, valid


def y_complex(psi: SpinorField, phi_field: np.ndarray,
              validity: np.ndarray) -> np.ndarray:
    """Nuclear factor Y = <phi|psi> in the gauge of phi_field."""
    y = np.zeros(psi.values.shape[0], dtype=complex)
    y[validity] = np.einsum("ij,ij->i", np.conj(phi_field[validity]),
                            psi.values[validity])
    return y


def overlap_field(psi0: SpinorField, psi1: SpinorField,
                  eps_den: float = DEFAULT_EPS_DEN):
    """<phi_0(t,R)|phi_1(t,R)> on points where both factors exist.

    Computed as sum_r psi_0^* psi_1 / sqrt(n_0 n_1) with the phase carried
    into the extract_factors gauge; the magnitude is gauge invariant.
    """
    if psi0.values.shape != psi1.values.shape:
        raise ValueError("fields on different grids")
    _, phi0, v0 = extract_factors(psi0, eps_den)
    _, phi1, v1 = extract_factors(psi1, eps_den)
    valid = v0 & v1
    ov = np.zeros(psi0.values.shape[0], dtype=complex)
    ov[valid] = np.einsum("ij,ij->i", np.conj(phi0[valid]), phi1[valid])
    return ov, valid


def _segments(validity: np.ndarray):
    """Contiguous runs of True, as (start, stop) half-open pairs."""
    idx = np.flatnonzero(validity)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    stops = np.concatenate([idx[breaks] + 1, [idx[-1] + 1]])
    return list(zip(starts, stops))


def masked_derivative(arr: np.ndarray, validity: np.ndarray, dR: float):
    """O(dR^2) first derivative on each contiguous valid segment: central
    in the interior, one-sided 3-point at segment edges. Segments shorter
    than the stencil are masked out."""
    out = np.zeros_like(arr)
    ok = np.zeros(arr.shape[0], dtype=bool)
    for a, b in _segments(validity):
        if b - a < 3:
            continue
        seg = arr[a:b]
        d = np.empty_like(seg)
        d[1:-1] = (seg[2:] - seg[:-2]) / (2 * dR)
        d[0] = (-3 * seg[0] + 4 * seg[1] - seg[2]) / (2 * dR)
        d[-1] = (3 * seg[-1] - 4 * seg[-2] + seg[-3]) / (2 * dR)
        out[a:b] = d
        ok[a:b] = True
    return out, ok


def masked_second_derivative(arr: np.ndarray, validity: np.ndarray,
                             dR: float):
    """3-point Laplacian on contiguous valid segments; the one-sided end
    rows reuse the adjacent interior stencil."""
    out = np.zeros_like(arr)
    ok = np.zeros(arr.shape[0], dtype=bool)
    for a, b in _segments(validity):
        if b - a < 3:
            continue
        seg = arr[a:b]
        d = np.empty_like(seg)
        d[1:-1] = (seg[2:] - 2 * seg[1:-1] + seg[:-2]) / dR ** 2
        d[0] = (seg[2] - 2 * seg[1] + seg[0]) / dR ** 2
        d[-1] = (seg[-3] - 2 * seg[-2] + seg[-1]) / dR ** 2
        out[a:b] = d
        ok[a:b] = True
    return out, ok


def vector_potential(phi_field: np.ndarray, validity: np.ndarray,
                     grid: GridSpec):
    """A(R) = Re <phi| -i d/dR phi> by finite differences on the valid
    region. Identically zero for real electronic factors."""
    dphi, ok = masked_derivative(phi_field, validity, grid.dR)
    a = np.zeros(phi_field.shape[0])
    a[ok] = np.real(np.einsum("ij,ij->i", np.conj(phi_field[ok]),
                              -1j * dphi[ok]))
    return a, ok


def momentum_function(y: np.ndarray, a_field: np.ndarray,
                      validity: np.ndarray, grid: GridSpec,
                      eps_den: float = DEFAULT_EPS_DEN):
    """Complex nuclear momentum function p = -i (dY/dR)/Y + A.

    Im p = -(d|Y|/dR)/|Y| is the nuclear quantum momentum; Re p relates to
    the gauge-invariant current J = |Y|^2 Re p (per unit mass scale).
    Points with |Y| below the relative floor are masked.
    """
    mag = np.abs(y)
    peak = float(np.max(mag)) if mag.size else 0.0
    vv = validity & (mag >= np.sqrt(eps_den) * peak)
    dy, ok = masked_derivative(y, vv, grid.dR)
    p = np.zeros(y.shape[0], dtype=complex)
    p[ok] = -1j * dy[ok] / y[ok] + a_field[ok]
    return p, ok


def tdpes_gi_part(phi_field: np.ndarray, validity: np.ndarray, bo: BOData,
                  params: ModelParams, grid: GridSpec):
    """Gauge-invariant potential surface pieces of the electronic factor.

    Returns (eps_gi, eps_na, validity): eps_gi = <phi|H_el|phi> and the
    kinetic functional eps_na = <(-i d/dR - A) phi|(-i d/dR - A) phi> *
    JL * dR^2 (the mu/2M prefactor expressed through the hopping), which is
    manifestly non-negative. The -i d/dt gauge term is not part of this
    quantity; see `tdpes_gauge_term`.
    """
    n = phi_field.shape[0]
    V0, Vx = eval_potentials(params, grid)
    eps_gi = np.zeros(n)
    m = validity
    eps_gi[m] = np.real(
        (V0[m] + params.g0 / 2) * np.abs(phi_field[m, 0]) ** 2
        + (V0[m] - params.g0 / 2) * np.abs(phi_field[m, 1]) ** 2
        + 2 * Vx[m] * np.real(np.conj(phi_field[m, 0]) * phi_field[m, 1]))
    a, ok = vector_potential(phi_field, validity, grid)
    dphi, ok2 = masked_derivative(phi_field, validity, grid.dR)
    okk = ok & ok2
    cov = -1j * dphi - a[:, None] * phi_field
    eps_na = np.zeros(n)
    eps_na[okk] = params.JL * grid.dR ** 2 * np.sum(
        np.abs(cov[okk]) ** 2, axis=1)
    return eps_gi, eps_na, okk


def tdpes_gauge_term(phi_prev: np.ndarray, phi_next: np.ndarray,
                     dt: float, validity: np.ndarray) -> np.ndarray:
    """-i <phi|d/dt phi> from two stored snapshots bracketing the target."""
    out = np.zeros(phi_prev.shape[0])
    mid = 0.5 * (phi_prev + phi_next)
    dphi = (phi_next - phi_prev) / dt
    out[validity] = np.real(np.einsum(
        "ij,ij->i", np.conj(mid[validity]), -1j * dphi[validity]))
    return out


@dataclass
class EFDiagnostics:
    """Per-snapshot bundle of exact-factorization fields for one pair of
    components (k = 0, 1)."""

    time: float
    y_abs: np.ndarray            # (2, n)
    overlap: np.ndarray          # (n,) complex
    overlap_validity: np.ndarray
    a_field: np.ndarray          # (2, n)
    p_field: np.ndarray          # (2, n) complex
    p_validity: np.ndarray       # (2, n) bool
    tdpes_gi: np.ndarray         # (2, n)
    eps_na: np.ndarray           # (2, n)
    quantum_momentum: np.ndarray  # (2, n) = Im p
    current: np.ndarray          # (2, n) = |Y|^2 Re p
    gauge_term: np.ndarray | None = None
    has_gauge_term: bool = False


def compute_diagnostics(psi0: SpinorField, psi1: SpinorField, bo: BOData,
                        params: ModelParams, grid: GridSpec,
                        eps_den: float = DEFAULT_EPS_DEN,
                        neighbors=None) -> EFDiagnostics:
    """Assemble the full diagnostic bundle from two stored components at the
    same time; `neighbors` may pass (prev, next, dt) snapshot pairs to add
    the -i d/dt gauge term for each component."""
    n = grid.n_points
    y_abs = np.zeros((2, n))
    a_field = np.zeros((2, n))
    p_field = np.zeros((2, n), dtype=complex)
    p_valid = np.zeros((2, n), dtype=bool)
    gi = np.zeros((2, n))
    ena = np.zeros((2, n))
    for k, psi in enumerate((psi0, psi1)):
        ya, phi, vv = extract_factors(psi, eps_den)
        y_abs[k] = ya
        a, ok = vector_potential(phi, vv, grid)
        a_field[k] = a
        yc = y_complex(psi, phi, vv)
        p, okp = momentum_function(yc, a, ok, grid, eps_den)
        p_field[k] = p
        p_valid[k] = okp
        g, e, _ = tdpes_gi_part(phi, vv, bo, params, grid)
        gi[k] = g
        ena[k] = e
    ov, ovv = overlap_field(psi0, psi1, eps_den)
    gauge = None
    if neighbors is not None:
        gauge = np.zeros((2, n))
        for k, (prev, nxt, dt) in enumerate(neighbors):
            _, phi_p, v_p = extract_factors(prev, eps_den)
            _, phi_n, v_n = extract_factors(nxt, eps_den)
            gauge[k] = tdpes_gauge_term(phi_p, phi_n, dt, v_p & v_n)
    return EFDiagnostics(
        time=psi0.time, y_abs=y_abs, overlap=ov, overlap_validity=ovv,
        a_field=a_field, p_field=p_field, p_validity=p_valid, tdpes_gi=gi,
        eps_na=ena, quantum_momentum=np.imag(p_field),
        current=y_abs ** 2 * np.real(p_field), gauge_term=gauge,
        has_gauge_term=gauge is not None)
