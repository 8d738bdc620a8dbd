"""Nuclear-density decomposition and the reduced electronic density matrix.

For a superposition c0 psi_0 + c1 psi_1 the nuclear density splits into
diagonal marginals n_k and the complex cross field n_01; the latter is the
interference observable that stays identically zero under adiabatic
evolution and switches on only through non-adiabatic de-orthogonalisation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .efactor import extract_factors, marginal_density, y_complex
from .errors import CoefficientError, ScheduleMismatch
from .model import BOData, GridSpec
from .propagator import AdiabaticChannel, RunRecord, SpinorField

COEF_NORM_TOL = 1e-10
MASKED_WEIGHT_WARN = 1e-8


def cross_density(psi_j: SpinorField, psi_k: SpinorField) -> np.ndarray:
    """n_jk(R) = sum_r psi_j^*(r, R) psi_k(r, R); n_kj is its conjugate."""
    if psi_j.values.shape != psi_k.values.shape:
        raise ValueError("fields on different grids")
    return np.einsum("ij,ij->i", np.conj(psi_j.values), psi_k.values)


@dataclass
class DensityDecomposition:
    """Diagonal and cross contributions to the nuclear density and their
    assembly for given coefficients; `weight` is the global
    de-orthogonalisation summary W = sum_R |n01| dR."""

    n0: np.ndarray
    n1: np.ndarray
    n01: np.ndarray
    n_total: np.ndarray
    c0: complex
    c1: complex
    weight: float


def assemble_total(n0: np.ndarray, n1: np.ndarray, n01: np.ndarray,
                   c0: complex, c1: complex,
                   grid: GridSpec) -> DensityDecomposition:
    """n_total = |c0|^2 n0 + |c1|^2 n1 + 2 Re[c0^* c1 n01].

    With c_k = |c_k| e^{i theta_k} and phi = theta_1 - theta_0 the cross
    term equals 2 |c0||c1| [cos(phi) Re n01 - sin(phi) Im n01], so shifting
    phi by pi negates it exactly.
    """
    norm = abs(c0) ** 2 + abs(c1) ** 2
    if abs(norm - 1.0) > COEF_NORM_TOL:
        raise CoefficientError(
            f"|c0|^2 + |c1|^2 = {norm!r}, must be 1 within {COEF_NORM_TOL}")
    cross = 2.0 * np.real(np.conj(c0) * c1 * n01)
    total = abs(c0) ** 2 * n0 + abs(c1) ** 2 * n1 + cross
    weight = float(np.sum(np.abs(n01)) * grid.dR)
    return DensityDecomposition(n0=n0, n1=n1, n01=n01, n_total=total,
                                c0=complex(c0), c1=complex(c1), weight=weight)


def decompose(psi0: SpinorField, psi1: SpinorField, c0: complex, c1: complex,
              grid: GridSpec) -> DensityDecomposition:
    """Full decomposition from two stored components at equal times."""
    return assemble_total(marginal_density(psi0), marginal_density(psi1),
                          cross_density(psi0, psi1), c0, c1, grid)


@dataclass
class ReducedDensityMatrix:
    """2x2 electronic density matrix in the BO basis (smooth sign
    convention), optionally with its per-component EF decomposition."""

    rho: np.ndarray                 # (2, 2) complex
    rho_j: np.ndarray | None = None   # (2, 2, 2): [j, l, m]
    rho_jk: np.ndarray | None = None  # (2, 2): the (j,k) = (0,1) term
    masked_weight: float = 0.0

    def hermiticity(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))


def _bo_amplitudes(psi: SpinorField, bo: BOData) -> np.ndarray:
    """a_l(R) = <evec_l(R)|psi(., R)>, shape (n, 2)."""
    a0 = np.einsum("ij,ij->i", bo.evec0, psi.values)
    a1 = np.einsum("ij,ij->i", bo.evec1, psi.values)
    return np.stack([a0, a1], axis=1)


def reduced_density_matrix(psi_super: SpinorField,
                           bo: BOData) -> ReducedDensityMatrix:
    """rho^e_lm = sum_R dR <evec_l|psi><psi|evec_m> for the superposed
    field; Hermitian, unit trace for a normalized field, positive
    semidefinite by construction."""
    a = _bo_amplitudes(psi_super, bo)
    rho = np.einsum("il,im->lm", a, np.conj(a)) * psi_super.grid.dR
    return ReducedDensityMatrix(rho=rho)


def ef_decompose_rho(records: list[RunRecord], c, bo: BOData,
                     eps_den: float = 1e-12,
                     snapshot: int | None = None):
    """EF decomposition rho^e = sum_j |c_j|^2 rho^j + sum_{j!=k} c_j^* c_k
    rho^{jk} built from extract_factors outputs of the two component
    records.

    Returns a list (or single item if `snapshot` given) of
    ReducedDensityMatrix objects whose `rho` is the weighted sum and whose
    rho_j / rho_jk carry the pieces. Warns when masked points carry more
    than 1e-8 of component weight.
    """
    if len(records) != 2 or len(c) != 2:
        raise ScheduleMismatch("exactly two component records required")
    r0, r1 = records
    if r0.schedule.shape != r1.schedule.shape or np.any(
            np.abs(r0.schedule - r1.schedule) > 1e-12):
        raise ScheduleMismatch("records with different schedules")
    idxs = range(len(r0.fields)) if snapshot is None else [snapshot]
    out = []
    for i in idxs:
        psis = (r0.fields[i], r1.fields[i])
        ys, bs, vs = [], [], []
        masked_weight = 0.0
        for psi in psis:
            _, phi, vv = extract_factors(psi, eps_den)
            y = y_complex(psi, phi, vv)
            b = np.stack([np.einsum("ij,ij->i", bo.evec0, phi),
                          np.einsum("ij,ij->i", bo.evec1, phi)], axis=1)
            ys.append(y)
            bs.append(b)
            vs.append(vv)
            n = marginal_density(psi)
            masked_weight += float(np.sum(n[~vv]) * psi.grid.dR)
        if masked_weight > MASKED_WEIGHT_WARN:
            warnings.warn(
                f"masked points carry weight {masked_weight:.3e} "
                f"of the EF decomposition", stacklevel=2)
        dR = psis[0].grid.dR
        rho_j = np.empty((2, 2, 2), dtype=complex)
        for j in range(2):
            w = np.abs(ys[j]) ** 2
            rho_j[j] = np.einsum("i,il,im->lm", w, bs[j],
                                 np.conj(bs[j])) * dR
        wjk = np.conj(ys[0]) * ys[1]
        rho_jk = np.einsum("i,il,im->lm", wjk, bs[1], np.conj(bs[0])) * dR
        rho = (abs(c[0]) ** 2 * rho_j[0] + abs(c[1]) ** 2 * rho_j[1]
               + np.conj(c[0]) * c[1] * rho_jk
               + np.conj(c[1]) * c[0] * rho_jk.conj().T)
        out.append(ReducedDensityMatrix(rho=rho, rho_j=rho_j, rho_jk=rho_jk,
                                        masked_weight=masked_weight))
    return out[0] if snapshot is not None else out


def adiabatic_spinor(channel: AdiabaticChannel, bo: BOData) -> SpinorField:
    """Embed an adiabatic channel as a full component
    psi(r, R) = chi(R) evec_k(R)[r]."""
    ev = bo.evec0 if channel.surface == 0 else bo.evec1
    return SpinorField(values=channel.chi[:, None] * ev, grid=channel.grid,
                       time=channel.time)


def nac_region_mass(n01: np.ndarray, nac: np.ndarray,
                    threshold: float = 0.1) -> float:
    """Fraction of sum_R |n01| dR carried by points where
    |NAC| >= threshold * max|NAC|."""
    total = float(np.sum(np.abs(n01)))
    if total == 0.0:
        return 1.0
    region = np.abs(nac) >= threshold * np.max(np.abs(nac))
    return float(np.sum(np.abs(n01)[region]) / total)
