"""Grid TDSE propagation for full two-channel components and adiabatic
single-surface references.

Three interchangeable stepping schemes:

* ``lanczos`` (default): short-iterative Krylov propagation with adaptive
  subspace dimension. The Krylov exponential is unitary within the subspace,
  so norm is conserved to rounding regardless of the truncation level; the
  expansion order adapts until successive approximations differ by less than
  the requested per-step tolerance.
* ``chebyshev``: fixed-coefficient polynomial expansion of exp(-i H dt) with
  Bessel-function coefficients and a rigorous Gershgorin spectral enclosure.
  The polynomial is identical for every state, which makes the scheme the
  reference choice for null tests that compare states evolved side by side.
* ``crank_nicolson``: unconditionally stable Pade(1,1) step via a banded
  direct solve; exactly norm-preserving up to the linear-solve accuracy and
  therefore an independent low-order cross-check on the spectral schemes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.special import jv

from .errors import (ConvergenceError, LeakageError, ScheduleMismatch,
                     StabilityError)
from .model import (BOData, ChannelHamiltonian, GridSpec, Hamiltonian,
                    ModelParams, assemble_hamiltonian, channel_hamiltonian,
                    diagonalize_bo, energy_width)

SCHEMES = ("lanczos", "chebyshev", "crank_nicolson")
DEFAULT_TOL = 1e-10
DEFAULT_KRYLOV_CAP = 30
NORM_DRIFT_BOUND = 1e-12
BOUNDARY_AMP_TOL = 1e-10   # on the initial Gaussian amplitude
BOUNDARY_PROB_TOL = 1e-8   # on the running boundary probability


@dataclass
class SpinorField:
    """One full wavefunction component on the grid: complex 2-vector per
    point (diabatic electronic components), normalized as
    sum_R sum_r |psi|^2 dR."""

    values: np.ndarray  # (n, 2) complex
    grid: GridSpec
    time: float = 0.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.dR))

    def copy(self) -> "SpinorField":
        return SpinorField(self.values.copy(), self.grid, self.time)


@dataclass
class AdiabaticChannel:
    """Scalar nuclear field evolving on a single BO surface."""

    chi: np.ndarray  # (n,) complex
    surface: int
    grid: GridSpec
    time: float = 0.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.chi) ** 2) * self.grid.dR))

    def copy(self) -> "AdiabaticChannel":
        return AdiabaticChannel(self.chi.copy(), self.surface, self.grid,
                                self.time)


@dataclass
class RunRecord:
    """Snapshots plus per-snapshot scalar monitors for one propagation run.

    ``schedule`` holds the dimensionless snapshot times omega_B * t, strictly
    increasing; ``fields`` the stored SpinorField / AdiabaticChannel objects.
    The manifest dict carries every setting needed to reproduce the run.
    """

    kind: str                 # "component" | "superposition" | "adiabatic"
    surface: int | None
    params: ModelParams
    grid: GridSpec
    omega_b: float
    schedule: np.ndarray      # omega_B * t
    times: np.ndarray         # raw t, units 1/g0
    fields: list
    norms: np.ndarray
    energies: np.ndarray
    boundary: np.ndarray
    scheme: str
    dt: float
    tol: float
    steps: int

    def manifest(self) -> dict:
        return {
            "kind": self.kind,
            "surface": self.surface,
            "scheme": self.scheme,
            "dt": self.dt,
            "tol": self.tol,
            "steps": self.steps,
            "omega_b": self.omega_b,
            "schedule": [float(s) for s in self.schedule],
        }


def initial_chi(params: ModelParams, grid: GridSpec) -> np.ndarray:
    """Gaussian nuclear amplitude [sigma sqrt(pi)]^(-1/2) exp(-R^2/(2 sigma^2)),
    renormalized on the grid. Raises LeakageError when the continuous
    amplitude at either boundary exceeds the boundary tolerance."""
    R = grid.coords()
    chi = (params.sigma * math.sqrt(math.pi)) ** -0.5 * np.exp(
        -(R ** 2) / (2.0 * params.sigma ** 2))
    edge = max(abs(chi[0]), abs(chi[-1]))
    if edge > BOUNDARY_AMP_TOL:
        raise LeakageError(
            f"initial amplitude {edge:.3e} at grid boundary exceeds "
            f"{BOUNDARY_AMP_TOL:.0e}; enlarge the grid")
    nrm = np.sqrt(np.sum(np.abs(chi) ** 2) * grid.dR)
    return (chi / nrm).astype(complex)


def initial_component(k: int, params: ModelParams, grid: GridSpec,
                      bo: BOData | None = None) -> SpinorField:
    """Product start psi_k(r, R, 0) = chi_ini(R) * evec_k(R)[r]."""
    if bo is None:
        bo = diagonalize_bo(params, grid)
    chi = initial_chi(params, grid)
    ev = bo.evec0 if k == 0 else bo.evec1
    return SpinorField(values=chi[:, None] * ev, grid=grid, time=0.0)


# ---------------------------------------------------------------------------
# stepping kernels (flat complex vectors, plain 2-norms)

def _expm_tridiag_e1(alphas: np.ndarray, betas: np.ndarray,
                     dt: float) -> np.ndarray:
    """First column of exp(-i dt T) for a real symmetric tridiagonal T."""
    if len(alphas) == 1:
        return np.array([np.exp(-1j * dt * alphas[0])])
    w, q = eigh_tridiagonal(alphas, betas)
    return q @ (np.exp(-1j * dt * w) * q[0, :])


def _step_lanczos(op, v: np.ndarray, dt: float, tol: float,
                  cap: int) -> np.ndarray:
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        return v.copy()
    basis = [v / nrm]
    alphas: list[float] = []
    betas: list[float] = []
    w = op.apply_flat(basis[0])
    alphas.append(float(np.real(np.vdot(basis[0], w))))
    w = w - alphas[0] * basis[0]
    u_prev = None
    u = None
    converged = False
    for m in range(1, cap + 1):
        u = _expm_tridiag_e1(np.asarray(alphas), np.asarray(betas), dt)
        if u_prev is not None:
            err = np.linalg.norm(u - np.concatenate([u_prev, [0.0]]))
            if err <= tol:
                converged = True
                break
        beta = float(np.linalg.norm(w))
        if beta <= 1e-14:
            converged = True  # invariant subspace: expansion exact
            break
        if m == cap:
            break
        vm = w / beta
        for b in basis:  # full reorthogonalization, m is small
            vm -= np.vdot(b, vm) * b
        vm /= np.linalg.norm(vm)
        basis.append(vm)
        betas.append(beta)
        w = op.apply_flat(vm) - beta * basis[-2]
        a = float(np.real(np.vdot(vm, w)))
        alphas.append(a)
        w = w - a * vm
        u_prev = u
    if not converged:
        raise ConvergenceError(
            f"Lanczos expansion not converged to {tol:.1e} within "
            f"{cap} Krylov vectors (dt too large?)")
    return nrm * (u @ np.vstack(basis[:len(u)]))


_CHEB_MAX_TERMS = 200_000


def _chebyshev_coefficients(z: float, tol: float) -> np.ndarray:
    """Coefficients (2 - delta_k0) * (-i)^k * J_k(z), truncated when the
    Bessel tail falls below tol."""
    k_hi = max(int(z) + 20, 12)
    while True:
        ks = np.arange(k_hi + 1)
        bess = jv(ks, z)
        # truncate at the first index past z where the term is negligible
        small = np.abs(2.0 * bess) < tol
        small[: max(int(z), 1)] = False
        idx = np.nonzero(small)[0]
        if idx.size:
            kcut = int(idx[0])
            coeff = bess[: kcut + 1] * (2.0 * (-1j) ** ks[: kcut + 1])
            coeff[0] /= 2.0
            return coeff
        if k_hi > _CHEB_MAX_TERMS:
            raise ConvergenceError(
                f"Chebyshev expansion needs > {_CHEB_MAX_TERMS} terms "
                f"(z = {z:.3e}); reduce dt")
        k_hi *= 2


def _step_chebyshev(op, v: np.ndarray, dt: float, tol: float) -> np.ndarray:
    lo, hi = op.spectral_bounds()
    center = 0.5 * (hi + lo)
    halfwidth = 0.5 * (hi - lo)
    z = halfwidth * dt
    if z < 1e-14:
        return np.exp(-1j * dt * center) * v
    trunc = max(min(tol, 1e-13), 1e-16)
    coeff = _chebyshev_coefficients(z, trunc)
    t_prev = v
    t_cur = (op.apply_flat(v) - center * v) / halfwidth
    acc = coeff[0] * t_prev + coeff[1] * t_cur
    for ck in coeff[2:]:
        t_next = 2.0 * (op.apply_flat(t_cur) - center * t_cur) / halfwidth \
            - t_prev
        acc += ck * t_next
        t_prev, t_cur = t_cur, t_next
    return np.exp(-1j * dt * center) * acc


def _cn_matrices(op, dt: float) -> tuple[np.ndarray, int]:
    """Banded (1 + i dt/2 H) and its bandwidth."""
    ab = op.banded()
    bw = (ab.shape[0] - 1) // 2
    ab = ab * (0.5j * dt)
    ab[bw] += 1.0
    return ab, bw


def _step_crank_nicolson(op, v: np.ndarray, dt: float,
                         ab_plus=None, bw=None) -> np.ndarray:
    if ab_plus is None:
        ab_plus, bw = _cn_matrices(op, dt)
    rhs = v - 0.5j * dt * op.apply_flat(v)
    return solve_banded((bw, bw), ab_plus, rhs)


def _check_drift(scheme: str, before: float, after: float, dim: int):
    if scheme == "crank_nicolson":
        return  # direct solve: norm preserved to solver accuracy
    allow = before * (NORM_DRIFT_BOUND + 64 * np.finfo(float).eps
                      * math.sqrt(dim))
    if abs(after - before) > allow:
        raise StabilityError(
            f"norm drift {abs(after - before):.3e} above per-step bound "
            f"for scheme {scheme}")


def _step(op, v: np.ndarray, dt: float, scheme: str, tol: float,
          cap: int, cn_cache=None) -> np.ndarray:
    before = np.linalg.norm(v)
    if scheme == "lanczos":
        out = _step_lanczos(op, v, dt, tol, cap)
    elif scheme == "chebyshev":
        out = _step_chebyshev(op, v, dt, tol)
    elif scheme == "crank_nicolson":
        if cn_cache is not None:
            out = _step_crank_nicolson(op, v, dt, *cn_cache)
        else:
            out = _step_crank_nicolson(op, v, dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    _check_drift(scheme, before, float(np.linalg.norm(out)), v.size)
    return out


def _evolve(op, v: np.ndarray, duration: float, scheme: str, dt: float,
            tol: float, cap: int) -> tuple[np.ndarray, int]:
    """Advance by `duration`, landing exactly, with steps of at most dt."""
    if duration <= 0.0:
        return v, 0
    nsub = max(1, math.ceil(duration / dt - 1e-12))
    h = duration / nsub
    cn_cache = _cn_matrices(op, h) if scheme == "crank_nicolson" else None
    for _ in range(nsub):
        v = _step(op, v, h, scheme, tol, cap, cn_cache)
    return v, nsub


def propagate(state, h, dt: float, scheme: str = "lanczos",
              tol: float = DEFAULT_TOL, krylov_cap: int = DEFAULT_KRYLOV_CAP):
    """Single step of the TDSE: returns the state advanced by dt.

    Accepts a SpinorField with the full Hamiltonian or an AdiabaticChannel
    with a ChannelHamiltonian. The input is not modified.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if isinstance(state, SpinorField):
        if not isinstance(h, Hamiltonian):
            raise TypeError("SpinorField requires the full Hamiltonian")
        flat = _step(h, state.values.reshape(-1), dt, scheme, tol, krylov_cap)
        return SpinorField(flat.reshape(-1, 2), state.grid, state.time + dt)
    if isinstance(state, AdiabaticChannel):
        if not isinstance(h, ChannelHamiltonian):
            raise TypeError("AdiabaticChannel requires a ChannelHamiltonian")
        chi = _step(h, state.chi, dt, scheme, tol, krylov_cap)
        return AdiabaticChannel(chi, state.surface, state.grid,
                                state.time + dt)
    raise TypeError(f"cannot propagate {type(state).__name__}")


# ---------------------------------------------------------------------------
# full runs

def _validate_schedule(schedule) -> np.ndarray:
    s = np.asarray(schedule, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("schedule must be a non-empty 1-D sequence")
    if s[0] < 0 or np.any(np.diff(s) <= 0):
        raise ValueError("schedule times must be non-negative and "
                         "strictly increasing")
    return s


def _site_density(values: np.ndarray) -> np.ndarray:
    if values.ndim == 2:
        return np.sum(np.abs(values) ** 2, axis=1)
    return np.abs(values) ** 2


def _boundary_probability(values: np.ndarray, dR: float) -> float:
    dens = _site_density(values)
    return float((dens[0] + dens[-1]) * dR)


def _run(op, v0: np.ndarray, kind: str, surface, params, grid, omega_b,
         schedule, scheme, dt_factor, tol, cap, boundary_tol) -> RunRecord:
    wbt = _validate_schedule(schedule)
    times = wbt / omega_b
    dt = dt_factor / omega_b
    fields, norms, energies, boundary = [], [], [], []
    v = v0.copy()
    t_prev = 0.0
    total_steps = 0
    for t_snap in times:
        v, nsteps = _evolve(op, v, t_snap - t_prev, scheme, dt, tol, cap)
        total_steps += nsteps
        t_prev = t_snap
        fields.append(v.copy())
        norms.append(np.sqrt(np.sum(np.abs(v) ** 2) * grid.dR))
        vv = v.reshape(-1, 2) if kind != "adiabatic" else v
        energies.append(op.expectation(vv))
        b = _boundary_probability(vv, grid.dR)
        boundary.append(b)
        if b > boundary_tol:
            raise LeakageError(
                f"boundary probability {b:.3e} at omega_B t = "
                f"{t_snap * omega_b:.3f} exceeds {boundary_tol:.0e}")
    if kind == "adiabatic":
        wrapped = [AdiabaticChannel(f, surface, grid, t)
                   for f, t in zip(fields, times)]
    else:
        wrapped = [SpinorField(f.reshape(-1, 2), grid, t)
                   for f, t in zip(fields, times)]
    return RunRecord(kind=kind, surface=surface, params=params, grid=grid,
                     omega_b=omega_b, schedule=wbt, times=times,
                     fields=wrapped, norms=np.asarray(norms),
                     energies=np.asarray(energies),
                     boundary=np.asarray(boundary), scheme=scheme, dt=dt,
                     tol=tol, steps=total_steps)


def run_component(k: int, params: ModelParams, grid: GridSpec, schedule,
                  *, scheme: str = "lanczos", dt_factor: float = 0.05,
                  tol: float = DEFAULT_TOL, krylov_cap: int = DEFAULT_KRYLOV_CAP,
                  boundary_tol: float = BOUNDARY_PROB_TOL,
                  bo: BOData | None = None, h: Hamiltonian | None = None,
                  omega_b: float | None = None) -> RunRecord:
    """Propagate the full component started on surface k through the
    dimensionless snapshot schedule (omega_B * t values)."""
    if bo is None:
        bo = diagonalize_bo(params, grid)
    if h is None:
        h = assemble_hamiltonian(params, grid)
    if omega_b is None:
        omega_b = energy_width(h)
    psi0 = initial_component(k, params, grid, bo)
    return _run(h, psi0.values.reshape(-1), "component", k, params, grid,
                omega_b, schedule, scheme, dt_factor, tol, krylov_cap,
                boundary_tol)


def run_superposition(params: ModelParams, grid: GridSpec, schedule,
                      *, scheme: str = "lanczos", dt_factor: float = 0.05,
                      tol: float = DEFAULT_TOL,
                      krylov_cap: int = DEFAULT_KRYLOV_CAP,
                      boundary_tol: float = BOUNDARY_PROB_TOL,
                      bo: BOData | None = None, h: Hamiltonian | None = None,
                      omega_b: float | None = None) -> RunRecord:
    """Propagate c0 psi_0 + c1 psi_1 directly (the linearity oracle's
    second path)."""
    if bo is None:
        bo = diagonalize_bo(params, grid)
    if h is None:
        h = assemble_hamiltonian(params, grid)
    if omega_b is None:
        omega_b = energy_width(h)
    v0 = (params.c0 * initial_component(0, params, grid, bo).values
          + params.c1 * initial_component(1, params, grid, bo).values)
    return _run(h, v0.reshape(-1), "superposition", None, params, grid,
                omega_b, schedule, scheme, dt_factor, tol, krylov_cap,
                boundary_tol)


def run_adiabatic(k: int, params: ModelParams, grid: GridSpec, schedule,
                  *, scheme: str = "lanczos", dt_factor: float = 0.05,
                  tol: float = DEFAULT_TOL, krylov_cap: int = DEFAULT_KRYLOV_CAP,
                  boundary_tol: float = BOUNDARY_PROB_TOL,
                  bo: BOData | None = None,
                  omega_b: float | None = None) -> RunRecord:
    """Propagate the scalar nuclear field on BOPES k with NACs ignored,
    same kinetic discretization, no interchannel coupling."""
    if bo is None:
        bo = diagonalize_bo(params, grid)
    if omega_b is None:
        omega_b = energy_width(assemble_hamiltonian(params, grid))
    hk = channel_hamiltonian(params, grid, bo, k)
    chi0 = initial_chi(params, grid)
    return _run(hk, chi0, "adiabatic", k, params, grid, omega_b, schedule,
                scheme, dt_factor, tol, krylov_cap, boundary_tol)


def _same_grid(a: GridSpec, b: GridSpec) -> bool:
    return a.n_points == b.n_points and a.dR == b.dR


def assemble_superposition(records: list[RunRecord], c) -> list[SpinorField]:
    """Per-snapshot sum_k c_k psi_k from per-component records with identical
    schedules and grids."""
    if len(records) != len(c):
        raise ScheduleMismatch("one coefficient per record required")
    ref = records[0]
    for r in records:
        if r.kind == "adiabatic":
            raise ScheduleMismatch("cannot assemble adiabatic channels; "
                                   "use full component records")
        if not _same_grid(r.grid, ref.grid):
            raise ScheduleMismatch("records on different grids")
        if r.schedule.shape != ref.schedule.shape or np.any(
                np.abs(r.schedule - ref.schedule) > 1e-12):
            raise ScheduleMismatch("records with different schedules")
    out = []
    for i, t in enumerate(ref.times):
        acc = np.zeros_like(ref.fields[i].values)
        for ck, rec in zip(c, records):
            acc = acc + ck * rec.fields[i].values
        out.append(SpinorField(acc, ref.grid, t))
    return out
