"""Double-arc two-level model on a 1-D nuclear grid.

Diabatic Hamiltonian per grid point:

    H_el(R) = V0(R)*1 + (g0/2)*sigma_z + Vx(R)*sigma_x

with V0(R) = K*(R/LW)^2 a harmonic well and Vx(R) = gx*exp(-kappa*(R/Lx)^alpha)
a smooth, even coupling window. The nuclear kinetic energy is a nearest
neighbour hopping of amplitude JL acting identically on both electronic
channels, discretized as -JL*(psi[i+1] + psi[i-1] - 2*psi[i]) so the kinetic
spectrum is [0, 4*JL] and JL -> 0 reduces to decoupled per-site dynamics with
no constant offset. Boundaries are open (Dirichlet).

Energies are in units of g0, lengths in units of the initial wavepacket
width sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CoefficientError, ConvergenceError, MismatchError

COEF_NORM_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the double-arc model.

    g0 sets the electronic energy unit, sigma the length unit; both default
    to 1 and all other couplings are measured against them.
    """

    g0: float = 1.0
    gx: float = 10.0
    kappa: float = 2.5
    alpha: int = 4
    K: float = 0.1
    LW: float = 15.0
    Lx: float = 0.5
    sigma: float = 1.0
    JL: float = 1.0
    c0: complex = complex(2.0 ** -0.5)
    c1: complex = complex(2.0 ** -0.5)

    def __post_init__(self):
        if not (self.g0 > 0 and self.sigma > 0 and self.Lx > 0 and self.LW > 0):
            raise ValueError("g0, sigma, Lx, LW must be positive")
        if self.gx < 0 or self.JL < 0 or self.K < 0:
            raise ValueError("gx, JL, K must be non-negative")
        if not (isinstance(self.alpha, (int, np.integer)) and self.alpha > 0
                and self.alpha % 2 == 0):
            raise ValueError("alpha must be a positive even integer")
        norm = abs(self.c0) ** 2 + abs(self.c1) ** 2
        if abs(norm - 1.0) > COEF_NORM_TOL:
            raise CoefficientError(
                f"|c0|^2 + |c1|^2 = {norm!r}, must be 1 within {COEF_NORM_TOL}")

    @property
    def phi_rel(self) -> float:
        """Relative phase arg(c1) - arg(c0) of the superposition."""
        return float(np.angle(self.c1) - np.angle(self.c0))

    def with_coefficients(self, c0: complex, c1: complex) -> "ModelParams":
        return replace(self, c0=complex(c0), c1=complex(c1))


@dataclass(frozen=True)
class GridSpec:
    """Uniform origin-centered grid with an odd number of points, so R = 0
    is always a grid point."""

    n_points: int = 6001
    dR: float = 0.005

    def __post_init__(self):
        if self.n_points < 1 or self.n_points % 2 == 0:
            raise ValueError("n_points must be a positive odd integer")
        if not self.dR > 0:
            raise ValueError("dR must be positive")

    @property
    def extent(self) -> float:
        return (self.n_points - 1) * self.dR

    def coords(self) -> np.ndarray:
        half = (self.n_points - 1) // 2
        return np.arange(-half, half + 1, dtype=float) * self.dR

    def validate_extent(self, params: ModelParams, well_factor: float | None = None):
        """Optional coarse size check against the well length.

        Off by default; actual wavepacket leakage is monitored at run time,
        which is the check that matters.
        """
        if well_factor is not None and self.extent < well_factor * params.LW:
            raise ValueError(
                f"grid extent {self.extent} < {well_factor} * LW = "
                f"{well_factor * params.LW}")


def eval_potentials(params: ModelParams, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the diagonal well V0(R) and the coupling window Vx(R)."""
    R = grid.coords()
    V0 = params.K * (R / params.LW) ** 2
    Vx = params.gx * np.exp(-params.kappa * (R / params.Lx) ** params.alpha)
    return V0, Vx


def _coupling_derivative(params: ModelParams, grid: GridSpec) -> np.ndarray:
    """Analytic dVx/dR."""
    R = grid.coords()
    Vx = params.gx * np.exp(-params.kappa * (R / params.Lx) ** params.alpha)
    return Vx * (-params.kappa * params.alpha
                 * R ** (params.alpha - 1) / params.Lx ** params.alpha)


@dataclass(frozen=True)
class BOData:
    """Born-Oppenheimer surfaces, eigenvectors and derivative coupling.

    Eigenvectors are real 2-vectors per grid point in the diabatic basis,
    with the smooth sign convention: continuity from the leftmost point,
    where the lower state has non-negative first diabatic component.
    """

    eps0: np.ndarray
    eps1: np.ndarray
    evec0: np.ndarray  # (n, 2)
    evec1: np.ndarray  # (n, 2)
    nac: np.ndarray    # d01(R) = <phi0 | d/dR phi1>, units 1/sigma


def diagonalize_bo(params: ModelParams, grid: GridSpec) -> BOData:
    """Diagonalize the 2x2 electronic Hamiltonian at every grid point.

    Closed form: eps_pm = V0 +/- sqrt((g0/2)^2 + Vx^2). With theta(R) =
    arctan2(2*Vx, g0)/2 the eigenvectors are (cos t, sin t) for the upper
    and (-sin t, cos t) for the lower surface; since Vx >= 0 this family is
    smooth in R and already satisfies the leftmost sign convention. The
    stored NAC is the analytic mixing-angle derivative
    d01 = g0 * Vx'(R) / (g0^2 + 4 Vx^2).
    """
    V0, Vx = eval_potentials(params, grid)
    half_gap = np.hypot(params.g0 / 2.0, Vx)
    theta = 0.5 * np.arctan2(2.0 * Vx, params.g0)
    evec1 = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    evec0 = np.stack([-np.sin(theta), np.cos(theta)], axis=1)
    # smoothness of the analytic family: neighbouring eigenvectors must not flip
    if grid.n_points > 1:
        for ev in (evec0, evec1):
            dots = np.einsum("ij,ij->i", ev[:-1], ev[1:])
            if not np.all(dots > 0.0):
                raise MismatchError("eigenvector sign continuity broken")
    nac = params.g0 * _coupling_derivative(params, grid) / (
        params.g0 ** 2 + 4.0 * Vx ** 2)
    return BOData(eps0=V0 - half_gap, eps1=V0 + half_gap,
                  evec0=evec0, evec1=evec1, nac=nac)


def compute_nac(params: ModelParams, grid: GridSpec, bo: BOData | None = None,
                tol_nac: float = 1e-4) -> np.ndarray:
    """Derivative coupling with a dual-route cross-check.

    Route (a): analytic mixing-angle derivative. Route (b): central finite
    difference of the eigenvectors, one-sided O(dR^2) at the boundaries.
    Raises MismatchError if max|a - b| > tol_nac * max|a|; the finite
    difference inherits an O(dR^2) error, so tol_nac must be commensurate
    with the grid. Returns route (a).
    """
    if bo is None:
        bo = diagonalize_bo(params, grid)
    analytic = bo.nac
    if grid.n_points < 3:
        return analytic
    ev0, ev1, h = bo.evec0, bo.evec1, grid.dR
    fd = np.empty(grid.n_points)
    fd[1:-1] = np.einsum("ij,ij->i", ev0[1:-1], ev1[2:] - ev1[:-2]) / (2 * h)
    fd[0] = ev0[0] @ (-3 * ev1[0] + 4 * ev1[1] - ev1[2]) / (2 * h)
    fd[-1] = ev0[-1] @ (3 * ev1[-1] - 4 * ev1[-2] + ev1[-3]) / (2 * h)
    scale = np.max(np.abs(analytic))
    dev = np.max(np.abs(analytic - fd))
    if scale > 0 and dev > tol_nac * scale:
        raise MismatchError(
            f"NAC mismatch: max|analytic - fd| = {dev:.3e} > "
            f"{tol_nac:.1e} * max|analytic| = {tol_nac * scale:.3e} "
            f"(grid too coarse or sign continuity broken)")
    if scale == 0 and dev > tol_nac:
        raise MismatchError(f"NAC mismatch on flat profile: {dev:.3e}")
    return analytic


@dataclass(frozen=True)
class Hamiltonian:
    """Structured two-channel grid Hamiltonian.

    Diagonal 2x2 blocks V0 + (g0/2) sigma_z + Vx sigma_x + 2 JL per point,
    off-diagonal -JL identity blocks between nearest neighbours. Real
    symmetric by construction; `assert_hermitian` verifies the assembled
    sparse matrix.
    """

    v00: np.ndarray  # diagonal of channel 0: V0 + g0/2 + 2 JL
    v11: np.ndarray  # diagonal of channel 1: V0 - g0/2 + 2 JL
    vx: np.ndarray   # inter-channel coupling Vx
    jl: float
    grid: GridSpec
    _bounds: tuple = field(default=None, compare=False, repr=False)

    @property
    def n_sites(self) -> int:
        return self.grid.n_points

    @property
    def dim(self) -> int:
        return 2 * self.grid.n_points

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """H @ psi for psi of shape (n, 2)."""
        out = np.empty_like(psi)
        out[:, 0] = self.v00 * psi[:, 0] + self.vx * psi[:, 1]
        out[:, 1] = self.vx * psi[:, 0] + self.v11 * psi[:, 1]
        if self.jl != 0.0:
            out[1:] -= self.jl * psi[:-1]
            out[:-1] -= self.jl * psi[1:]
        return out

    def apply_flat(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v.reshape(self.n_sites, 2)).reshape(-1)

    def to_sparse(self) -> sp.csr_matrix:
        """Assemble as CSR in interleaved ordering (site-major, channel-minor)."""
        n = self.n_sites
        diag = np.empty(2 * n)
        diag[0::2] = self.v00
        diag[1::2] = self.v11
        off1 = np.zeros(2 * n - 1)
        off1[0::2] = self.vx  # couples (i,0)-(i,1)
        off2 = np.full(2 * n - 2, -self.jl)  # couples (i,r)-(i+1,r)
        return sp.diags([off2, off1, diag, off1, off2],
                        offsets=[-2, -1, 0, 1, 2], format="csr")

    def banded(self) -> np.ndarray:
        """LAPACK banded storage (lower/upper bandwidth 2) of the matrix."""
        n2 = self.dim
        ab = np.zeros((5, n2), dtype=complex)
        ab[2, 0::2] = self.v00
        ab[2, 1::2] = self.v11
        ab[1, 1::2] = self.vx   # superdiagonal
        ab[3, 0:-1:2] = self.vx  # subdiagonal
        ab[0, 2:] = -self.jl    # second superdiagonal
        ab[4, :-2] = -self.jl   # second subdiagonal
        return ab

    def spectral_bounds(self) -> tuple[float, float]:
        """Cheap rigorous Gershgorin enclosure of the spectrum."""
        if self._bounds is not None:
            return self._bounds
        radius = np.abs(self.vx) + 2.0 * abs(self.jl)
        lo = min(np.min(self.v00 - radius), np.min(self.v11 - radius))
        hi = max(np.max(self.v00 + radius), np.max(self.v11 + radius))
        object.__setattr__(self, "_bounds", (float(lo), float(hi)))
        return self._bounds

    def expectation(self, psi: np.ndarray) -> float:
        """<psi|H|psi> * dR for a field of shape (n, 2)."""
        return float(np.real(np.vdot(psi, self.apply(psi))) * self.grid.dR)

    def assert_hermitian(self, tol: float = 1e-14):
        m = self.to_sparse()
        dev = abs(m - m.T.conjugate())
        worst = dev.max() if dev.nnz else 0.0
        if worst > tol:
            raise AssertionError(f"Hamiltonian not Hermitian: max dev {worst}")


@dataclass(frozen=True)
class ChannelHamiltonian:
    """Single-channel nuclear Hamiltonian T + eps(R) used for adiabatic runs;
    same kinetic discretization as the full operator."""

    eps: np.ndarray
    jl: float
    grid: GridSpec
    _bounds: tuple = field(default=None, compare=False, repr=False)

    @property
    def dim(self) -> int:
        return self.grid.n_points

    def apply(self, chi: np.ndarray) -> np.ndarray:
        out = (self.eps + 2.0 * self.jl) * chi
        if self.jl != 0.0:
            out[1:] -= self.jl * chi[:-1]
            out[:-1] -= self.jl * chi[1:]
        return out

    apply_flat = apply

    def to_sparse(self) -> sp.csr_matrix:
        diag = self.eps + 2.0 * self.jl
        off = np.full(self.dim - 1, -self.jl)
        return sp.diags([off, diag, off], offsets=[-1, 0, 1], format="csr")

    def banded(self) -> np.ndarray:
        ab = np.zeros((3, self.dim), dtype=complex)
        ab[1] = self.eps + 2.0 * self.jl
        ab[0, 1:] = -self.jl
        ab[2, :-1] = -self.jl
        return ab

    def spectral_bounds(self) -> tuple[float, float]:
        if self._bounds is not None:
            return self._bounds
        radius = 2.0 * abs(self.jl)
        diag = self.eps + 2.0 * self.jl
        object.__setattr__(
            self, "_bounds",
            (float(np.min(diag - radius)), float(np.max(diag + radius))))
        return self._bounds

    def expectation(self, chi: np.ndarray) -> float:
        return float(np.real(np.vdot(chi, self.apply(chi))) * self.grid.dR)


def assemble_hamiltonian(params: ModelParams, grid: GridSpec) -> Hamiltonian:
    """Build the full two-channel Hamiltonian and verify hermiticity."""
    V0, Vx = eval_potentials(params, grid)
    shift = 2.0 * params.JL
    h = Hamiltonian(v00=V0 + params.g0 / 2.0 + shift,
                    v11=V0 - params.g0 / 2.0 + shift,
                    vx=Vx, jl=params.JL, grid=grid)
    h.assert_hermitian()
    return h


def channel_hamiltonian(params: ModelParams, grid: GridSpec, bo: BOData,
                        k: int) -> ChannelHamiltonian:
    eps = bo.eps0 if k == 0 else bo.eps1
    return ChannelHamiltonian(eps=eps, jl=params.JL, grid=grid)


_DENSE_CUTOFF = 64


def energy_width(h, tol: float = 1e-6) -> float:
    """Spectral range E_max - E_min of a Hamiltonian.

    Small operators are diagonalized densely; otherwise both spectral edges
    are found with ARPACK (deterministic fixed start vector). Used to form
    the dimensionless time omega_B * t.
    """
    if h.dim <= _DENSE_CUTOFF:
        ev = np.linalg.eigvalsh(h.to_sparse().toarray())
        return float(ev[-1] - ev[0])
    m = h.to_sparse()
    v0 = np.ones(h.dim) / np.sqrt(h.dim)
    try:
        hi = spla.eigsh(m, k=1, which="LA", tol=tol, v0=v0,
                        return_eigenvectors=False)[0]
        lo = spla.eigsh(m, k=1, which="SA", tol=tol, v0=v0,
                        return_eigenvectors=False)[0]
    except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
        raise ConvergenceError(f"extremal eigenvalue iteration failed: {exc}")
    return float(hi - lo)
