import numpy as np
import pytest
from scipy.linalg import expm

import arcdyn as ad
from arcdyn.errors import (InsufficientSeries, QuadratureError,
                           ScheduleMismatch)


@pytest.fixture(scope="module")
def zf_pair(params, grid, bo, omega_b):
    mesh = np.linspace(0.0, 2.0, 201)
    a0 = ad.run_adiabatic(0, params, grid, mesh, bo=bo, omega_b=omega_b,
                          tol=1e-13)
    a1 = ad.run_adiabatic(1, params, grid, mesh, bo=bo, omega_b=omega_b,
                          tol=1e-13)
    return (ad.zeroth_factors(0, bo, a0), ad.zeroth_factors(1, bo, a1))


class TestZerothOrder:
    def test_factors_stay_orthogonal(self, zf_pair):
        zf0, zf1 = zf_pair
        for i in (0, 100, 200):
            dots = np.einsum("ij,ij->i", np.conj(zf0.phi0(i)), zf1.phi0(i))
            assert np.abs(dots).max() < 1e-14

    def test_initial_quantum_momentum(self, zf_pair, grid):
        p0 = zf_pair[0].p0(0)
        R = grid.coords()
        sel = zf_pair[0].validity & (np.abs(R) < 2.0)
        # O(dR^2) stencil error on this coarse grid, ~R (R dR)^2 / 6
        assert np.abs(p0[sel].imag - R[sel]).max() < 1e-2
        assert np.abs(p0[sel].real).max() < 1e-10

    def test_requires_adiabatic_record(self, runs, bo):
        with pytest.raises(ScheduleMismatch):
            ad.zeroth_factors(0, bo, runs[0])

    def test_requires_uniform_mesh(self, params, grid, bo, omega_b):
        rec = ad.run_adiabatic(0, params, grid, [0.0, 1.0, 4.0], bo=bo,
                               omega_b=omega_b)
        with pytest.raises(ScheduleMismatch):
            ad.zeroth_factors(0, bo, rec)


class TestApplyEnc:
    def test_trivial_zero(self, grid):
        phi = np.tile([1.0, 0.0], (grid.n_points, 1)).astype(complex)
        out = ad.apply_enc(phi, np.zeros(grid.n_points, complex),
                           np.zeros(grid.n_points), grid, jl=1.0)
        assert np.abs(out).max() < 1e-14

    def test_stencil_guard(self):
        g = ad.GridSpec(1, 1.0)
        with pytest.raises(ad.StencilError):
            ad.apply_enc(np.ones((1, 2), complex), np.zeros(1, complex),
                         np.zeros(1), g, jl=1.0)

    def test_non_hermitian_with_imaginary_momentum(self):
        # build the dense matrix column by column on a small grid
        g = ad.GridSpec(31, 0.2)
        n = g.n_points
        rng = np.random.default_rng(5)
        p_field = 1j * rng.standard_normal(n)  # purely imaginary momentum
        a_field = np.zeros(n)
        dim = 2 * n
        mat = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            e = np.zeros((n, 2), dtype=complex)
            e[col // 2, col % 2] = 1.0
            mat[:, col] = _enc_linear_part(e, p_field, a_field, g).reshape(-1)
        dev = np.abs(mat - mat.conj().T).max()
        assert dev > 1e-3

    def test_hermitian_with_constant_real_momentum_interior(self):
        # contrast case: a constant real momentum gives a Hermitian
        # correlation operator away from the one-sided boundary rows
        g = ad.GridSpec(31, 0.2)
        n = g.n_points
        p_field = np.full(n, 0.8, dtype=complex)
        a_field = np.zeros(n)
        dim = 2 * n
        mat = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            e = np.zeros((n, 2), dtype=complex)
            e[col // 2, col % 2] = 1.0
            mat[:, col] = _enc_linear_part(e, p_field, a_field, g).reshape(-1)
        core = mat[4:-4, 4:-4]
        dev = np.abs(core - core.conj().T).max()
        assert dev < 1e-12

    def test_partial_norm_consistency(self, params):
        # Im <phi|enc phi> integrates to ~0: the EOM preserves <phi|phi>
        g = ad.GridSpec(2001, 0.01)
        bo = ad.diagonalize_bo(params, g)
        w = ad.energy_width(ad.assemble_hamiltonian(params, g))
        mesh = np.linspace(0.0, 1.0, 11)
        a0 = ad.run_adiabatic(0, params, g, mesh, bo=bo, omega_b=w,
                              tol=1e-13)
        zf = ad.zeroth_factors(0, bo, a0)
        i = 10
        phi = zf.phi0(i)
        out = ad.apply_enc(phi, zf.p0(i), zf.a0(i), g, jl=params.JL)
        im = np.imag(np.einsum("ij,ij->i", np.conj(phi), out))
        weight = np.abs(zf.chi[i]) ** 2
        val = zf.validity
        integral = np.sum(weight[val] * im[val]) * g.dR
        assert abs(integral) < 1e-8


def _enc_linear_part(phi, p_field, a_field, grid):
    """apply_enc without the eps_NA feedback, which is quadratic in phi;
    what remains is the linear operator whose hermiticity is under test.
    Only valid for a_field = 0."""
    full = ad.apply_enc(phi, p_field, a_field, grid, jl=1.0)
    dR = grid.dR
    lap = np.empty_like(phi)
    lap[1:-1] = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / dR ** 2
    lap[0] = (phi[2] - 2 * phi[1] + phi[0]) / dR ** 2
    lap[-1] = (phi[-3] - 2 * phi[-2] + phi[-1]) / dR ** 2
    uk = dR ** 2 * (-lap)
    eps_na = np.real(np.einsum("ij,ij->i", np.conj(phi), uk))
    return full + eps_na[:, None] * phi


class TestS1Overlap:
    def test_zero_at_t0(self, zf_pair):
        res = ad.s1_overlap(0, 1, zf_pair[0], zf_pair[1], t=0.0)
        assert np.all(res.s1 == 0.0)

    def test_zero_without_coupling(self, grid, omega_b):
        p = ad.ModelParams(gx=0.0)
        bo = ad.diagonalize_bo(p, grid)
        mesh = np.linspace(0.0, 1.0, 21)
        a0 = ad.run_adiabatic(0, p, grid, mesh, bo=bo, omega_b=omega_b)
        a1 = ad.run_adiabatic(1, p, grid, mesh, bo=bo, omega_b=omega_b)
        res = ad.s1_overlap(0, 1, ad.zeroth_factors(0, bo, a0),
                            ad.zeroth_factors(1, bo, a1))
        assert np.abs(res.s1[res.validity]).max() < 1e-12

    def test_quadrature_doubling_stable(self, params, grid, bo, omega_b):
        vals = {}
        for panels in (100, 200):
            mesh = np.linspace(0.0, 1.0, panels + 1)
            a0 = ad.run_adiabatic(0, params, grid, mesh, bo=bo,
                                  omega_b=omega_b, tol=1e-13)
            a1 = ad.run_adiabatic(1, params, grid, mesh, bo=bo,
                                  omega_b=omega_b, tol=1e-13)
            res = ad.s1_overlap(0, 1, ad.zeroth_factors(0, bo, a0),
                                ad.zeroth_factors(1, bo, a1))
            vals[panels] = res
        v = vals[100].validity & vals[200].validity
        diff = np.abs(vals[200].s1 - vals[100].s1)[v].max()
        assert diff <= 1e-6 * np.abs(vals[200].s1[v]).max()

    def test_coarse_mesh_rejected(self, params, grid, bo, omega_b):
        mesh = np.linspace(0.0, 2.0, 3)  # 2 panels over a fast phase sweep
        a0 = ad.run_adiabatic(0, params, grid, mesh, bo=bo, omega_b=omega_b)
        a1 = ad.run_adiabatic(1, params, grid, mesh, bo=bo, omega_b=omega_b)
        with pytest.raises(QuadratureError):
            ad.s1_overlap(0, 1, ad.zeroth_factors(0, bo, a0),
                          ad.zeroth_factors(1, bo, a1))

    def test_prediction_tracks_exact(self, zf_pair, params, grid, bo, ham,
                                     omega_b):
        # first-order magnitude agrees with the full dynamics at the
        # overlap maximum on this strongly coupled lattice
        t = zf_pair[0].times[-1]
        res = ad.s1_overlap(0, 1, zf_pair[0], zf_pair[1])
        r0 = ad.run_component(0, params, grid, [t * omega_b], bo=bo, h=ham,
                              omega_b=omega_b, tol=1e-13)
        r1 = ad.run_component(1, params, grid, [t * omega_b], bo=bo, h=ham,
                              omega_b=omega_b, tol=1e-13)
        exact, val = ad.aligned_exact_overlap(r0.fields[0], r1.fields[0], bo)
        m = val & res.validity
        i = np.argmax(np.abs(exact) * m)
        assert abs(res.s1[i] - exact[i]) / abs(exact[i]) < 0.05


class TestHermitianControl:
    def test_state_independent_hermitian_keeps_orthogonality(self, bo, grid):
        # ordinary Hermitian perturbations rotate both factors with one
        # pointwise unitary, so initially orthogonal states stay orthogonal
        rng = np.random.default_rng(12)
        n = 41
        sel = slice(80, 80 + n)
        t = 0.7
        for i in range(80, 80 + n, 8):
            h_el = np.array([[0.5 + 0.0j, 10.0], [10.0, -0.5]])
            v = rng.standard_normal((2, 2))
            v = v + v.T  # Hermitian, state independent
            u = expm(-1j * t * (h_el + v))
            f0 = u @ bo.evec0[i]
            f1 = u @ bo.evec1[i]
            assert abs(np.vdot(f0, f1)) < 1e-13


class TestCompareOrders:
    def test_needs_three_values(self, grid):
        z = np.zeros(grid.n_points, complex)
        v = np.ones(grid.n_points, bool)
        with pytest.raises(InsufficientSeries):
            ad.compare_orders([1.0, 2.0], [z, z], [z, z], [v, v], grid)

    def test_series_scaling_on_fine_grid(self, params):
        # residual of the first-order prediction falls as lambda^2:
        # halving JL shrinks it by ~4 (second-order remainder)
        g = ad.GridSpec(3001, 0.005)
        ser = ad.perturbation_series(params, g, [1.0, 2.0, 4.0],
                                     wbt_read=5.0, quad_steps=200)
        comp = ser.comparison
        assert 1.6 <= comp.slope <= 2.4
        r = comp.residual_at_r0
        for ratio in (r[1] / r[0], r[2] / r[1]):
            assert 4.0 / 1.5 <= ratio <= 4.0 * 1.5
        # leading-order match at the smallest JL
        jl, ex, pr, res = comp.table[0]
        assert res / ex < 0.30

    def test_zero_jl_entry_tolerated(self, params):
        g = ad.GridSpec(1201, 0.0125)
        ser = ad.perturbation_series(params, g, [0.0, 1.0, 2.0, 4.0],
                                     wbt_read=2.0, quad_steps=100)
        row = ser.comparison.table[0]
        assert row[1] < 1e-10 and row[2] < 1e-10  # exact and prediction

    def test_insufficient_positive_values(self, params, grid):
        with pytest.raises(InsufficientSeries):
            ad.perturbation_series(params, grid, [0.0, 1.0, 2.0])
