import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal

import arcdyn as ad
from arcdyn.efactor import masked_derivative


class TestMarginal:
    def test_initial_gaussian(self, params, grid, bo):
        psi = ad.initial_component(0, params, grid, bo)
        chi = ad.initial_chi(params, grid)
        assert np.allclose(ad.marginal_density(psi), np.abs(chi) ** 2,
                           atol=1e-15)

    def test_zero_field(self, grid):
        psi = ad.SpinorField(np.zeros((grid.n_points, 2), complex), grid)
        assert np.all(ad.marginal_density(psi) == 0.0)

    def test_frozen_without_hopping(self, grid, schedule):
        p = ad.ModelParams(JL=0.0)
        rec = ad.run_component(0, p, grid, schedule, scheme="chebyshev",
                               tol=1e-15)
        n0 = np.abs(ad.initial_chi(p, grid)) ** 2
        for f in rec.fields:
            assert np.abs(ad.marginal_density(f) - n0).max() < 1e-10


class TestExtractFactors:
    def test_initial_factor_is_bo_state(self, params, grid, bo):
        psi = ad.initial_component(1, params, grid, bo)
        y_abs, phi, valid = ad.extract_factors(psi)
        dots = np.einsum("ij,ij->i", bo.evec1[valid], phi[valid].real)
        assert np.allclose(np.abs(dots), 1.0, atol=1e-12)
        assert np.abs(phi[valid].imag).max() < 1e-12

    def test_partial_normalization(self, runs):
        for f in runs["sup"].fields:
            _, phi, valid = ad.extract_factors(f)
            norms = np.einsum("ij,ij->i", np.conj(phi[valid]), phi[valid])
            assert np.abs(norms - 1.0).max() < 1e-12

    def test_reconstruction(self, runs):
        # y_abs * phi matches psi after one per-point phase
        f = runs["sup"].fields[-1]
        y_abs, phi, valid = ad.extract_factors(f)
        y = ad.y_complex(f, phi, valid)
        rebuilt = (y[:, None] * phi)[valid]
        assert np.abs(rebuilt - f.values[valid]).max() < 1e-12

    def test_below_floor_masked(self, grid):
        vals = np.zeros((grid.n_points, 2), complex)
        vals[100] = (0.6, 0.8)
        vals[101] = (1e-10, 0.0)
        psi = ad.SpinorField(vals, grid)
        _, _, valid = ad.extract_factors(psi, eps_den=1e-12)
        assert valid[100] and not valid[101] and not valid[0]

    def test_global_phase_invariance(self, runs):
        f = runs[0].fields[-1]
        y1, phi1, v1 = ad.extract_factors(f)
        shifted = ad.SpinorField(f.values * np.exp(1.37j), f.grid, f.time)
        y2, phi2, v2 = ad.extract_factors(shifted)
        assert np.array_equal(v1, v2)
        assert np.allclose(y1, y2, atol=1e-13)
        assert np.abs(phi1[v1] - phi2[v1]).max() < 1e-12  # gauge-fixed


class TestOverlapField:
    def test_zero_at_start(self, params, grid, bo):
        p0 = ad.initial_component(0, params, grid, bo)
        p1 = ad.initial_component(1, params, grid, bo)
        ov, valid = ad.overlap_field(p0, p1)
        assert np.abs(ov[valid]).max() < 1e-12

    def test_zero_without_coupling(self, grid, schedule):
        p = ad.ModelParams(gx=0.0)
        r0 = ad.run_component(0, p, grid, schedule, tol=1e-13)
        r1 = ad.run_component(1, p, grid, schedule, tol=1e-13)
        for f0, f1 in zip(r0.fields, r1.fields):
            ov, valid = ad.overlap_field(f0, f1)
            assert np.abs(ov[valid]).max() < 1e-10

    def test_bounded_by_one(self, runs):
        for f0, f1 in zip(runs[0].fields, runs[1].fields):
            ov, valid = ad.overlap_field(f0, f1)
            assert np.abs(ov[valid]).max() <= 1.0 + 1e-10

    def test_two_computation_paths(self, runs):
        # |overlap| equals |n01| / (|Y0| |Y1|) pointwise
        f0, f1 = runs[0].fields[-1], runs[1].fields[-1]
        ov, valid = ad.overlap_field(f0, f1)
        n01 = ad.cross_density(f0, f1)
        y0 = np.sqrt(ad.marginal_density(f0))
        y1 = np.sqrt(ad.marginal_density(f1))
        ref = np.abs(n01[valid]) / (y0[valid] * y1[valid])
        assert np.abs(np.abs(ov[valid]) - ref).max() < 1e-10

    def test_gauge_invariance_of_magnitude(self, runs):
        rng = np.random.default_rng(11)
        f0, f1 = runs[0].fields[-1], runs[1].fields[-1]
        ov, valid = ad.overlap_field(f0, f1)
        for _ in range(3):
            a, b = np.exp(2j * np.pi * rng.random(2))
            g0 = ad.SpinorField(f0.values * a, f0.grid, f0.time)
            g1 = ad.SpinorField(f1.values * b, f1.grid, f1.time)
            ov2, v2 = ad.overlap_field(g0, g1)
            assert np.array_equal(valid, v2)
            assert np.abs(np.abs(ov2[v2]) - np.abs(ov[valid])).max() < 1e-10

    def test_adiabatic_null(self, runs, bo):
        # factors evolved adiabatically keep exactly zero overlap
        for c0, c1 in zip(runs["ad0"].fields, runs["ad1"].fields):
            s0 = ad.adiabatic_spinor(c0, bo)
            s1 = ad.adiabatic_spinor(c1, bo)
            ov, valid = ad.overlap_field(s0, s1)
            assert np.abs(ov[valid]).max() < 1e-12


class TestVectorPotential:
    def test_zero_for_real_factors(self, params, grid, bo):
        psi = ad.initial_component(0, params, grid, bo)
        _, phi, valid = ad.extract_factors(psi)
        a, ok = ad.vector_potential(phi, valid, grid)
        assert np.abs(a[ok]).max() < 1e-10

    def test_constant_factor(self, grid):
        phi = np.tile([0.6, 0.8], (grid.n_points, 1)).astype(complex)
        a, ok = ad.vector_potential(phi, np.ones(grid.n_points, bool), grid)
        assert np.abs(a[ok]).max() < 1e-14

    def test_plane_wave_gauge_shift(self, params):
        # multiplying by exp(i lam R) shifts A by lam (analytic oracle);
        # the discrete stencil realizes the shift up to O(dR^2) terms
        g = ad.GridSpec(1501, 0.02)
        psi = ad.initial_component(0, params, g, ad.diagonalize_bo(params, g))
        _, phi, valid = ad.extract_factors(psi)
        a0, ok0 = ad.vector_potential(phi, valid, g)
        lam = 0.2
        shifted = phi * np.exp(1j * lam * g.coords())[:, None]
        a1, ok1 = ad.vector_potential(shifted, valid, g)
        inner = ok0 & ok1
        assert np.abs(a1[inner] - a0[inner] - lam).max() < 2.5e-3

    def test_short_segments_masked(self, grid):
        phi = np.ones((grid.n_points, 2), complex) / np.sqrt(2)
        valid = np.zeros(grid.n_points, bool)
        valid[50] = True  # isolated point, below stencil width
        valid[60:62] = True
        _, ok = ad.vector_potential(phi, valid, grid)
        assert not ok.any()


class TestMomentumFunction:
    def test_initial_gaussian_quantum_momentum(self, params, bo):
        # Im p = R / sigma^2 for the initial Gaussian (analytic derivative)
        g = ad.GridSpec(1501, 0.02)
        psi = ad.initial_component(0, params, g, ad.diagonalize_bo(params, g))
        _, phi, valid = ad.extract_factors(psi)
        a, ok = ad.vector_potential(phi, valid, g)
        y = ad.y_complex(psi, phi, valid)
        p, okp = ad.momentum_function(y, a, ok, g)
        R = g.coords()
        sel = okp & (np.abs(R) < 2.0)
        assert np.abs(p[sel].imag - R[sel]).max() < 2e-3
        # real initial field carries no current
        assert np.abs(p[sel].real).max() < 1e-10

    def test_stationary_state_has_no_current(self, params, grid, bo):
        # ground state of the lower adiabatic channel, then propagate:
        # Re p stays 0 while Im p tracks the (real) profile
        hk = ad.channel_hamiltonian(params, grid, bo, 0)
        w, q = eigh_tridiagonal(np.real(hk.eps + 2 * hk.jl),
                                np.full(grid.n_points - 1, -hk.jl))
        chi = q[:, 0] / np.sqrt(np.sum(q[:, 0] ** 2) * grid.dR)
        state = ad.AdiabaticChannel(chi.astype(complex), 0, grid, 0.0)
        for _ in range(5):
            state = ad.propagate(state, hk, dt=0.1, tol=1e-13)
        spin = ad.adiabatic_spinor(state, bo)
        _, phi, valid = ad.extract_factors(spin)
        a, ok = ad.vector_potential(phi, valid, grid)
        y = ad.y_complex(spin, phi, valid)
        p, okp = ad.momentum_function(y, a, ok, grid)
        dens = np.abs(state.chi) ** 2
        sel = okp & (dens > 1e-4 * dens.max())
        assert np.abs(p[sel].real).max() < 1e-8


def test_momentum_and_current_gauge_invariant(runs, bo, params, grid):
    f0, f1 = runs[0].fields[-1], runs[1].fields[-1]
    d_ref = ad.compute_diagnostics(f0, f1, bo, params, grid)
    rng = np.random.default_rng(21)
    for _ in range(2):
        a, b = np.exp(2j * np.pi * rng.random(2))
        g0 = ad.SpinorField(f0.values * a, grid, f0.time)
        g1 = ad.SpinorField(f1.values * b, grid, f1.time)
        d = ad.compute_diagnostics(g0, g1, bo, params, grid)
        for k in range(2):
            m = d.p_validity[k] & d_ref.p_validity[k]
            assert np.abs(d.quantum_momentum[k][m]
                          - d_ref.quantum_momentum[k][m]).max() < 1e-10
            assert np.abs(d.current[k][m] - d_ref.current[k][m]).max() < 1e-10
        mm = d.overlap_validity & d_ref.overlap_validity
        assert np.abs(np.abs(d.overlap[mm])
                      - np.abs(d_ref.overlap[mm])).max() < 1e-10


class TestTdpes:
    def test_initial_surface(self, params, grid, bo):
        for k, eps in ((0, bo.eps0), (1, bo.eps1)):
            psi = ad.initial_component(k, params, grid, bo)
            _, phi, valid = ad.extract_factors(psi)
            gi, _, ok = ad.tdpes_gi_part(phi, valid, bo, params, grid)
            assert np.abs(gi[valid] - eps[valid]).max() < 1e-10

    def test_kinetic_part_nonnegative(self, runs, bo, params, grid):
        f = runs["sup"].fields[-1]
        _, phi, valid = ad.extract_factors(f)
        _, ena, ok = ad.tdpes_gi_part(phi, valid, bo, params, grid)
        assert ena[ok].min() >= 0.0

    def test_flat_for_constant_factor(self, grid, params, bo):
        p = ad.ModelParams(gx=0.0)
        bo0 = ad.diagonalize_bo(p, grid)
        psi = ad.initial_component(0, p, grid, bo0)
        _, phi, valid = ad.extract_factors(psi)
        _, ena, ok = ad.tdpes_gi_part(phi, valid, bo0, p, grid)
        assert np.abs(ena[ok]).max() < 1e-12


class TestDiagnosticsBundle:
    def test_shapes_and_consistency(self, runs, bo, params, grid):
        f0, f1 = runs[0].fields[1], runs[1].fields[1]
        d = ad.compute_diagnostics(f0, f1, bo, params, grid)
        n0 = ad.marginal_density(f0)
        assert np.abs(d.y_abs[0] ** 2 - n0)[d.overlap_validity].max() < 1e-12
        n01 = ad.cross_density(f0, f1)
        v = d.overlap_validity
        ref = d.y_abs[0][v] * d.y_abs[1][v] * np.abs(d.overlap[v])
        assert np.abs(np.abs(n01[v]) - ref).max() < 1e-10
        assert d.quantum_momentum.shape == (2, grid.n_points)
        assert not d.has_gauge_term

    def test_gauge_term_reported_from_neighbors(self, runs, bo, params, grid):
        f0a, f0b = runs[0].fields[0], runs[0].fields[2]
        f1a, f1b = runs[1].fields[0], runs[1].fields[2]
        dt = runs[0].times[2] - runs[0].times[0]
        d = ad.compute_diagnostics(
            runs[0].fields[1], runs[1].fields[1], bo, params, grid,
            neighbors=[(f0a, f0b, dt), (f1a, f1b, dt)])
        assert d.has_gauge_term
        assert d.gauge_term.shape == (2, grid.n_points)
        assert np.isfinite(d.gauge_term).all()


def test_masked_derivative_segments():
    validity = np.array([True, True, True, False, True, True, True, True])
    x = np.arange(8.0)
    d, ok = masked_derivative(x ** 2, validity, 1.0)
    assert ok.tolist() == validity.tolist()
    assert d[1] == pytest.approx(2.0)   # central inside first segment
    assert d[5] == pytest.approx(10.0)  # central inside second segment
    assert d[0] == pytest.approx(0.0)   # one-sided, exact for quadratic
