import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_field
from mgsim.errors import GaugeViolationError, LatticeError
from mgsim.spectral_core import (Lattice, ShellDecomposition, SpectralField, besov_norm, dealias,
                                 forward_transform, gradient, inverse_transform, l2_norm, laplacian,
                                 negative_sobolev_norm, project_mg_gauge, shell_project, sobolev_norm,
                                 tail_fraction)

seeds = st.integers(0, 2**31 - 1)


class TestLattice:
    def test_rejects_odd_and_small(self):
        with pytest.raises(LatticeError):
            Lattice.cubic(31)
        with pytest.raises(LatticeError):
            Lattice.cubic(6)

    def test_wavenumber_range(self, lat8):
        for kk in lat8.k:
            assert kk.min() == -3 and kk.max() == 4
        assert lat8.index_of((0, 0, 0)) == (0, 0, 0)
        assert lat8.wavevector_at(lat8.index_of((-3, 4, 1))) == (-3, 4, 1)
        with pytest.raises(LatticeError):
            lat8.index_of((5, 0, 0))

    def test_half_weight_counts_full_lattice(self, lat8):
        w = np.broadcast_to(lat8.half_weight, lat8.half_shape)
        assert w.sum() == lat8.size

    def test_generic_dimension(self):
        lat = Lattice((8, 10))
        f = random_field(lat, 3)
        assert np.allclose(inverse_transform(f), inverse_transform(forward_transform(inverse_transform(f))))


class TestTransforms:
    def test_zero(self, lat8):
        assert not np.any(forward_transform(np.zeros(lat8.dims)).coeffs)

    def test_cosine(self, lat8):
        x1 = lat8.grid()[0]
        f = forward_transform(2 * np.cos(x1))
        assert f.coeff((1, 0, 0)) == pytest.approx(1.0, abs=1e-15)
        assert f.coeff((-1, 0, 0)) == pytest.approx(1.0, abs=1e-15)
        c = f.coeffs.copy()
        c[lat8.index_of((1, 0, 0))] = c[lat8.index_of((-1, 0, 0))] = 0
        assert np.abs(c).max() < 1e-15

    @given(seeds)
    def test_round_trip(self, seed):
        lat = Lattice.cubic(8)
        u = np.random.default_rng(seed).standard_normal(lat.dims)
        back = inverse_transform(forward_transform(u))
        assert np.max(np.abs(back - u)) <= 1e-12 * np.max(np.abs(u))

    @given(seeds)
    def test_parseval(self, seed):
        lat = Lattice.cubic(8)
        u = np.random.default_rng(seed).standard_normal(lat.dims)
        assert l2_norm(forward_transform(u)) ** 2 == pytest.approx(np.mean(u * u), rel=1e-10)

    def test_rejects_complex_and_mismatch(self, lat8):
        with pytest.raises(LatticeError):
            forward_transform(np.zeros(lat8.dims, complex))
        with pytest.raises(LatticeError):
            forward_transform(np.zeros((8, 8, 10)), lat8)


class TestProjections:
    def test_dealias_cutoff(self, lat8):
        f = SpectralField.from_modes(lat8, {(3, 0, 1): 1, (-3, 0, -1): 1, (2, 0, 1): 1, (-2, 0, -1): 1})
        g = dealias(f)
        assert g.coeff((3, 0, 1)) == 0 and g.coeff((2, 0, 1)) == 1

    def test_dealias_nyquist_removed(self, lat8):
        assert not np.any(dealias(SpectralField.from_modes(lat8, {(4, 0, 0): 1})).coeffs)

    def test_dealias_keeps_band(self, lat16):
        f = random_field(lat16, 1, band=5)
        assert np.array_equal(dealias(f).coeffs, f.coeffs)

    def test_gauge(self, lat8):
        f = SpectralField.from_modes(lat8, {(1, 1, 0): 1, (-1, -1, 0): 1})
        assert not np.any(project_mg_gauge(f).coeffs)
        g = SpectralField.from_modes(lat8, {(1, 1, 1): 1, (-1, -1, -1): 1})
        assert np.array_equal(project_mg_gauge(g).coeffs, g.coeffs)
        with pytest.raises(GaugeViolationError):
            f.check_gauge()

    @given(seeds)
    def test_idempotent_and_commuting(self, seed):
        f = random_field(Lattice.cubic(8), seed)
        p, d = project_mg_gauge, dealias
        assert np.array_equal(p(p(f)).coeffs, p(f).coeffs)
        assert np.array_equal(d(d(f)).coeffs, d(f).coeffs)
        assert np.array_equal(p(d(f)).coeffs, d(p(f)).coeffs)


class TestDerivativesAndNorms:
    def test_gradient_of_cosine_pair(self, lat8):
        f = SpectralField.from_modes(lat8, {(1, 0, 0): 1, (-1, 0, 0): 1})
        g1 = inverse_transform(gradient(f)[0])
        assert np.allclose(g1, -2 * np.sin(lat8.grid()[0]), atol=1e-14)

    @given(seeds)
    def test_plancherel_gradient(self, seed):
        lat = Lattice.cubic(8)
        f = random_field(lat, seed, band=3)
        lhs = sum(l2_norm(g) ** 2 for g in gradient(f))
        assert lhs == pytest.approx(float(np.sum(lat.ksq * np.abs(f.coeffs) ** 2)), rel=1e-12)
        assert lhs == pytest.approx(sobolev_norm(f, 1) ** 2, rel=1e-12)
        assert -np.real(np.vdot(f.coeffs, laplacian(f).coeffs)) == pytest.approx(lhs, rel=1e-12)

    def test_sobolev_examples(self, lat8):
        assert sobolev_norm(SpectralField.zeros(lat8), 1.5) == 0
        f = SpectralField.from_modes(lat8, {(1, 1, 1): 1, (-1, -1, -1): 1})
        assert sobolev_norm(f, 1) == pytest.approx(np.sqrt(6), rel=1e-15)
        assert negative_sobolev_norm(f) == pytest.approx(np.sqrt(2 / 3), rel=1e-15)
        with pytest.raises(ValueError):
            sobolev_norm(f, -1)

    @given(seeds)
    def test_hermitian_preserved(self, seed):
        lat = Lattice.cubic(8)
        f = random_field(lat, seed)
        for g in (dealias(f), project_mg_gauge(f), laplacian(f), *gradient(f), f + f, f - f, 2.5 * f, -f):
            assert g.hermitian_defect() <= 1e-12

    def test_tail_fraction(self, lat16):
        assert tail_fraction(random_field(lat16, 2, band=4)) == 0
        assert tail_fraction(SpectralField.from_modes(lat16, {(5, 0, 1): 1, (-5, 0, -1): 1})) == 1


class TestShells:
    def test_support(self):
        sh = ShellDecomposition()
        lo, hi = sh.support
        assert lo >= 0.5 and hi <= 4
        r = np.linspace(0, 6, 6001)
        phi = sh.phi(r)
        assert np.all(phi[(r <= 0.5) | (r >= 4)] == 0)
        assert np.all(phi >= 0)

    def test_partition_of_unity(self, lat16):
        assert ShellDecomposition().partition_defect(lat16) <= 1e-6

    def test_reconstruction(self, lat16):
        f = random_field(lat16, 4)
        f = SpectralField(lat16, np.where(lat16.ksq > 0, f.coeffs, 0))
        total = sum(shell_project(f, j).coeffs for j in ShellDecomposition().j_range(lat16))
        assert np.max(np.abs(total - f.coeffs)) <= 1e-6 * np.max(np.abs(f.coeffs))

    def test_outside_support_is_zero(self, lat8):
        f = SpectralField.from_modes(lat8, {(0, 0, 1): 1, (0, 0, -1): 1})
        assert not np.any(shell_project(f, 3).coeffs)
        assert not np.any(shell_project(SpectralField.zeros(lat8), 0).coeffs)

    @given(seeds)
    def test_besov_b022_equivalent_to_l2(self, seed):
        lat = Lattice.cubic(8)
        f = random_field(lat, seed, band=3)
        ratio = besov_norm(f, 0, 2, 2) / l2_norm(SpectralField(lat, np.where(lat.ksq > 0, f.coeffs, 0)))
        assert 0.5 <= ratio <= 2

    def test_besov_single_shell_q_independent(self, lat16):
        sh = ShellDecomposition()
        # |k| = 3 lies only in the j = 1 block (phi(3/2) = 1)
        f = SpectralField.from_modes(lat16, {(3, 0, 0): 1, (-3, 0, 0): 1})
        vals = [besov_norm(f, 1.0, 2, q) for q in (1, 2, np.inf)]
        assert sh.phi(1.5) == pytest.approx(1.0)
        assert np.allclose(vals, vals[0], rtol=1e-12)
        assert besov_norm(SpectralField.zeros(lat16), 1, 3, 2) == 0
        assert besov_norm(f, 0, np.inf, np.inf) == pytest.approx(2.0, rel=1e-12)
