from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_field
from mgsim.errors import GaugeViolationError
from mgsim.multipliers import (MG, apply_velocity, audit_divergence_free, audit_l2_convergence,
                               audit_symbol_convergence, audit_uniform_bound, convergence_bound,
                               mg_denominator, mg_symbol, mg_symbol_array, t_symbol)
from mgsim.spectral_core import Lattice, SpectralField, inverse_transform, project_mg_gauge


def exact_symbol(k, nu):
    """Rational evaluation straight from the definition."""
    k1, k2, k3 = (Fraction(c) for c in k)
    nu = Fraction(nu)
    ksq = k1 * k1 + k2 * k2 + k3 * k3
    a = k2 * k2 + nu * ksq * ksq
    d = ksq * k3 * k3 + a * a
    return ((k2 * k3 * ksq - k1 * k3 * a) / d, (-k1 * k3 * ksq - k2 * k3 * a) / d, (k1 * k1 + k2 * k2) * a / d)


wavevectors = st.tuples(st.integers(-40, 40), st.integers(-40, 40),
                        st.integers(-40, 40).filter(lambda c: c != 0))
viscosities = st.sampled_from([0, Fraction(1, 10**4), Fraction(1, 100), Fraction(1, 8), 1])


class TestSymbol:
    def test_vertical_mode_is_zero(self):
        assert mg_symbol((0, 0, 1), 0.0) == (0, 0, 0)
        assert mg_symbol((0, 0, 3), 0.7) == (0, 0, 0)

    def test_known_values(self):
        assert mg_symbol((1, 1, 1), 0.0) == pytest.approx((0.5, -1.0, 0.5), abs=1e-15)
        assert mg_denominator((1, 1, 1), 0.0) == 4
        assert mg_symbol((1, 1, 1), 1.0) == pytest.approx((-7 / 103, -13 / 103, 20 / 103), abs=1e-15)
        assert mg_denominator((1, 1, 1), 1.0) == 103

    def test_gauge_violation(self):
        with pytest.raises(GaugeViolationError, match="k3=0"):
            mg_symbol((1, 1, 0), 0.0)
        assert not np.any(mg_symbol_array(1, 2, 0, 0.3))

    @given(wavevectors, viscosities)
    def test_matches_rational_oracle(self, k, nu):
        got = mg_symbol(k, float(nu))
        want = exact_symbol(k, nu)
        scale = np.sqrt(sum(c * c for c in k))
        for g, w in zip(got, want):
            assert g == pytest.approx(float(w), abs=1e-14 * scale)

    @given(wavevectors, viscosities)
    def test_even_real_divergence_free(self, k, nu):
        m = np.array(mg_symbol(k, float(nu)))
        mneg = np.array(mg_symbol(tuple(-c for c in k), float(nu)))
        assert np.array_equal(m, mneg)
        kk = np.array(k, float)
        assert abs(kk @ m) <= 1e-12 * (np.linalg.norm(kk) * np.abs(m).max() + 1e-30)
        assert sum(c * w for c, w in zip(k, exact_symbol(k, nu))) == 0


class TestT:
    def test_examples(self):
        assert t_symbol((1, 1, 1), 0.0, 1, 2) == pytest.approx(1j / 3, abs=1e-15)
        for i in (1, 2, 3):
            for j in (1, 2, 3):
                assert t_symbol((0, 0, 1), 0.0, i, j) == 0

    @given(wavevectors, viscosities)
    def test_reconstruction_and_bound(self, k, nu):
        nu = float(nu)
        m = mg_symbol(k, nu)
        kn = np.sqrt(sum(c * c for c in k))
        for j in (1, 2, 3):
            rec = sum(1j * k[i - 1] * t_symbol(k, nu, i, j) for i in (1, 2, 3))
            assert abs(rec - m[j - 1]) <= 1e-12 * max(1.0, abs(m[j - 1]))
            for i in (1, 2, 3):
                assert abs(t_symbol(k, nu, i, j)) <= abs(m[j - 1]) / kn * (1 + 1e-12)

    def test_family_matrix_agrees(self):
        tm = MG.t_matrix(2, -1, 3, 0.05)
        for i in range(3):
            for j in range(3):
                assert tm[i, j] == pytest.approx(t_symbol((2, -1, 3), 0.05, i + 1, j + 1), abs=1e-15)


class TestVelocity:
    def test_zero(self, lat8):
        assert all(not np.any(u.coeffs) for u in apply_velocity(SpectralField.zeros(lat8), 0.0))

    def test_single_pair(self, lat8):
        th = SpectralField.from_modes(lat8, {(1, 1, 1): 1, (-1, -1, -1): 1})
        u = apply_velocity(th, 0.0)
        for comp, want in zip(u, (0.5, -1.0, 0.5)):
            assert comp.coeff((1, 1, 1)) == pytest.approx(want)
            assert comp.coeff((-1, -1, -1)) == pytest.approx(want)

    def test_real_valued(self, lat16):
        th = project_mg_gauge(random_field(lat16, 5))
        for comp in apply_velocity(th, 0.01):
            assert comp.hermitian_defect() <= 1e-12
            assert np.iscomplexobj(comp.coeffs)
            assert np.isrealobj(inverse_transform(comp))

    def test_rejects_gauge_violation(self, lat8):
        with pytest.raises(GaugeViolationError):
            apply_velocity(random_field(lat8, 1), 0.0)


class TestAudits:
    @pytest.mark.parametrize("nu", [0.0, 1.0])
    def test_divergence(self, nu):
        assert audit_divergence_free(nu, 16) <= 1e-12

    def test_divergence_trivial_window(self):
        assert audit_divergence_free(0.3, 1) <= 1e-15

    def test_uniform_bound(self):
        rep = audit_uniform_bound([1e-4, 1e-2, 1.0], 64)
        assert rep.component1 <= 3
        c2 = audit_uniform_bound([0.0], 64).per_component
        assert np.all(np.isfinite(c2))
        # stability under doubling of the window
        small = audit_uniform_bound([1e-4, 1e-2, 1.0], 32).per_component
        assert np.all(np.abs(rep.per_component - small) <= 0.01 * rep.per_component)

    def test_decay_for_positive_nu(self):
        nu = 0.1
        def shell_max(K):
            r = np.arange(-K, K + 1)
            k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij", sparse=True)
            on = np.maximum.reduce([np.abs(np.broadcast_to(c, (2 * K + 1,) * 3)) for c in (k1, k2, k3)]) == K
            return np.abs(mg_symbol_array(k1, k2, k3, nu))[:, on].max()
        assert shell_max(32) <= shell_max(16) <= shell_max(8)

    def test_convergence_bound_values(self):
        assert convergence_bound(0.1, 2) == pytest.approx(491.52)
        rep = audit_symbol_convergence(0.1, 2)
        assert rep.analytic_bound == pytest.approx(491.52) and rep.passed
        assert audit_symbol_convergence(0.0, 4).empirical == 0

    def test_convergence_monotone_in_nu(self):
        sups = [audit_symbol_convergence(2.0**-m, 4).empirical for m in range(1, 12)]
        assert all(b < a for a, b in zip(sups, sups[1:]))

    def test_l2_convergence(self, lat8):
        th = SpectralField.from_modes(lat8, {(1, 1, 1): 1, (-1, -1, -1): 1})
        want = 2 * ((-7 / 103 - 0.5) ** 2 + (-13 / 103 + 1) ** 2 + (20 / 103 - 0.5) ** 2)
        assert audit_l2_convergence(1.0, th) == pytest.approx(want, rel=1e-14)
        assert audit_l2_convergence(0.0, th) == 0

    def test_l2_convergence_monotone(self, lat16):
        g = project_mg_gauge(random_field(lat16, 9, band=4))
        vals = [audit_l2_convergence(10.0**-m, g) for m in range(1, 6)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
