import itertools
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mgsim.errors import DiagnosticError
from mgsim.experiments import (absorbing_ball_study, absorbing_radius, one_sided_hausdorff,
                               semicontinuity_probe, strong_distance, trajectory_distance,
                               unforced_decay_rate, vanishing_viscosity_study, viscosity_continuity_fit,
                               weak_distance, weak_tail_bound)
from mgsim.solver import ForcingSpec, SolverConfig, integrate, random_initial_field
from mgsim.spectral_core import Lattice, SpectralField, negative_sobolev_norm

CFG16 = SolverConfig(n=16, T=0.5, snapshot_every=0.1, dt_max=0.01)


def pair(lat, k, amp=1.0):
    return SpectralField.from_modes(lat, {k: amp, tuple(-c for c in k): np.conj(amp)})


class TestNuSweep:
    def test_reference_only(self):
        th0 = random_initial_field(CFG16.lattice, 1, 1.0)
        rep = vanishing_viscosity_study([0.0], th0, 0.1, [0, 1], CFG16, ForcingSpec.random(1))
        assert rep.rows and all(e == 0 for *_, e in rep.rows)

    def test_single_mode_unforced(self):
        th0 = pair(CFG16.lattice, (1, 2, 1), 0.8)
        rep = vanishing_viscosity_study([1e-1, 1e-2], th0, 0.0, [0, 1], CFG16)
        assert max(e for *_, e in rep.rows) <= 1e-14

    def test_seeded_sweep_monotone(self):
        lat = CFG16.lattice
        rep = vanishing_viscosity_study([1e-1, 1e-2, 1e-3], random_initial_field(lat, 42, 1.0), 0.1, [0, 1],
                                        CFG16, ForcingSpec.random(7))
        assert rep.complete and not rep.monotone_violations()
        assert all(e >= 0 for *_, e in rep.rows)
        t, e = rep.errors(1e-3, 1)
        assert t.min() >= 0.1 - 1e-12 and len(t) == 5

    def test_validation(self):
        th0 = random_initial_field(CFG16.lattice, 1, 1.0)
        with pytest.raises(ValueError):
            vanishing_viscosity_study([1e-2, 1e-1], th0, 0.1, [0], CFG16)
        with pytest.raises(ValueError):
            vanishing_viscosity_study([-1.0], th0, 0.1, [0], CFG16)

    def test_unstable_member_marks_incomplete(self):
        cfg = SolverConfig(n=16, T=200.0, dt_policy="fixed", dt=5.0, snapshot_every=5.0)
        th0 = random_initial_field(cfg.lattice, 0, 1e8)
        rep = vanishing_viscosity_study([1e-1], th0, 0.0, [0], cfg)
        assert not rep.complete and 0.0 in rep.failures


class TestContinuityFit:
    def test_synthetic_power_law(self):
        nus = [1e-1, 1e-2, 1e-3, 1e-4]
        fit = viscosity_continuity_fit([(n, 0.0, 3.0 * n**1.3) for n in nus])
        assert fit.slope == pytest.approx(1.3, rel=1e-12) and fit.within(0.8, 1.6)

    def test_identical_pair_excluded(self):
        fit = viscosity_continuity_fit([(0.0, 0.0, 0.0), (0.1, 0.0, 0.1), (0.01, 0.0, 0.01), (1e-3, 0.0, 1e-3)])
        assert len(fit.excluded) == 1 and fit.slope == pytest.approx(1.0)

    def test_degenerate(self):
        fit = viscosity_continuity_fit([(0.1, 0.0, 0.0), (0.01, 0.0, 0.0), (1e-3, 0.0, 0.0)])
        assert fit.degenerate and np.isnan(fit.slope) and not fit.within(0, 10)

    def test_too_few_pairs(self):
        with pytest.raises(ValueError, match="at least 3"):
            viscosity_continuity_fit([(0.1, 0.0, 1.0), (0.01, 0.0, 0.1)])
        with pytest.raises(ValueError):
            viscosity_continuity_fit([(0.1, 0.05, 1.0)] * 3)

    def test_linear_regime_degenerate(self):
        cfg = SolverConfig(n=16, T=0.3, snapshot_every=0.1, linear=True)
        th0 = random_initial_field(cfg.lattice, 4, 1.0)
        rep = vanishing_viscosity_study([1e-1, 1e-2, 1e-3], th0, 0.1, [0], cfg, ForcingSpec.random(4))
        assert rep.continuity_fit(0.3).degenerate


class TestAbsorbingBall:
    def test_radius(self):
        f = ForcingSpec.random(7)
        lat = Lattice.cubic(16)
        R = absorbing_radius(f, lat, 2.0, 0.1)
        assert R == pytest.approx(1.1 * negative_sobolev_norm(f.to_field(lat)) / 2.0)
        with pytest.raises(ValueError):
            absorbing_radius(f, lat, 1.0, 0.0)

    def test_trivial_ball(self):
        cfg = SolverConfig(n=8, T=0.5, snapshot_every=0.25)
        probe = absorbing_ball_study(cfg, ForcingSpec(), seeds=(0,), factors=(0.0,))
        assert probe.radius == 0 and probe.passed
        assert probe.runs[0].entry_time == 0.0

    def test_small_forced_ensemble(self):
        cfg = SolverConfig(n=16, T=6.0, snapshot_every=0.5, dt_max=0.05)
        probe = absorbing_ball_study(cfg, ForcingSpec.random(7), seeds=(0, 1), factors=(0.1, 10.0))
        assert probe.passed and probe.radius > probe.s_hminus1
        entries = probe.entry_times
        assert entries[("0.1R", 0)] == 0.0 and entries[("10R", 1)] > 0
        dists = probe.pairwise_distances()
        assert set(dists) == {("0.1R", 0, 1), ("10R", 0, 1)}

    def test_unforced_decay_rate(self):
        cfg = SolverConfig(n=16, T=2.0, snapshot_every=0.5)
        th0 = random_initial_field(cfg.lattice, 5, 4.0)
        assert unforced_decay_rate(cfg, th0) >= cfg.kappa
        slow = pair(cfg.lattice, (0, 0, 1))
        assert unforced_decay_rate(cfg, slow) == pytest.approx(1.0, rel=1e-9)


def _coeffs(lat, seed):
    return random_initial_field(lat, seed, 1.0, band=4)


class TestDistances:
    def test_weak_example(self):
        lat = Lattice.cubic(8)
        a = SpectralField.from_modes(lat, {(1, 0, 0): 1, (-1, 0, 0): 1})
        assert weak_distance(a, SpectralField.zeros(lat)) == pytest.approx(0.5, rel=1e-15)

    def test_identical_trajectories(self):
        traj = integrate(CFG16, random_initial_field(CFG16.lattice, 1, 1.0), ForcingSpec.random(1))
        d = trajectory_distance(traj, traj)
        assert not np.any(d.d_s) and not np.any(d.d_w) and len(d.times) == 6

    def test_tail_bound_reported(self):
        tail = weak_tail_bound(8)
        # the tail of sum 2^-|k| over Z^3 beyond |k|_inf = 8 is of order 1, not small
        assert 1 < tail < 20
        assert weak_tail_bound(20) < weak_tail_bound(8)

    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_metric_axioms(self, s1, s2, s3):
        lat = Lattice.cubic(8)
        a, b, c = (_coeffs(lat, s) * (1 + s % 5) for s in (s1, s2, s3))
        dab, dba = weak_distance(a, b), weak_distance(b, a)
        assert dab == dba and weak_distance(a, a) == 0
        assert weak_distance(a, c) <= dab + weak_distance(b, c) + 1e-12
        assert strong_distance(a, c) <= strong_distance(a, b) + strong_distance(b, c) + 1e-12
        sel = lat.kinf <= 8
        full = float(np.sum(np.where(sel, 2.0 ** -np.sqrt(lat.ksq), 0.0)))
        assert dab <= full + weak_tail_bound(8)

    def test_zero_iff_equal_truncation(self):
        lat = Lattice.cubic(16)
        a = _coeffs(lat, 1)
        b = a + pair(lat, (7, 0, 1), 1.0)
        assert weak_distance(a, b, K_w=6) == 0 and weak_distance(a, b, K_w=7) > 0

    def test_lattice_mismatch(self):
        with pytest.raises(ValueError):
            weak_distance(SpectralField.zeros(Lattice.cubic(8)), SpectralField.zeros(Lattice.cubic(16)))


class TestSemicontinuity:
    def test_reference_only(self):
        cfg = SolverConfig(n=8, T=1.0, dt_max=0.05)
        rep = semicontinuity_probe([0.0], cfg, ForcingSpec.random(1), seeds=(0,), burn_in=10.0, window=1.0)
        assert rep.hausdorff[0.0] == 0 and rep.label == "empirical proxy"

    def test_unforced_collapse(self):
        cfg = SolverConfig(n=8, dt_max=0.1)
        rep = semicontinuity_probe([1e-1, 1e-2], cfg, ForcingSpec(), seeds=(0,), burn_in=25.0, window=2.0)
        assert max(rep.hausdorff.values()) <= 1e-8

    def test_burn_in_guard(self):
        cfg = SolverConfig(n=8, dt_max=0.05)
        with pytest.raises(DiagnosticError, match="burn-in"):
            semicontinuity_probe([1e-1], cfg, ForcingSpec.random(1), seeds=(0,), burn_in=0.5, window=0.5,
                                 initial_factor=20.0)

    def test_hausdorff_seed_relabeling(self):
        lat = Lattice.cubic(8)
        cloud = [_coeffs(lat, s) for s in range(6)]
        ref = [_coeffs(lat, s) for s in range(10, 14)]
        h = one_sided_hausdorff(cloud, ref)
        for perm in itertools.islice(itertools.permutations(range(6)), 20):
            shuffled = [cloud[i] for i in perm]
            ref2 = ref[:]
            random.Random(perm[0]).shuffle(ref2)
            assert one_sided_hausdorff(shuffled, ref2) == h
        assert one_sided_hausdorff(ref, ref) == 0
