"""Post-processing of trajectories: energy ledger, L-infinity envelope,
De Giorgi level-set energies and space-time oscillation.

All integrals over the torus are volume averages (the same normalization
as the spectral norms), evaluated on the collocation grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DiagnosticError
from .solver import EnergyLedger, ForcingSpec, SimState, Trajectory
from .spectral_core import SpectralField, gradient, inverse_transform, l2_norm, linf_norm

DE_GIORGI_C = 10.0


def energy_terms(theta: SpectralField, forcing_field: SpectralField, kappa: float):
    """(E, D, I) = (1/2 |theta|^2, kappa |grad theta|^2, <S, theta>)."""
    a2 = np.abs(theta.coeffs) ** 2
    E = 0.5 * float(np.sum(a2))
    D = kappa * float(np.sum(theta.lattice.ksq * a2))
    I = float(np.real(np.vdot(theta.coeffs, forcing_field.coeffs)))
    return E, D, I


def update_ledger(ledger: EnergyLedger, state: SimState, forcing: ForcingSpec, kappa: float,
                  flux: float = 0.0) -> EnergyLedger:
    """Append one row for ``state``; D and I are accumulated trapezoidally."""
    S = forcing.to_field(state.theta.lattice)
    E, D, I = energy_terms(state.theta, S, kappa)
    ledger.append(state.t, E, D, I, flux)
    return ledger


@dataclass
class LinfProfile:
    times: np.ndarray
    linf: np.ndarray
    ratio: np.ndarray

    @property
    def sup_ratio(self) -> float:
        return float(np.max(self.ratio, initial=0.0))


def linf_profile(traj: Trajectory, d: int = 3) -> LinfProfile:
    """sup-norm series and the envelope ratio
    |theta(t)|_inf / [(|theta_0|_2 + |S|_inf)(1 + t^{-d/2})]; the ratio is 0 at t = 0.
    """
    if not traj.snapshots:
        raise DiagnosticError("empty trajectory")
    S = traj.forcing.to_field(traj.lattice)
    scale = l2_norm(traj.snapshots[0]) + linf_norm(S)
    times = np.asarray(traj.times, float)
    linf = np.array([linf_norm(s) for s in traj.snapshots])
    ratio = np.zeros_like(linf)
    if scale > 0:
        pos = times > 0
        ratio[pos] = linf[pos] / (scale * (1 + times[pos] ** (-d / 2)))
    return LinfProfile(times, linf, ratio)


@dataclass
class LevelSetRecord:
    level: float
    truncation_energy: float
    gradient_energy: float
    measure: float


def _grid_data(theta: SpectralField):
    vals = inverse_transform(theta)
    grads = [inverse_transform(g) for g in gradient(theta)]
    return vals, grads


def level_set_records(theta: SpectralField, levels) -> list[LevelSetRecord]:
    """Energies of the truncations (theta - h)_+ for each level h."""
    vals, grads = _grid_data(theta)
    gsq = sum(g * g for g in grads)
    out = []
    for h in levels:
        pos = vals > h
        trunc = np.where(pos, vals - h, 0.0)
        out.append(LevelSetRecord(float(h), float(np.mean(trunc**2)),
                                  float(np.mean(np.where(pos, gsq, 0.0))), float(np.mean(pos))))
    return out


def de_giorgi_level(c0: float, t0: float, s_linf: float, d: int = 3, C: float = DE_GIORGI_C) -> float:
    """Truncation height C (c0^{1/2} / t0^{d/2} + |S|_inf^{-d/(d+4)} c0^{1/2})."""
    h = np.sqrt(c0) / t0 ** (d / 2)
    if s_linf > 0:
        h += s_linf ** (-d / (d + 4)) * np.sqrt(c0)
    return float(C * h)


def _trapz(y, x):
    y, x = np.asarray(y, float), np.asarray(x, float)
    if len(x) < 2:
        return 0.0
    return float(np.sum(0.5 * np.diff(x) * (y[1:] + y[:-1])))


def de_giorgi_sequence(traj: Trajectory, t0: float, H: float, n_max: int = 5) -> np.ndarray:
    """c_n = sup_{t_n <= t <= t0} int theta_n^2 + 2 int_{t_n}^{t_end} int |grad theta_n|^2

    with theta_n = (theta - h_n)_+, h_n = H (1 - 2^-n), t_n = t0 (1 - 2^-n).
    The time integral runs to the end of the stored trajectory.
    """
    times = np.asarray(traj.times, float)
    if len(times) < 2 or t0 <= 0 or t0 > times[-1] + 1e-12:
        raise DiagnosticError("trajectory does not cover [0, t0]")
    gaps = np.diff(times[times <= t0 + 1e-12])
    cadence = float(gaps.max()) if gaps.size else np.inf
    if cadence > t0 / 2 ** (n_max + 1) * (1 + 1e-9):
        raise DiagnosticError(f"insufficient cadence {cadence:g}; need <= t0/2^{n_max + 1}")
    grids = [_grid_data(s) for s in traj.snapshots]
    gsqs = [sum(g * g for g in grads) for _, grads in grids]
    c = np.zeros(n_max + 1)
    for n in range(n_max + 1):
        h = H * (1 - 2.0**-n)
        tn = t0 * (1 - 2.0**-n)
        trunc_e = np.zeros(len(times))
        grad_e = np.zeros(len(times))
        for i, ((vals, _), gsq) in enumerate(zip(grids, gsqs)):
            pos = vals > h
            trunc_e[i] = np.mean(np.where(pos, vals - h, 0.0) ** 2)
            grad_e[i] = np.mean(np.where(pos, gsq, 0.0))
        win = (times >= tn - 1e-12) & (times <= t0 + 1e-12)
        after = times >= tn - 1e-12
        c[n] = trunc_e[win].max(initial=0.0) + 2 * _trapz(grad_e[after], times[after])
    return c


def calibrated_de_giorgi(traj: Trajectory, t0: float, n_max: int = 5, C: float = DE_GIORGI_C):
    """Return (H, c) with H from the calibrated level formula and c0 measured at H = 0."""
    c0 = de_giorgi_sequence(traj, t0, 0.0, 0)[0]
    s_linf = linf_norm(traj.forcing.to_field(traj.lattice))
    H = de_giorgi_level(c0, t0, s_linf, traj.lattice.ndim, C)
    return H, de_giorgi_sequence(traj, t0, H, n_max)


def _periodic_ball(lattice, x0, rho):
    dist2 = 0.0
    for xi, ci in zip(lattice.grid(), x0):
        d = np.abs(xi - ci) % (2 * np.pi)
        d = np.minimum(d, 2 * np.pi - d)
        dist2 = dist2 + d * d
    return dist2 <= rho * rho


def oscillation(traj: Trajectory, t1: float, x0, r: float, R: float, delta0: float):
    """Oscillation (max - min) of theta over the cylinders
    [t1, t1 + delta0 rho^2] x B_rho(x0) for rho = r and rho = R.

    Returns ``(osc_inner, osc_outer)``.
    """
    if not (0 < r < R):
        raise ValueError("need 0 < r < R")
    times = np.asarray(traj.times, float)
    if t1 < times[0] - 1e-12 or t1 + delta0 * R * R > times[-1] + 1e-12:
        raise DiagnosticError("cylinder outside stored time window")
    lat = traj.lattice
    result = []
    for rho in (r, R):
        ball = _periodic_ball(lat, x0, rho)
        sel = (times >= t1 - 1e-12) & (times <= t1 + delta0 * rho * rho + 1e-12)
        if not ball.any() or not sel.any():
            raise DiagnosticError("cylinder contains no grid samples")
        lo, hi = np.inf, -np.inf
        for i in np.flatnonzero(sel):
            v = inverse_transform(traj.snapshots[i])[ball]
            lo, hi = min(lo, v.min()), max(hi, v.max())
        result.append(float(hi - lo))
    return tuple(result)
