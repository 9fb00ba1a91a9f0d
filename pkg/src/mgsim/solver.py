"""Pseudo-spectral time integration of the forced MG^nu active scalar equation.

    d_t theta + u . grad theta = kappa Lap theta + S,   u = M^nu[theta]

The state lives in the real-FFT half spectrum internally.  Diffusion is
integrated exactly by ``exp(-kappa |k|^2 dt)``; advection and forcing are
advanced by a second-order exponential Runge-Kutta rule (Cox-Matthews
ETD-RK2) or by IMEX-Euler.  The quadratic term is evaluated in physical
space with 2/3-rule truncation of both the inputs and the product, which
makes the discrete flux <u . grad theta, theta> vanish to round-off.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .errors import GaugeViolationError, UnstableStepError
from .multipliers import MG, ZERO, MultiplierFamily
from .spectral_core import Lattice, SpectralField

log = logging.getLogger(__name__)

EPS_FLOOR = 1e-30
OVERFLOW = 1e150
INTEGRATORS = ("etd-rk2", "imex-euler")


@lru_cache(maxsize=8)
def _cubic_lattice(n: int) -> Lattice:
    return Lattice.cubic(n)


@dataclass(frozen=True)
class SolverConfig:
    kappa: float = 1.0
    nu: float = 0.0
    n: int = 32
    T: float = 1.0
    integrator: str = "etd-rk2"
    dt_policy: str = "cfl"          # "cfl" or "fixed"
    dt: float = 1e-3                # step size under "fixed"
    c_cfl: float = 0.5
    dt_max: float = 0.05
    snapshot_every: float = 0.1
    linear: bool = False            # zero multiplier family: pure forced heat equation
    ledger_tol: float = 0.0         # >0 caps dt so the trapezoidal energy ledger drifts < tol*E per unit time

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")
        if not (0 < self.c_cfl <= 1):
            raise ValueError("c_cfl must lie in (0, 1]")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.dt_policy not in ("cfl", "fixed"):
            raise ValueError("dt_policy must be 'cfl' or 'fixed'")
        if self.T < 0 or self.dt <= 0 or self.dt_max <= 0 or self.snapshot_every <= 0:
            raise ValueError("T must be >= 0 and dt, dt_max, snapshot_every > 0")
        if self.ledger_tol < 0:
            raise ValueError("ledger_tol must be nonnegative")

    @property
    def lattice(self) -> Lattice:
        return _cubic_lattice(self.n)

    @property
    def family(self) -> MultiplierFamily:
        return ZERO if self.linear else MG


@dataclass(frozen=True)
class ForcingSpec:
    """Finite list of forcing modes ``((k1, k2, k3), amplitude)``.

    The -k partner is added as the complex conjugate when absent; a partner
    that is present must already be the conjugate.
    """

    modes: tuple = ()

    def __post_init__(self):
        table: dict[tuple[int, int, int], complex] = {}
        for k, amp in self.modes:
            k = tuple(int(c) for c in k)
            if len(k) != 3:
                raise ValueError(f"forcing wavevector {k} is not three dimensional")
            if k == (0, 0, 0):
                raise ValueError("forcing must have zero mean: k=(0,0,0) not allowed")
            if k[2] == 0:
                raise GaugeViolationError(f"gauge violation: k3=0 in forcing mode {k}")
            amp = complex(amp)
            if k in table and abs(table[k] - amp) > 1e-14 * max(1.0, abs(amp)):
                raise ValueError(f"forcing mode {k} listed twice with different amplitudes")
            table[k] = amp
        closed = dict(table)
        for k, amp in table.items():
            mk = tuple(-c for c in k)
            if mk in table:
                if abs(table[mk] - amp.conjugate()) > 1e-12 * max(1.0, abs(amp)):
                    raise ValueError(f"forcing modes {k} and {mk} are not complex conjugates")
            else:
                closed[mk] = amp.conjugate()
        object.__setattr__(self, "modes", tuple(sorted(closed.items())))

    @classmethod
    def random(cls, seed: int, kmax: int = 2, norm: float = 1.0) -> "ForcingSpec":
        """Seeded forcing on gauge-admissible |k|_inf <= kmax with |S_k| ~ |k|^-2."""
        rng = np.random.default_rng(seed)
        modes = []
        r = range(-kmax, kmax + 1)
        for k1 in r:
            for k2 in r:
                for k3 in range(1, kmax + 1):
                    ksq = k1 * k1 + k2 * k2 + k3 * k3
                    modes.append(((k1, k2, k3), np.exp(2j * np.pi * rng.random()) / ksq))
        total = 2 * sum(abs(a) ** 2 for _, a in modes)
        scale = norm / math.sqrt(total)
        return cls(tuple((k, a * scale) for k, a in modes))

    def to_field(self, lattice: Lattice) -> SpectralField:
        return SpectralField.from_modes(lattice, dict(self.modes))

    @property
    def is_zero(self) -> bool:
        return all(a == 0 for _, a in self.modes)


def random_initial_field(lattice: Lattice, seed: int, norm: float, band: int | None = None,
                         slope: float = -2.0) -> SpectralField:
    """Seeded gauge-valid data with |theta_k| ~ |k|^slope on |k|_inf <= band."""
    band = lattice.dims[0] // 4 if band is None else band
    rng = np.random.default_rng(seed)
    noise = sfft.fftn(rng.standard_normal(lattice.dims))
    mod = np.abs(noise)
    phase = np.divide(noise, mod, out=np.zeros_like(noise), where=mod > 0)
    ksq = lattice.ksq
    amp = np.where(ksq > 0, np.maximum(ksq, 1.0) ** (slope / 2), 0.0)
    keep = (lattice.kinf <= band) & lattice.gauge_mask
    for kk, n in zip(lattice.k, lattice.dims):
        keep = keep & (np.abs(kk) < n // 2)
    c = np.where(keep, amp * phase, 0.0)
    nrm = np.sqrt(np.sum(np.abs(c) ** 2))
    if nrm == 0 or norm == 0:
        return SpectralField.zeros(lattice)
    return SpectralField(lattice, c * (norm / nrm))


@dataclass
class SimState:
    t: float
    theta: SpectralField
    _velocity: tuple | None = field(default=None, repr=False)

    def velocity(self, nu: float, family: MultiplierFamily = MG) -> tuple[SpectralField, ...]:
        if self._velocity is None:
            m = family.on_lattice(self.theta.lattice, nu)
            self._velocity = tuple(SpectralField(self.theta.lattice, m[j] * self.theta.coeffs)
                                   for j in range(3))
        return self._velocity


def _phi_functions(z: np.ndarray):
    """phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2 for z <= 0."""
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    em1 = np.expm1(zs)
    phi1 = np.where(small, 1 + z / 2 + z * z / 6 + z**3 / 24, em1 / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z * z / 24 + z**3 / 120, (em1 - zs) / (zs * zs))
    return phi1, phi2


class Stepper:
    """Precomputed operators for one (config, forcing) pair, half-spectrum layout."""

    def __init__(self, config: SolverConfig, forcing: ForcingSpec | None = None):
        self.config = config
        lat = config.lattice
        self.lattice = lat
        self.ksq = lat.ksq_half
        self.weight = lat.half_weight
        gauge = np.broadcast_to(lat.k_half[2] != 0, lat.half_shape)
        dmask = np.ones(lat.half_shape, dtype=bool)
        for kk, n in zip(lat.k_half, lat.dims):
            dmask = dmask & (3 * np.abs(kk) <= n)
        self.gauge = gauge
        self.keep = gauge & dmask
        self.symbol = config.family.on_lattice(lat, config.nu, half=True) * self.keep
        self.linear = not np.any(self.symbol)
        ik = np.stack([1j * np.broadcast_to(kk, lat.half_shape) * self.keep for kk in lat.k_odd_half])
        # transform normalization folded into the operators
        self.ops = np.concatenate([self.symbol.astype(complex), ik]) * lat.size
        self.keep_fwd = self.keep / lat.size
        self._coeff_cache: dict[float, tuple] = {}
        self._hist: list[tuple[float, float, float]] = []
        self._rate3 = 0.0
        self.forcing = forcing or ForcingSpec()
        self.S = self.forcing.to_field(lat).half.copy()
        self.kmax_sq = float(lat.ksq.max())
        self.last_u_linf = 0.0
        self.last_flux = 0.0

    # -- physics ------------------------------------------------------
    def _to_phys(self, spec):
        return sfft.irfftn(spec * self.lattice.size, s=self.lattice.dims, axes=(1, 2, 3))

    def _to_spec(self, phys):
        return sfft.rfftn(phys) / self.lattice.size

    # overflow is detected by _check, so numpy's own warnings are redundant
    @np.errstate(over="ignore", invalid="ignore")
    def advection(self, th: np.ndarray, record: bool = False) -> np.ndarray:
        """Half-spectrum coefficients of u . grad theta, truncated and gauge-projected."""
        if self.linear:
            if record:
                self.last_u_linf, self.last_flux = 0.0, 0.0
            return np.zeros_like(th)
        spec = self.ops * th
        phys = sfft.irfftn(spec, s=self.lattice.dims, axes=(1, 2, 3), overwrite_x=True)
        u, g = phys[:3], phys[3:]
        prod = u[0] * g[0] + u[1] * g[1] + u[2] * g[2]
        out = sfft.rfftn(prod) * self.keep_fwd
        if record:
            self.last_u_linf = float(np.max(np.abs(u)))
            flux = float(np.sum(self.weight * np.real(out * np.conj(th))))
            scale = (np.sqrt(np.mean(u * u, axis=(1, 2, 3)).sum())
                     * np.sqrt(np.mean(g * g, axis=(1, 2, 3)).sum())
                     * np.sqrt(np.sum(self.weight * np.abs(th) ** 2)))
            self.last_flux = abs(flux) / scale if scale > 0 else 0.0
        return out

    def rhs(self, th, record=False):
        return self.S - self.advection(th, record)

    def velocity_linf(self, th: np.ndarray) -> float:
        if self.linear:
            return 0.0
        return float(np.max(np.abs(self._to_phys(self.symbol * th))))

    # -- stepping -------------------------------------------------------
    def cfl_dt(self, u_linf: float, quantize: bool = False) -> float:
        """c_cfl dx / |u|_inf, capped by dt_max (and the diffusive limit for IMEX).

        With ``ledger_tol`` set, the step is further limited so that the
        trapezoidal error of the dissipation/injection integrals, dt^2 / 12
        * |(D - I)''|, stays below ledger_tol * E.  ``quantize`` rounds down to
        a geometric ladder dt_max * 2^(-m/8) so ETD coefficients can be reused.
        """
        c = self.config
        dt = c.c_cfl * self.lattice.dx / (u_linf + EPS_FLOOR)
        cap = c.dt_max
        if c.integrator == "imex-euler":
            cap = min(cap, c.c_cfl / (c.kappa * self.kmax_sq))
        if c.ledger_tol > 0:
            cap = min(cap, self._ledger_cap())
        dt = min(dt, cap)
        if quantize and dt < c.dt_max:
            m = math.ceil(-8 * math.log2(dt / c.dt_max) - 1e-9)
            dt = c.dt_max * 2.0 ** (-m / 8)
        return dt

    def _etd_coeffs(self, dt: float):
        hit = self._coeff_cache.get(dt)
        if hit is not None:
            return hit
        z = -self.config.kappa * self.ksq * dt
        phi1, phi2 = _phi_functions(z)
        out = (np.exp(z), dt * phi1, dt * phi2)
        if len(self._coeff_cache) < 64:
            self._coeff_cache[dt] = out
        return out

    def begin(self, th: np.ndarray) -> np.ndarray:
        """First-stage right-hand side; also records |u|_inf and the flux defect."""
        return self.rhs(th, record=True)

    @np.errstate(over="ignore", invalid="ignore")
    def finish(self, th: np.ndarray, f0: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0:
            return th.copy()
        kap = self.config.kappa
        if self.config.integrator == "imex-euler":
            new = (th + dt * f0) / (1 + kap * self.ksq * dt)
        else:
            E, c1, c2 = self._etd_coeffs(dt)
            a = E * th + c1 * f0
            f1 = self.rhs(a)
            new = a + c2 * (f1 - f0)
        new = np.where(self.gauge, new, 0)
        self._check(new)
        return new

    def step(self, th: np.ndarray, dt: float) -> np.ndarray:
        return self.finish(th, self.begin(th), dt)

    def _check(self, th):
        bad = ~np.isfinite(th) | (np.abs(th) > OVERFLOW)
        if bad.any():
            idx = np.unravel_index(int(np.argmax(bad)), th.shape)
            k = tuple(int(np.broadcast_to(kk, th.shape)[idx]) for kk in self.lattice.k_half)
            raise UnstableStepError(f"unstable step: non-finite or overflowing coefficient at k={k}", mode=k)

    # -- energy bookkeeping ---------------------------------------------
    @np.errstate(over="ignore", invalid="ignore")
    def energy_terms(self, th):
        w = self.weight
        a2 = np.abs(th) ** 2
        E = 0.5 * float(np.sum(w * a2))
        D = self.config.kappa * float(np.sum(w * self.ksq * a2))
        I = float(np.sum(w * np.real(self.S * np.conj(th))))
        if self.config.ledger_tol > 0 and not self._hist and E > 0:
            # free-decay estimate of |(D - I)''| / E, used before any history exists
            rate = 2 * self.config.kappa * self.ksq
            self._rate3 = 0.5 * float(np.sum(w * rate**3 * a2)) / E
        return E, D, I

    def observe(self, t: float, E: float, D: float, I: float) -> None:
        """Record an accepted ledger row for the step-size controller."""
        self._hist.append((t, D - I, E))
        del self._hist[:-3]

    def _ledger_cap(self) -> float:
        tol = self.config.ledger_tol
        if len(self._hist) < 3:
            return math.sqrt(12 * tol / self._rate3) if self._rate3 > 0 else self.config.dt
        (t0, f0, _), (t1, f1, _), (t2, f2, E) = self._hist
        h0, h1 = t1 - t0, t2 - t1
        if h0 <= 0 or h1 <= 0:
            return h1 if h1 > 0 else self.config.dt
        f2nd = 2 * abs((f2 - f1) / h1 - (f1 - f0) / h0) / (h0 + h1)
        cap = math.sqrt(12 * tol * E / f2nd) if f2nd > 0 else np.inf
        return min(cap, 1.25 * h1)


def nonlinear_term(theta: SpectralField, nu: float, family: MultiplierFamily = MG) -> SpectralField:
    """Spectral coefficients of u . grad theta with u = M^nu[theta]."""
    if theta.gauge_defect() > 0:
        raise GaugeViolationError("gauge violation: theta carries k3=0 modes")
    cfg = SolverConfig(n=theta.lattice.dims[0], nu=nu, linear=family is ZERO)
    if theta.lattice.dims != cfg.lattice.dims:
        raise ValueError("nonlinear_term needs a cubic lattice")
    st = Stepper(cfg)
    st.symbol = family.on_lattice(theta.lattice, nu, half=True) * st.keep
    st.linear = not np.any(st.symbol)
    return SpectralField.from_half(theta.lattice, st.advection(theta.half))


def _checked_state(state: SimState, config: SolverConfig):
    if state.theta.lattice != config.lattice:
        raise ValueError(f"state lattice {state.theta.lattice.dims} differs from config N={config.n}")
    if state.theta.gauge_defect() > 0:
        raise GaugeViolationError("gauge violation: theta carries k3=0 modes")


def step(state: SimState, dt: float, config: SolverConfig, forcing: ForcingSpec | None = None,
         stepper: Stepper | None = None) -> SimState:
    """Advance one step of size ``dt``; ``dt = 0`` returns an identical copy."""
    _checked_state(state, config)
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    st = stepper or Stepper(config, forcing)
    new = st.step(state.theta.half, dt)
    return SimState(state.t + dt, SpectralField.from_half(config.lattice, new))


def cfl_dt(state: SimState, config: SolverConfig) -> float:
    st = Stepper(config)
    return st.cfl_dt(st.velocity_linf(state.theta.half))


@dataclass
class LedgerRow:
    t: float
    energy: float
    dissipation: float
    injection: float
    residual: float
    flux_defect: float


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)
    _cum_d: float = 0.0
    _cum_i: float = 0.0

    def append(self, t, E, D, I, flux=0.0):
        if self.rows:
            prev = self.rows[-1]
            h = t - prev.t
            self._cum_d += 0.5 * h * (prev.dissipation + D)
            self._cum_i += 0.5 * h * (prev.injection + I)
            res = abs(E - self.rows[0].energy + self._cum_d - self._cum_i)
        else:
            res = 0.0
        self.rows.append(LedgerRow(t, E, D, I, res, flux))

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def max_energy(self):
        return max((r.energy for r in self.rows), default=0.0)

    @property
    def relative_residual(self):
        m = self.max_energy
        return max((r.residual for r in self.rows), default=0.0) / m if m > 0 else 0.0

    def window_residual(self, i0: int, i1: int) -> float:
        """Residual of the energy identity restricted to rows i0..i1."""
        t, E = self.column("t")[i0:i1 + 1], self.column("energy")[i0:i1 + 1]
        D, I = self.column("dissipation")[i0:i1 + 1], self.column("injection")[i0:i1 + 1]
        h = np.diff(t)
        return float(abs(E[-1] - E[0] + np.sum(0.5 * h * (D[1:] + D[:-1]))
                         - np.sum(0.5 * h * (I[1:] + I[:-1]))))


@dataclass
class Trajectory:
    config: SolverConfig
    forcing: ForcingSpec
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    ledger: EnergyLedger = field(default_factory=EnergyLedger)
    dt_history: list = field(default_factory=list)
    complete: bool = True

    @property
    def lattice(self):
        return self.config.lattice

    def at(self, t: float, tol: float = 1e-9) -> SpectralField:
        for ti, snap in zip(self.times, self.snapshots):
            if abs(ti - t) <= tol:
                return snap
        raise KeyError(f"no snapshot at t={t}")

    @property
    def final(self) -> SpectralField:
        return self.snapshots[-1]

    def metadata(self) -> dict:
        c = self.config
        return {
            "nu": c.nu, "kappa": c.kappa, "N": c.n, "T": c.T, "integrator": c.integrator,
            "dt_policy": c.dt_policy, "c_cfl": c.c_cfl, "dt_max": c.dt_max, "linear": c.linear,
            "snapshot_every": c.snapshot_every, "steps": len(self.dt_history),
            "dt_min": min(self.dt_history, default=0.0), "dt_max_used": max(self.dt_history, default=0.0),
            "complete": self.complete,
            "forcing": [[*k, a.real, a.imag] for k, a in self.forcing.modes],
        }


def integrate(config: SolverConfig, theta0: SpectralField, forcing: ForcingSpec | None = None,
              dt_schedule=None, on_step=None) -> Trajectory:
    """Run from t = 0 to ``config.T``, snapshotting every ``snapshot_every``.

    ``dt_schedule`` replays a recorded sequence of steps (used to give
    members of a nu-sweep an identical time discretization).  On an
    unstable step the partial trajectory is attached to the raised
    :class:`UnstableStepError`.
    """
    forcing = forcing or ForcingSpec()
    state = SimState(0.0, theta0)
    _checked_state(state, config)
    st = Stepper(config, forcing)
    traj = Trajectory(config, forcing)
    th = theta0.half.copy()
    t = 0.0
    traj.times.append(0.0)
    traj.snapshots.append(theta0)
    E, D, I = st.energy_terms(th)
    st.observe(0.0, E, D, I)
    traj.ledger.append(0.0, E, D, I)
    if config.T == 0:
        return traj
    n_snap = max(1, int(round(config.T / config.snapshot_every)))
    snap_times = [config.T * (i + 1) / n_snap for i in range(n_snap)]
    next_snap = 0
    schedule = iter(dt_schedule) if dt_schedule is not None else None
    stop = config.T * (1 - 1e-14)
    while t < stop:
        f0 = st.begin(th)
        if schedule is not None:
            try:
                dt = next(schedule)
            except StopIteration:
                raise ValueError("dt_schedule ended before T") from None
        else:
            dt = config.dt if config.dt_policy == "fixed" else st.cfl_dt(st.last_u_linf, quantize=True)
            target = snap_times[next_snap]
            if t + dt >= target - 1e-12 * max(1.0, target):
                dt = target - t
        try:
            th = st.finish(th, f0, dt)
        except UnstableStepError as exc:
            exc.t = t
            traj.complete = False
            exc.partial = traj
            raise
        t_new = t + dt
        if next_snap < len(snap_times) and abs(t_new - snap_times[next_snap]) <= 1e-12 * max(1.0, t_new):
            t_new = snap_times[next_snap]
        t = t_new
        traj.dt_history.append(dt)
        E, D, I = st.energy_terms(th)
        st.observe(t, E, D, I)
        traj.ledger.append(t, E, D, I, st.last_flux)
        if next_snap < len(snap_times) and t >= snap_times[next_snap] - 1e-12:
            traj.times.append(t)
            traj.snapshots.append(SpectralField.from_half(config.lattice, th))
            next_snap += 1
        if on_step is not None:
            on_step(t, th)
    return traj


def with_nu(config: SolverConfig, nu: float) -> SolverConfig:
    return replace(config, nu=nu)
