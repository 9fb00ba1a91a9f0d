"""Desk-scale studies of the small-viscosity limit and of long-time behaviour.

Each (nu, seed) run is independent; ``workers > 1`` farms runs out to a
process pool and the reports are assembled afterwards in submission order,
so results do not depend on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DiagnosticError, UnstableStepError
from .solver import ForcingSpec, SolverConfig, Trajectory, integrate, random_initial_field
from .spectral_core import SpectralField, l2_norm, negative_sobolev_norm, sobolev_norm

ERROR_FLOOR = 1e-10
PROXY_LABEL = "empirical proxy"


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def _run(config, theta0, forcing, schedule=None):
    """Integrate; returns (trajectory, error message or None)."""
    try:
        return integrate(config, theta0, forcing, dt_schedule=schedule), None
    except UnstableStepError as exc:
        return exc.partial, str(exc)


# ------------------------------------------------------------ nu sweeps

@dataclass
class NuSweepReport:
    nu_list: tuple
    tau: float
    s_list: tuple
    rows: list = field(default_factory=list)        # (nu, t, s, error)
    complete: bool = True
    failures: dict = field(default_factory=dict)    # nu -> message

    def errors(self, nu: float, s: float) -> tuple[np.ndarray, np.ndarray]:
        sel = [(t, e) for n, t, ss, e in self.rows if n == nu and ss == s]
        if not sel:
            return np.array([]), np.array([])
        t, e = zip(*sel)
        return np.array(t), np.array(e)

    def monotone_violations(self, floor: float = ERROR_FLOOR) -> list:
        """(t, s, nu_a, nu_b, e_a, e_b) wherever the error fails to drop from nu_a to the next nu_b.

        Pairs with both errors below ``floor`` count as ties.
        """
        out = []
        nus = [n for n in self.nu_list if n > 0]
        for s in self.s_list:
            series = {n: dict(zip(*self.errors(n, s))) for n in nus}
            for a, b in zip(nus, nus[1:]):
                for t, ea in series[a].items():
                    if t < self.tau - 1e-12 or t not in series[b]:
                        continue
                    eb = series[b][t]
                    if max(ea, eb) < floor:
                        continue
                    if not eb < ea:
                        out.append((t, s, a, b, ea, eb))
        return out

    def squared_l2_at(self, t: float, tol: float = 1e-9) -> list[tuple[float, float]]:
        out = []
        for n, tt, s, e in self.rows:
            if s == 0 and abs(tt - t) <= tol and n > 0:
                out.append((n, e * e))
        return out

    def continuity_fit(self, t: float) -> "ContinuityFit":
        return viscosity_continuity_fit([(n, 0.0, e2) for n, e2 in self.squared_l2_at(t)])

    @property
    def slope(self) -> float:
        """Fitted slope at the final sampled time (nan if the fit is degenerate)."""
        ts = [tt for _, tt, _, _ in self.rows]
        if not ts:
            return float("nan")
        try:
            return self.continuity_fit(max(ts)).slope
        except ValueError:
            return float("nan")


def vanishing_viscosity_study(nu_list, theta0: SpectralField, tau: float, s_list, config: SolverConfig,
                              forcing: ForcingSpec | None = None, workers: int = 1) -> NuSweepReport:
    """Compare runs at each nu in ``nu_list`` against the nu = 0 run.

    The reference run picks its steps by the CFL rule and every other member
    replays that exact step sequence, so the discretizations are identical.
    """
    nus = tuple(float(n) for n in nu_list)
    if any(n < 0 for n in nus):
        raise ValueError("viscosities must be nonnegative")
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ValueError("nu_list must be strictly decreasing")
    if nus and nus[-1] != 0.0:
        nus = nus + (0.0,)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    forcing = forcing or ForcingSpec()
    report = NuSweepReport(nus, float(tau), tuple(float(s) for s in s_list))
    ref, err = _run(replace(config, nu=0.0), theta0, forcing)
    if err is not None:
        report.complete = False
        report.failures[0.0] = err
        return report
    members = [n for n in nus if n > 0]
    runs = _map(_run, [(replace(config, nu=n), theta0, forcing, ref.dt_history) for n in members], workers)
    for n in nus:
        traj = ref
        if n > 0:
            traj, err = runs[members.index(n)]
            if err is not None:
                report.complete = False
                report.failures[n] = err
        for t, a in zip(traj.times, traj.snapshots):
            if t < tau - 1e-12:
                continue
            b = ref.at(t)
            for s in report.s_list:
                report.rows.append((n, t, s, sobolev_norm(a - b, s)))
    return report


@dataclass
class ContinuityFit:
    slope: float
    points: list
    excluded: list
    degenerate: bool

    def within(self, lo: float, hi: float) -> bool:
        return (not self.degenerate) and lo <= self.slope <= hi


def viscosity_continuity_fit(pairs) -> ContinuityFit:
    """Least-squares slope of log |theta^nu1 - theta^nu2|^2 against log |nu1 - nu2|.

    ``pairs`` holds ``(nu1, nu2, squared_error)``; every pair must share the
    endpoint nu2 = 0.  Identical-nu pairs are excluded; when every remaining
    difference is zero the fit is flagged degenerate and the slope is nan.
    """
    pairs = [(float(a), float(b), float(e)) for a, b, e in pairs]
    if len(pairs) < 3:
        raise ValueError("need at least 3 viscosity pairs for a slope fit")
    if any(b != 0.0 for _, b, _ in pairs):
        raise ValueError("every pair must share the endpoint nu2 = 0")
    excluded = [p for p in pairs if p[0] == p[1]]
    use = [p for p in pairs if p[0] != p[1]]
    pts = [(a, e) for a, _, e in use if e > 0]
    if len(pts) < 2 or len(pts) < len(use):
        return ContinuityFit(float("nan"), pts, excluded, True)
    x = np.log([a for a, _ in pts])
    y = np.log([e for _, e in pts])
    slope = float(np.polyfit(x, y, 1)[0])
    return ContinuityFit(slope, pts, excluded, False)


# ------------------------------------------------------------ absorbing ball

def absorbing_radius(forcing: ForcingSpec, lattice, kappa: float, margin: float) -> float:
    if margin <= 0:
        raise ValueError("R_margin must be positive")
    return (1 + margin) * negative_sobolev_norm(forcing.to_field(lattice), 1) / kappa


@dataclass
class BallRun:
    label: str
    seed: int
    initial_norm: float
    times: np.ndarray
    norms: np.ndarray
    entry_time: float | None
    exits: int
    complete: bool = True
    trajectory: Trajectory | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.complete and self.entry_time is not None and self.exits == 0


@dataclass
class AttractorProbe:
    radius: float
    s_hminus1: float
    runs: list = field(default_factory=list)

    @property
    def entry_times(self) -> dict:
        return {(r.label, r.seed): r.entry_time for r in self.runs}

    @property
    def violations(self) -> list:
        return [r for r in self.runs if not r.ok]

    @property
    def passed(self) -> bool:
        return not self.violations

    def pairwise_distances(self, K_w: int = 8) -> dict:
        """d_s/d_w series between every pair of runs launched with the same norm."""
        out = {}
        for i, a in enumerate(self.runs):
            for b in self.runs[i + 1:]:
                if a.label == b.label and a.trajectory is not None and b.trajectory is not None:
                    out[(a.label, a.seed, b.seed)] = trajectory_distance(a.trajectory, b.trajectory, K_w)
        return out


def _norm_run(config, theta0, forcing):
    """Integrate recording the L2 norm after every accepted step."""
    ts, ns = [0.0], [l2_norm(theta0)]
    weight = config.lattice.half_weight

    def track(t, th):
        ts.append(t)
        ns.append(math.sqrt(float(np.sum(weight * np.abs(th) ** 2))))

    complete = True
    try:
        traj = integrate(config, theta0, forcing, on_step=track)
    except UnstableStepError as exc:
        traj, complete = exc.partial, False
    return traj, np.array(ts), np.array(ns), complete


def _ball_member(config, forcing, radius, label, seed, factor):
    theta0 = random_initial_field(config.lattice, seed, factor * radius)
    traj, ts, ns, complete = _norm_run(config, theta0, forcing)
    inside = ns <= radius
    entry = float(ts[np.argmax(inside)]) if inside.any() else None
    exits = 0
    if entry is not None:
        after = inside[np.argmax(inside):]
        exits = int(np.count_nonzero(~after))
    return BallRun(label, seed, float(ns[0]), ts, ns, entry, exits, complete, traj)


def absorbing_ball_study(config: SolverConfig, forcing: ForcingSpec, seeds=(0, 1, 2),
                         factors=(0.1, 10.0), margin: float = 0.1, workers: int = 1) -> AttractorProbe:
    """Launch |theta_0| = factor * R for each factor and seed and track entry into the ball.

    ``config.T`` plays the role of the observation horizon T_max.
    """
    sh = negative_sobolev_norm(forcing.to_field(config.lattice), 1)
    radius = absorbing_radius(forcing, config.lattice, config.kappa, margin)
    jobs = [(config, forcing, radius, f"{f:g}R", s, f) for f in factors for s in seeds]
    probe = AttractorProbe(radius, sh)
    probe.runs = _map(_ball_member, jobs, workers)
    return probe


def unforced_decay_rate(config: SolverConfig, theta0: SpectralField) -> float:
    """Smallest observed rate min_t log(|theta_0| / |theta(t)|) / t of an unforced run."""
    _, ts, ns, complete = _norm_run(config, theta0, ForcingSpec())
    if not complete:
        raise UnstableStepError("unforced decay run became unstable")
    pos = (ts > 0) & (ns > 0)
    if not pos.any():
        return float("inf")
    return float(np.min(np.log(ns[0] / ns[pos]) / ts[pos]))


# ------------------------------------------------------------ distances

def weak_tail_bound(K_w: int, d: int = 3, radius: int | None = None) -> float:
    """sum of 2^-|k| over k in Z^d with |k|_inf > K_w (summed out to where terms drop below 1e-18)."""
    radius = radius or max(K_w + 1, 72)
    r = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([r] * d), indexing="ij", sparse=True)
    kn = np.sqrt(sum(g * g for g in grids))
    kinf = np.maximum.reduce([np.abs(np.broadcast_to(g, kn.shape)) for g in grids])
    return float(np.sum(np.where(kinf > K_w, 2.0 ** (-kn), 0.0)))


def weak_distance(a: SpectralField, b: SpectralField, K_w: int = 8) -> float:
    if a.lattice != b.lattice:
        raise ValueError("fields live on different lattices")
    lat = a.lattice
    diff = np.abs(a.coeffs - b.coeffs)
    sel = (lat.kinf <= K_w)
    w = 2.0 ** (-np.sqrt(lat.ksq))
    return float(np.sum(np.where(sel, w * diff / (1 + diff), 0.0)))


def strong_distance(a: SpectralField, b: SpectralField) -> float:
    if a.lattice != b.lattice:
        raise ValueError("fields live on different lattices")
    return l2_norm(a - b)


@dataclass
class DistanceSeries:
    times: np.ndarray
    d_s: np.ndarray
    d_w: np.ndarray
    K_w: int
    tail_bound: float


def trajectory_distance(traj_a: Trajectory, traj_b: Trajectory, K_w: int = 8) -> DistanceSeries:
    """Strong (L2) and weak distances at the snapshot times common to both runs."""
    if traj_a.lattice != traj_b.lattice:
        raise ValueError("trajectories live on different lattices")
    times, ds, dw = [], [], []
    tb = np.asarray(traj_b.times)
    for t, a in zip(traj_a.times, traj_a.snapshots):
        j = np.flatnonzero(np.abs(tb - t) <= 1e-9)
        if not j.size:
            continue
        b = traj_b.snapshots[j[0]]
        times.append(t)
        ds.append(strong_distance(a, b))
        dw.append(weak_distance(a, b, K_w))
    return DistanceSeries(np.array(times), np.array(ds), np.array(dw), K_w,
                          weak_tail_bound(K_w, traj_a.lattice.ndim))


# ------------------------------------------------------------ semicontinuity

@dataclass
class SemicontinuityReport:
    nu_list: tuple
    clouds: dict
    hausdorff: dict
    entry_times: dict
    burn_in: float
    label: str = PROXY_LABEL

    def nonincreasing(self, tol: float = 0.2) -> bool:
        hs = [self.hausdorff[n] for n in self.nu_list if n > 0]
        return all(b <= (1 + tol) * a for a, b in zip(hs, hs[1:]))


def one_sided_hausdorff(cloud, reference) -> float:
    """max over cloud points of the min L2 distance to the reference cloud."""
    if not cloud:
        return 0.0
    if not reference:
        raise ValueError("reference cloud is empty")
    B = np.stack([c.coeffs for c in reference])
    worst = 0.0
    for a in cloud:
        d2 = np.sum(np.abs(B - a.coeffs) ** 2, axis=tuple(range(1, B.ndim)))
        worst = max(worst, float(d2.min()))
    return math.sqrt(worst)


def _cloud_member(config, forcing, seed, norm, radius, burn_in):
    theta0 = random_initial_field(config.lattice, seed, norm)
    traj, ts, ns, complete = _norm_run(config, theta0, forcing)
    inside = ns <= radius
    entry = float(ts[np.argmax(inside)]) if inside.any() else None
    cloud = [s for t, s in zip(traj.times, traj.snapshots) if t >= burn_in - 1e-9]
    return cloud, entry, complete


def semicontinuity_probe(nu_list, config: SolverConfig, forcing: ForcingSpec, seeds=(0, 1),
                         burn_in: float = 20.0, window: float = 5.0, sample_every: float = 0.5,
                         initial_factor: float = 2.0, margin: float = 0.1, burn_in_factor: float = 20.0,
                         workers: int = 1) -> SemicontinuityReport:
    """Long-time point clouds per nu and their one-sided distance to the nu = 0 cloud.

    Initial data have norm ``initial_factor * R``.  The burn-in must be at
    least ``burn_in_factor`` times the largest measured entry time into the
    absorbing ball; otherwise :class:`DiagnosticError` is raised.
    """
    nus = tuple(float(n) for n in nu_list)
    if any(b >= a for a, b in zip(nus, nus[1:])):
        raise ValueError("nu_list must be strictly decreasing")
    if 0.0 not in nus:
        nus = nus + (0.0,)
    radius = absorbing_radius(forcing, config.lattice, config.kappa, margin) if not forcing.is_zero else 0.0
    norm = initial_factor * radius if radius > 0 else 1.0
    cfg = replace(config, T=burn_in + window, snapshot_every=sample_every)
    jobs = [(replace(cfg, nu=n), forcing, s, norm, radius, burn_in) for n in nus for s in seeds]
    results = _map(_cloud_member, jobs, workers)
    clouds, entries = {}, {}
    for (c, _, s, *_), (cloud, entry, complete) in zip(jobs, results):
        if not complete:
            raise UnstableStepError(f"semicontinuity run nu={c.nu} seed={s} became unstable")
        clouds.setdefault(c.nu, []).extend(cloud)
        entries[(c.nu, s)] = entry
    if radius > 0:
        finite = [e for e in entries.values() if e is not None]
        if len(finite) < len(entries) or burn_in < burn_in_factor * max(finite, default=0.0):
            raise DiagnosticError(
                f"burn-in not reached: T_b={burn_in:g} < {burn_in_factor:g} x entry time "
                f"{max(finite, default=float('inf')):g}")
    h = {n: one_sided_hausdorff(clouds[n], clouds[0.0]) for n in nus}
    return SemicontinuityReport(nus, clouds, h, entries, burn_in)
