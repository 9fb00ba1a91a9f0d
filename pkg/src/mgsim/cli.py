"""Command-line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 numerical instability.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics, experiments, multipliers
from .config import parse_config
from .errors import DiagnosticError, MGError, UnstableStepError
from .reports import read_csv, write_csv
from .snapshot import read_snapshot, write_snapshot
from .solver import ForcingSpec, SolverConfig, Trajectory, integrate

log = logging.getLogger("mgsim")

EXIT_OK, EXIT_INVALID, EXIT_UNSTABLE = 0, 1, 2
DEFAULT_NU_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------ subcommands

def _write_trajectory(out: Path, traj: Trajectory, seed: int) -> None:
    rows = []
    for i, (t, snap) in enumerate(zip(traj.times, traj.snapshots)):
        name = f"snap_{i:05d}.mgf"
        write_snapshot(out / name, snap, t, traj.config.nu, traj.config.kappa)
        rows.append((i, t, name))
    write_csv(out / "index.csv", "trajectory_index", rows)
    write_csv(out / "ledger.csv", "energy_ledger",
              [(r.t, r.energy, r.dissipation, r.injection, r.residual, r.flux_defect) for r in traj.ledger.rows])
    meta = traj.metadata() | {"seed": seed, "ledger_relative_residual": traj.ledger.relative_residual}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    solver = cfg.solver if args.nu is None else replace(cfg.solver, nu=args.nu)
    forcing = cfg.resolve_forcing(args.seed)
    theta0 = cfg.initial_field(args.seed)
    out = _out_dir(args)
    try:
        traj = integrate(solver, theta0, forcing)
    except UnstableStepError as exc:
        if exc.partial is not None:
            _write_trajectory(out, exc.partial, args.seed)
        print(f"unstable: {exc} at t={exc.t}", file=sys.stderr)
        return EXIT_UNSTABLE
    _write_trajectory(out, traj, args.seed)
    print(f"simulate: {len(traj.times)} snapshots, {len(traj.dt_history)} steps, "
          f"ledger residual {traj.ledger.relative_residual:.3e} -> {out}")
    return EXIT_OK


def cmd_audit(args) -> int:
    nus = args.nu or list(DEFAULT_NU_GRID)
    if any(n < 0 for n in nus) or args.K < 1 or any(L < 1 for L in args.L):
        raise UsageError("audit-symbols: nu must be >= 0, K and L must be >= 1")
    rows, ok = [], True
    for nu in nus:
        div = multipliers.audit_divergence_free(nu, args.K)
        bound = multipliers.audit_uniform_bound([nu], args.K).per_component
        ok &= div <= 1e-12 and bound[0] <= 3
        for L in args.L:
            conv = multipliers.audit_symbol_convergence(nu, L)
            ok &= conv.passed
            rows.append((nu, args.K, L, div, *(float(b) for b in bound), float(conv.per_component[0]),
                         conv.analytic_bound, conv.passed))
    path = write_csv(_out_dir(args) / "symbol_audit.csv", "symbol_audit", rows)
    print(f"audit-symbols: {'ok' if ok else 'FAILED'} -> {path}")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_nu_sweep(args) -> int:
    cfg = parse_config(args.config)
    if not cfg.nu_list:
        raise UsageError("nu-sweep needs physics.nu_list in the config")
    forcing = cfg.resolve_forcing(args.seed)
    theta0 = cfg.initial_field(args.seed)
    st = cfg.study
    rep = experiments.vanishing_viscosity_study(cfg.nu_list, theta0, st.tau, st.s_list, cfg.solver, forcing,
                                                workers=st.workers)
    out = _out_dir(args)
    write_csv(out / "nu_sweep.csv", "nu_sweep", rep.rows)
    ts = [t for _, t, _, _ in rep.rows]
    fit_rows = []
    if ts:
        try:
            fit = rep.continuity_fit(max(ts))
            fit_rows.append((fit.slope, len(fit.points), fit.degenerate))
        except ValueError as exc:
            log.warning("continuity fit skipped: %s", exc)
    write_csv(out / "continuity_fit.csv", "continuity_fit", fit_rows)
    viol = rep.monotone_violations()
    for v in viol:
        log.warning("monotonicity flagged at t=%g s=%g between nu=%g and nu=%g", *v[:4])
    if not rep.complete:
        for nu, msg in rep.failures.items():
            print(f"unstable member nu={nu:g}: {msg}", file=sys.stderr)
        print(f"nu-sweep: partial report -> {out}", file=sys.stderr)
        return EXIT_UNSTABLE
    print(f"nu-sweep: {len(rep.rows)} rows, {len(viol)} monotonicity flags -> {out}")
    return EXIT_OK


def cmd_attractor(args) -> int:
    cfg = parse_config(args.config)
    forcing = cfg.resolve_forcing(args.seed)
    st = cfg.study
    seeds = [args.seed + s for s in st.seeds]
    out = _out_dir(args)
    probe = experiments.absorbing_ball_study(cfg.solver, forcing, seeds, st.factors, st.R_margin, st.workers)
    write_csv(out / "absorbing_ball.csv", "absorbing_ball",
              [(r.label, r.seed, r.initial_norm, probe.radius, r.entry_time, r.exits, float(r.norms[-1]), r.complete)
               for r in probe.runs])
    dist_rows = []
    for (label, a, b), series in probe.pairwise_distances(st.K_w).items():
        dist_rows += [(t, ds, dw, st.K_w, series.tail_bound) for t, ds, dw in zip(series.times, series.d_s, series.d_w)]
    write_csv(out / "distance.csv", "distance", dist_rows)
    if cfg.nu_list:
        rep = experiments.semicontinuity_probe(cfg.nu_list, cfg.solver, forcing, seeds, st.T_b, st.window,
                                               st.sample_every, st.initial_factor, st.R_margin, workers=st.workers)
        write_csv(out / "semicontinuity.csv", "semicontinuity",
                  [(n, rep.hausdorff[n], len(rep.clouds[n])) for n in rep.nu_list])
        print(f"semicontinuity ({rep.label}): nonincreasing={rep.nonincreasing()}")
    if any(not r.complete for r in probe.runs):
        print("attractor: unstable member run", file=sys.stderr)
        return EXIT_UNSTABLE
    print(f"attractor: R={probe.radius:.4g}, {len(probe.violations)} violations -> {out}")
    return EXIT_OK


def load_trajectory(directory) -> Trajectory:
    """Rebuild a trajectory from a directory written by ``simulate``."""
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
        _, _, rows = read_csv(d / "index.csv")
    except (OSError, ValueError) as exc:
        raise DiagnosticError(f"{d}: not a trajectory directory ({exc})") from None
    cfg = SolverConfig(kappa=meta["kappa"], nu=meta["nu"], n=meta["N"], T=meta["T"],
                       integrator=meta["integrator"], dt_policy=meta["dt_policy"], c_cfl=meta["c_cfl"],
                       dt_max=meta["dt_max"], snapshot_every=meta["snapshot_every"], linear=meta["linear"])
    forcing = ForcingSpec(tuple(((m[0], m[1], m[2]), complex(m[3], m[4])) for m in meta["forcing"]))
    traj = Trajectory(cfg, forcing, complete=meta.get("complete", True))
    S = forcing.to_field(cfg.lattice)
    for _, t, name in rows:
        snap = read_snapshot(d / name)
        traj.times.append(snap.t)
        traj.snapshots.append(snap.theta)
        E, D, I = diagnostics.energy_terms(snap.theta, S, cfg.kappa)
        traj.ledger.append(snap.t, E, D, I)
    if not traj.snapshots:
        raise DiagnosticError(f"{d}: trajectory holds no snapshots")
    return traj


def cmd_diagnose(args) -> int:
    traj = load_trajectory(args.trajectory)
    out = _out_dir(args)
    prof = diagnostics.linf_profile(traj)
    write_csv(out / "linf_profile.csv", "linf_profile", zip(prof.times, prof.linf, prof.ratio))
    write_csv(out / "snapshot_ledger.csv", "energy_ledger",
              [(r.t, r.energy, r.dissipation, r.injection, r.residual, r.flux_defect) for r in traj.ledger.rows])
    times = np.asarray(traj.times)
    summary = [f"sup ratio {prof.sup_ratio:.4g}"]
    if len(times) > 1:
        t0 = float(times[-1])
        cadence = float(np.max(np.diff(times)))
        n_max = min(5, int(np.floor(np.log2(t0 / cadence))) - 1)
        if n_max >= 1:
            H, c = diagnostics.calibrated_de_giorgi(traj, t0, n_max)
            write_csv(out / "de_giorgi.csv", "de_giorgi",
                      [(n, H * (1 - 2.0**-n), t0 * (1 - 2.0**-n), float(cn)) for n, cn in enumerate(c)])
            summary.append(f"De Giorgi H={H:.4g} c_{n_max}/c_0={c[-1] / c[0] if c[0] > 0 else 0.0:.3g}")
        else:
            summary.append("De Giorgi skipped: snapshot cadence too coarse")
    print("diagnose: " + ", ".join(summary) + f" -> {out}")
    return EXIT_OK


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42, help="seed for all random inputs (default 42)")
    common.add_argument("--out", default="out", help="artifact directory (default ./out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="mgsim", description="MG^nu active scalar simulator and verification toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    s = sub.add_parser("simulate", parents=[common], help="integrate one run and store snapshots")
    s.add_argument("config")
    s.add_argument("--nu", type=float, default=None, help="override physics.nu")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("audit-symbols", parents=[common], help="audit the velocity symbol on a lattice window")
    a.add_argument("--nu", type=float, nargs="+", default=None)
    a.add_argument("--K", type=int, default=64)
    a.add_argument("--L", type=float, nargs="+", default=[2.0, 4.0, 8.0])
    a.set_defaults(func=cmd_audit)

    n = sub.add_parser("nu-sweep", parents=[common], help="vanishing viscosity study")
    n.add_argument("config")
    n.set_defaults(func=cmd_nu_sweep)

    t = sub.add_parser("attractor", parents=[common], help="absorbing ball and semicontinuity probes")
    t.add_argument("config")
    t.set_defaults(func=cmd_attractor)

    d = sub.add_parser("diagnose", parents=[common], help="post-process a stored trajectory")
    d.add_argument("trajectory")
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UnstableStepError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (MGError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
