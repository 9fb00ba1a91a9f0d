"""Run configuration files (TOML, ``key = value`` under sections).

Recognized sections and keys are listed in :data:`SCHEMA`; anything else is
rejected.  Forcing and initial data are given either as explicit mode lists
``[[k1, k2, k3, re, im], ...]`` or as seeded random specifications.
"""
from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .snapshot import read_snapshot
from .solver import ForcingSpec, SolverConfig, random_initial_field
from .spectral_core import SpectralField

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

_NUM = (int, float)

SCHEMA = {
    "grid": {"n": (int, 32)},
    "physics": {"kappa": (_NUM, 1.0), "nu": (_NUM, 0.0), "nu_list": (list, None), "linear": (bool, False)},
    "time": {"T": (_NUM, 1.0), "integrator": (str, "etd-rk2"), "dt_policy": (str, "cfl"), "dt": (_NUM, 1e-3),
             "c_cfl": (_NUM, 0.5), "dt_max": (_NUM, 0.05), "snapshot_every": (_NUM, 0.1),
             "ledger_tol": (_NUM, 0.0)},
    "forcing": {"modes": (list, None), "seed": (int, None), "kmax": (int, 2), "norm": (_NUM, None)},
    "initial": {"modes": (list, None), "snapshot": (str, None), "seed": (int, None), "band": (int, None),
                "norm": (_NUM, 1.0), "slope": (_NUM, -2.0)},
    "study": {"tau": (_NUM, 0.1), "s_list": (list, [0, 1]), "R_margin": (_NUM, 0.1), "K_w": (int, 8),
              "T_b": (_NUM, 20.0), "window": (_NUM, 5.0), "sample_every": (_NUM, 0.5),
              "seeds": (list, [0, 1, 2]), "factors": (list, [0.1, 10.0]), "initial_factor": (_NUM, 2.0),
              "workers": (int, 1)},
}


@dataclass
class InitialSpec:
    modes: list | None = None
    snapshot: str | None = None
    seed: int | None = None
    band: int | None = None
    norm: float = 1.0
    slope: float = -2.0

    def build(self, lattice, seed: int) -> SpectralField:
        if self.snapshot is not None:
            snap = read_snapshot(self.snapshot)
            if snap.theta.lattice != lattice:
                raise ConfigError(f"initial.snapshot: grid {snap.theta.lattice.dims} differs from grid.n")
            return snap.theta
        if self.modes is not None:
            return ForcingSpec(tuple(((m[0], m[1], m[2]), complex(m[3], m[4])) for m in self.modes)).to_field(lattice)
        return random_initial_field(lattice, self.seed if self.seed is not None else seed, self.norm,
                                    self.band, self.slope)


@dataclass
class StudySpec:
    tau: float = 0.1
    s_list: list = field(default_factory=lambda: [0, 1])
    R_margin: float = 0.1
    K_w: int = 8
    T_b: float = 20.0
    window: float = 5.0
    sample_every: float = 0.5
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    factors: list = field(default_factory=lambda: [0.1, 10.0])
    initial_factor: float = 2.0
    workers: int = 1


@dataclass
class RunConfig:
    solver: SolverConfig
    forcing: ForcingSpec | None
    forcing_random: dict | None
    initial: InitialSpec
    study: StudySpec
    nu_list: list | None = None
    defaults: dict = field(default_factory=dict)
    source: str = "<string>"

    def resolve_forcing(self, seed: int) -> ForcingSpec:
        if self.forcing is not None:
            return self.forcing
        if self.forcing_random is None:
            return ForcingSpec()
        r = self.forcing_random
        return ForcingSpec.random(r["seed"] if r["seed"] is not None else seed, r["kmax"], r["norm"])

    def initial_field(self, seed: int) -> SpectralField:
        return self.initial.build(self.solver.lattice, seed)


def _check_type(where, value, kind):
    if kind is _NUM:
        ok = isinstance(value, _NUM) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        name = "number" if kind is _NUM else kind.__name__
        raise ConfigError(f"{where}: expected {name}, got {type(value).__name__} {value!r}")


def _mode_list(where, modes):
    out = []
    for i, m in enumerate(modes):
        if not (isinstance(m, list) and len(m) == 5 and all(isinstance(x, _NUM) and not isinstance(x, bool) for x in m)
                and all(isinstance(x, int) for x in m[:3])):
            raise ConfigError(f"{where}[{i}]: expected [k1, k2, k3, re, im] with integer k, got {m!r}")
        if m[2] == 0:
            raise ConfigError(f"{where}[{i}]: gauge violation: k3=0 in mode {tuple(m[:3])}")
        out.append(m)
    return out


def _modes_to_forcing(where, modes):
    try:
        return ForcingSpec(tuple(((m[0], m[1], m[2]), complex(m[3], m[4])) for m in modes))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def loads_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: syntax error: {exc}") from None
    values: dict[str, dict] = {}
    defaults: dict[str, object] = {}
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: '{section}' must be a [section] table")
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
    for section, keys in SCHEMA.items():
        body = raw.get(section, {})
        values[section] = {}
        for key, (kind, default) in keys.items():
            where = f"{source}: {section}.{key}"
            if key in body:
                _check_type(where, body[key], kind)
                values[section][key] = body[key]
            else:
                values[section][key] = default
                if default is not None:
                    defaults[f"{section}.{key}"] = default
    g, p, tm, fo, ini, st = (values[s] for s in ("grid", "physics", "time", "forcing", "initial", "study"))

    nu_list = p["nu_list"]
    if nu_list is not None:
        if not nu_list or not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in nu_list):
            raise ConfigError(f"{source}: physics.nu_list: expected a nonempty list of numbers")
        nu_list = [float(x) for x in nu_list]
        if any(b >= a for a, b in zip(nu_list, nu_list[1:])) or nu_list[-1] < 0:
            raise ConfigError(f"{source}: physics.nu_list: must be strictly decreasing and nonnegative")
    solver_kwargs = dict(kappa=float(p["kappa"]), nu=float(p["nu"]), n=g["n"], T=float(tm["T"]),
                         integrator=tm["integrator"], dt_policy=tm["dt_policy"], dt=float(tm["dt"]),
                         c_cfl=float(tm["c_cfl"]), dt_max=float(tm["dt_max"]),
                         snapshot_every=float(tm["snapshot_every"]), linear=p["linear"],
                         ledger_tol=float(tm["ledger_tol"]))
    section_of = {"n": "grid", "kappa": "physics", "nu": "physics", "linear": "physics"}
    # validate field by field so the message names the offending key
    base = SolverConfig()
    for f in fields(SolverConfig):
        try:
            replace(base, **{f.name: solver_kwargs[f.name]})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: {section_of.get(f.name, 'time')}.{f.name}: {exc}") from None
    solver = SolverConfig(**solver_kwargs)

    forcing = forcing_random = None
    if fo["modes"] is not None:
        if fo["norm"] is not None or fo["seed"] is not None:
            raise ConfigError(f"{source}: forcing: give either modes or seed/norm, not both")
        forcing = _modes_to_forcing(f"{source}: forcing.modes", _mode_list(f"{source}: forcing.modes", fo["modes"]))
    elif fo["norm"] is not None:
        if fo["kmax"] < 1:
            raise ConfigError(f"{source}: forcing.kmax: must be >= 1")
        forcing_random = {"seed": fo["seed"], "kmax": fo["kmax"], "norm": float(fo["norm"])}

    if sum(x is not None for x in (ini["modes"], ini["snapshot"])) > 1:
        raise ConfigError(f"{source}: initial: give at most one of modes, snapshot")
    if ini["modes"] is not None:
        _mode_list(f"{source}: initial.modes", ini["modes"])
        _modes_to_forcing(f"{source}: initial.modes", ini["modes"])
    if ini["band"] is not None and ini["band"] < 1:
        raise ConfigError(f"{source}: initial.band: must be >= 1")
    initial = InitialSpec(ini["modes"], ini["snapshot"], ini["seed"], ini["band"], float(ini["norm"]),
                          float(ini["slope"]))

    for key in ("s_list", "seeds", "factors"):
        if not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in st[key]):
            raise ConfigError(f"{source}: study.{key}: expected a list of numbers")
    if not all(isinstance(x, int) for x in st["seeds"]):
        raise ConfigError(f"{source}: study.seeds: expected integers")
    if st["R_margin"] <= 0:
        raise ConfigError(f"{source}: study.R_margin: must be positive")
    study = StudySpec(**{k: st[k] for k in SCHEMA["study"]})

    return RunConfig(solver, forcing, forcing_random, initial, study, nu_list, defaults, source)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    cfg = loads_config(text, str(path))
    for key, val in cfg.defaults.items():
        log.info("default %s = %r", key, val)
    return cfg
