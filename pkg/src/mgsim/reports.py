"""CSV emission.  Every file starts with ``# schema=<name>/v<version>``
followed by a header row; floats are written with ``repr`` so identical
runs give identical bytes."""
from __future__ import annotations

import csv
from pathlib import Path

SCHEMAS = {
    "symbol_audit": (1, ["nu", "K", "L", "divergence_residual", "bound_m1", "bound_m2", "bound_m3",
                         "convergence_empirical_m1", "convergence_bound", "convergence_ok"]),
    "energy_ledger": (1, ["t", "energy", "dissipation", "injection", "residual", "flux_defect"]),
    "linf_profile": (1, ["t", "linf", "ratio"]),
    "de_giorgi": (1, ["n", "level", "t_n", "c_n"]),
    "nu_sweep": (1, ["nu", "t", "s", "error"]),
    "continuity_fit": (1, ["slope", "points", "degenerate"]),
    "absorbing_ball": (1, ["label", "seed", "initial_norm", "radius", "entry_time", "exits", "final_norm",
                           "complete"]),
    "distance": (1, ["t", "d_s", "d_w", "K_w", "tail_bound"]),
    "semicontinuity": (1, ["nu", "h", "cloud_size"]),
    "trajectory_index": (1, ["index", "t", "file"]),
}


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def write_csv(path, schema: str, rows) -> Path:
    """Write ``rows`` (sequences ordered like the schema columns)."""
    if schema not in SCHEMAS:
        raise KeyError(f"unknown report schema {schema!r}")
    version, cols = SCHEMAS[schema]
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema={schema}/v{version}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            row = list(row)
            if len(row) != len(cols):
                raise ValueError(f"{schema}: row has {len(row)} fields, expected {len(cols)}")
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """Return (schema tag, header, rows) of a file written by :func:`write_csv`."""
    with Path(path).open(newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise ValueError(f"{path}: missing schema line")
        reader = csv.reader(fh)
        header = next(reader)
        return first[len("# schema="):], header, [r for r in reader]
