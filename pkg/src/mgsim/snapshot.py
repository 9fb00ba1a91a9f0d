"""Binary snapshot files.

Layout (all little-endian)::

    offset  size  content
    0       4     magic b"MGF1"
    4       2     endianness tag b"LE"
    6       12    N1, N2, N3 as uint32
    18      24    nu, kappa, t as float64
    42      ...   half-spectrum coefficients, k3 >= 0, as interleaved (re, im)
                  float64 pairs in row-major FFT index order (k1 slowest)

The payload holds ``N1 * N2 * (N3 // 2 + 1)`` complex values.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LatticeError, SnapshotError
from .spectral_core import Lattice, SpectralField

MAGIC = b"MGF1"
ENDIAN_TAG = b"LE"
HEADER = struct.Struct("<4s2s3I3d")
HERMITIAN_TOL = 1e-12


@dataclass
class Snapshot:
    t: float
    nu: float
    kappa: float
    theta: SpectralField


def encode_snapshot(theta: SpectralField, t: float, nu: float, kappa: float) -> bytes:
    lat = theta.lattice
    if lat.ndim != 3:
        raise SnapshotError("snapshots store three dimensional fields")
    head = HEADER.pack(MAGIC, ENDIAN_TAG, *lat.dims, float(nu), float(kappa), float(t))
    payload = np.ascontiguousarray(theta.half, dtype="<c16").tobytes()
    return head + payload


def write_snapshot(path, theta: SpectralField, t: float, nu: float, kappa: float) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(theta, t, nu, kappa))
    return path


def _self_conjugate_defect(half: np.ndarray, plane: int) -> float:
    p = half[..., plane]
    neg = np.ix_(*[(-np.arange(n)) % n for n in p.shape])
    scale = max(1.0, float(np.max(np.abs(p), initial=0.0)))
    return float(np.max(np.abs(p[neg] - np.conj(p)), initial=0.0)) / scale


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < HEADER.size:
        raise SnapshotError(f"truncated snapshot: {len(data)} bytes, header needs {HEADER.size}")
    magic, tag, n1, n2, n3, nu, kappa, t = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if tag != ENDIAN_TAG:
        raise SnapshotError(f"unsupported endianness tag {tag!r}")
    try:
        lat = Lattice((n1, n2, n3))
    except LatticeError as exc:
        raise SnapshotError(f"invalid grid in header: {exc}") from None
    shape = (n1, n2, n3 // 2 + 1)
    need = HEADER.size + 16 * int(np.prod(shape))
    if len(data) != need:
        kind = "truncated" if len(data) < need else "oversized"
        raise SnapshotError(f"{kind} snapshot payload: {len(data)} bytes, expected {need}")
    half = np.frombuffer(data, dtype="<c16", offset=HEADER.size).reshape(shape).astype(complex)
    if not np.all(np.isfinite(half)):
        raise SnapshotError("non-finite coefficients in snapshot")
    for plane in (0, n3 // 2):
        defect = _self_conjugate_defect(half, plane)
        if defect > HERMITIAN_TOL:
            raise SnapshotError(f"non-Hermitian payload on plane k3={plane}: defect {defect:.3g}")
    if np.any(half[..., 0] != 0):
        raise SnapshotError("gauge violation: k3=0 modes present in snapshot")
    if not (nu >= 0 and kappa > 0 and np.isfinite(t)):
        raise SnapshotError(f"invalid parameters in header: nu={nu}, kappa={kappa}, t={t}")
    return Snapshot(t, nu, kappa, SpectralField.from_half(lat, half))


def read_snapshot(path) -> Snapshot:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from None
    return decode_snapshot(data)
