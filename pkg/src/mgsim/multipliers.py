"""Constitutive law u = M^nu[theta] for the magneto-geostrophic equation.

The velocity symbol is real, even in k and orthogonal to k:

    M1 = [k2 k3 |k|^2 - k1 k3 A] / D
    M2 = [-k1 k3 |k|^2 - k2 k3 A] / D
    M3 = (k1^2 + k2^2) A / D

with ``A = k2^2 + nu |k|^4`` and ``D = |k|^2 k3^2 + A^2``.  Modes with
k3 = 0 are excluded by the gauge and carry the value 0.

The audit functions scan lattice windows and report the measured constants
behind the symbol estimates used for well-posedness and the nu -> 0 limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GaugeViolationError
from .spectral_core import Lattice, SpectralField

EPS_FLOOR = 1e-30


def mg_symbol_array(k1, k2, k3, nu: float) -> np.ndarray:
    """Vectorized symbol; returns shape ``(3,) + broadcast(k1, k2, k3)``.

    Entries with k3 = 0 are set to zero.
    """
    k1, k2, k3 = (np.asarray(c, dtype=float) for c in (k1, k2, k3))
    k1, k2, k3 = np.broadcast_arrays(k1, k2, k3)
    ksq = k1**2 + k2**2 + k3**2
    a = k2**2 + nu * ksq**2
    d = ksq * k3**2 + a**2
    ok = k3 != 0
    dinv = np.zeros_like(d)
    np.divide(1.0, d, out=dinv, where=ok)
    out = np.empty((3,) + k1.shape)
    out[0] = (k2 * k3 * ksq - k1 * k3 * a) * dinv
    out[1] = (-k1 * k3 * ksq - k2 * k3 * a) * dinv
    out[2] = (k1**2 + k2**2) * a * dinv
    return out


def mg_symbol(k, nu: float) -> tuple[float, float, float]:
    k = tuple(int(c) for c in k)
    if len(k) != 3:
        raise ValueError("MG symbol is defined on Z^3")
    if k[2] == 0:
        raise GaugeViolationError(f"gauge violation: k3=0 for k={k}")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    m = mg_symbol_array(*k, nu)
    return float(m[0]), float(m[1]), float(m[2])


def mg_denominator(k, nu: float) -> float:
    k1, k2, k3 = (float(c) for c in k)
    ksq = k1 * k1 + k2 * k2 + k3 * k3
    return ksq * k3 * k3 + (k2 * k2 + nu * ksq * ksq) ** 2


def t_symbol(k, nu: float, i: int, j: int) -> complex:
    """Potential-matrix symbol T_ij(k) = -i k_i M_j(k) / |k|^2 (axes are 1-based)."""
    k = tuple(int(c) for c in k)
    if not any(k):
        raise ValueError("T symbol undefined at k = 0")
    if not (1 <= i <= 3 and 1 <= j <= 3):
        raise ValueError("axis indices run over 1..3")
    m = mg_symbol(k, nu)
    ksq = sum(c * c for c in k)
    return -1j * k[i - 1] * m[j - 1] / ksq


@dataclass(frozen=True)
class MultiplierFamily:
    """A nu-indexed family of velocity symbols k -> R^3.

    ``evaluate(k1, k2, k3, nu)`` must be vectorized like :func:`mg_symbol_array`.
    """

    name: str
    evaluate: object
    nu_range: tuple[float, float] = (0.0, 1.0)

    def symbol(self, k1, k2, k3, nu):
        return self.evaluate(k1, k2, k3, nu)

    def t_matrix(self, k1, k2, k3, nu) -> np.ndarray:
        """T_ij for all i, j; shape ``(3, 3) + broadcast shape``."""
        m = self.evaluate(k1, k2, k3, nu)
        kv = np.stack(np.broadcast_arrays(*(np.asarray(c, float) for c in (k1, k2, k3))))
        ksq = np.sum(kv**2, axis=0)
        inv = np.zeros_like(ksq)
        np.divide(1.0, ksq, out=inv, where=ksq > 0)
        return -1j * kv[:, None] * m[None, :] * inv

    def on_lattice(self, lattice: Lattice, nu: float, half: bool = False) -> np.ndarray:
        """Symbol sampled on the lattice with Nyquist components zeroed.

        At a Nyquist component the stored mode is its own Hermitian partner
        while the symbol is only even in the full vector, so those entries
        are dropped to keep the velocity real.
        """
        ks = lattice.k_half if half else lattice.k
        m = self.evaluate(*ks, nu)
        nyq = np.zeros(m.shape[1:], dtype=bool)
        for kk, n in zip(ks, lattice.dims):
            nyq = nyq | (np.broadcast_to(kk, nyq.shape) == n // 2)
        m[:, nyq] = 0.0
        return m


def _zero_symbol(k1, k2, k3, nu):
    shape = np.broadcast_shapes(np.shape(k1), np.shape(k2), np.shape(k3))
    return np.zeros((3,) + shape)


MG = MultiplierFamily("mg", mg_symbol_array, (0.0, 1.0))
ZERO = MultiplierFamily("zero", _zero_symbol, (0.0, np.inf))


def apply_velocity(theta: SpectralField, nu: float, family: MultiplierFamily = MG) -> tuple[SpectralField, ...]:
    """Velocity components u_j = (M_j theta_hat)^vee."""
    if theta.lattice.ndim != 3:
        raise ValueError("velocity law is three dimensional")
    if theta.gauge_defect() > 0:
        raise GaugeViolationError("gauge violation: theta carries k3=0 modes")
    m = family.on_lattice(theta.lattice, nu)
    return tuple(SpectralField(theta.lattice, m[j] * theta.coeffs) for j in range(3))


# ---------------------------------------------------------------- audits

def _window(K: int):
    r = np.arange(-K, K + 1)
    k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij", sparse=True)
    return k1, k2, k3


def audit_divergence_free(nu: float, K: int, family: MultiplierFamily = MG) -> float:
    """Largest relative residual |k . M(k)| / (|k| max_j |M_j| + floor) on |k|_inf <= K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    k1, k2, k3 = _window(K)
    m = family.evaluate(k1, k2, k3, nu)
    div = np.abs(k1 * m[0] + k2 * m[1] + k3 * m[2])
    kn = np.sqrt(k1**2 + k2**2 + k3**2)
    scale = kn * np.max(np.abs(m), axis=0) + EPS_FLOOR
    admissible = np.broadcast_to(k3 != 0, div.shape)
    return float(np.max(np.where(admissible, div / scale, 0.0)))


@dataclass
class BoundAudit:
    per_component: np.ndarray
    per_nu: dict = field(default_factory=dict)

    @property
    def component1(self) -> float:
        return float(self.per_component[0])


def audit_uniform_bound(nu_grid, K: int, family: MultiplierFamily = MG) -> BoundAudit:
    """max over nu in grid and 0 < |k|_inf <= K of |M_j(k)| / |k| per component."""
    k1, k2, k3 = _window(K)
    kn = np.sqrt(k1**2 + k2**2 + k3**2).astype(float)
    inv = np.zeros(np.broadcast_shapes(kn.shape, (2 * K + 1,) * 3))
    np.divide(1.0, np.broadcast_to(kn, inv.shape), out=inv, where=np.broadcast_to(kn, inv.shape) > 0)
    best = np.zeros(3)
    per_nu = {}
    for nu in nu_grid:
        m = np.abs(family.evaluate(k1, k2, k3, nu)) * inv
        cur = m.reshape(3, -1).max(axis=1)
        per_nu[float(nu)] = cur
        best = np.maximum(best, cur)
    return BoundAudit(best, per_nu)


def convergence_bound(nu: float, L: float) -> float:
    """Polynomial bound 4 nu L^10 + 2 nu^2 L^12 on the component-1 symbol gap."""
    return 4 * nu * L**10 + 2 * nu**2 * L**12


@dataclass
class ConvergenceAudit:
    nu: float
    L: float
    per_component: np.ndarray
    analytic_bound: float

    @property
    def empirical(self) -> float:
        return float(self.per_component.max())

    @property
    def passed(self) -> bool:
        return bool(self.per_component[0] <= self.analytic_bound)


def audit_symbol_convergence(nu: float, L: int, family: MultiplierFamily = MG) -> ConvergenceAudit:
    """sup over 0 < |k| <= L (Euclidean), k3 != 0 of |M^nu - M^0| / |k|."""
    if L < 1:
        raise ValueError("L must be >= 1")
    Li = int(np.floor(L))
    k1, k2, k3 = _window(Li)
    ksq = (k1**2 + k2**2 + k3**2).astype(float)
    inside = (ksq > 0) & (ksq <= L * L) & (k3 != 0)
    gap = np.abs(family.evaluate(k1, k2, k3, nu) - family.evaluate(k1, k2, k3, 0.0))
    kn = np.sqrt(np.where(inside, ksq, 1.0))
    ratio = np.where(inside, gap / kn, 0.0)
    return ConvergenceAudit(nu, L, ratio.reshape(3, -1).max(axis=1), convergence_bound(nu, L))


def audit_l2_convergence(nu: float, g: SpectralField, family: MultiplierFamily = MG) -> float:
    """sum_{k != 0} |M^nu(k) - M^0(k)|^2 |grad g(k)|^2 / |k|^2."""
    if g.gauge_defect() > 0:
        raise GaugeViolationError("gauge violation: g carries k3=0 modes")
    lat = g.lattice
    diff = family.on_lattice(lat, nu) - family.on_lattice(lat, 0.0)
    # |grad g_hat|^2 / |k|^2 = |g_hat|^2 on k != 0
    weight = np.where(lat.ksq > 0, np.abs(g.coeffs) ** 2, 0.0)
    return float(np.sum(np.sum(diff**2, axis=0) * weight))
