"""Transforms, lattice bookkeeping and norms on the periodic box [0, 2pi]^d.

Coefficients are normalized so that ``coeff(k) = (2pi)^-d int f e^{-ik.x} dx``.
With this convention Parseval reads ``sum_k |coeff(k)|^2 = (2pi)^-d int f^2``,
i.e. every L2-type norm in the package is the volume-averaged one.

Fields are stored on the full lattice in FFT index order.  Wavenumber
components run over ``[-N/2 + 1, N/2]``; the Nyquist component ``N/2`` is
its own Hermitian partner, so odd-order operators (first derivatives) treat
it as zero to keep real fields real.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import GaugeViolationError, LatticeError

__all__ = [
    "Lattice",
    "SpectralField",
    "ShellDecomposition",
    "forward_transform",
    "inverse_transform",
    "dealias",
    "project_mg_gauge",
    "gradient",
    "laplacian",
    "sobolev_norm",
    "negative_sobolev_norm",
    "l2_norm",
    "inner",
    "linf_norm",
    "shell_project",
    "besov_norm",
    "expand_half",
    "tail_fraction",
]


def _axis_wavenumbers(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)
    k[n // 2] = n // 2
    return k


@dataclass(frozen=True)
class Lattice:
    """Integer wavevector lattice dual to an ``N_1 x ... x N_d`` collocation grid."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) == 0:
            raise LatticeError("lattice needs at least one axis")
        for n in dims:
            if n < 8 or n % 2:
                raise LatticeError(f"grid size must be even and >= 8, got {n}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def cubic(cls, n: int, d: int = 3) -> "Lattice":
        return cls((n,) * d)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def dx(self) -> float:
        return 2 * np.pi / max(self.dims)

    @property
    def half_shape(self) -> tuple[int, ...]:
        return self.dims[:-1] + (self.dims[-1] // 2 + 1,)

    def _broadcast(self, axis_values, axis):
        shape = [1] * self.ndim
        shape[axis] = -1
        return axis_values.reshape(shape)

    @cached_property
    def k(self) -> tuple[np.ndarray, ...]:
        """Per-axis integer wavenumbers, broadcastable against the full lattice."""
        return tuple(self._broadcast(_axis_wavenumbers(n), a) for a, n in enumerate(self.dims))

    @cached_property
    def k_odd(self) -> tuple[np.ndarray, ...]:
        out = []
        for a, n in enumerate(self.dims):
            kk = _axis_wavenumbers(n)
            kk[n // 2] = 0
            out.append(self._broadcast(kk, a))
        return tuple(out)

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(kk.astype(float) ** 2 for kk in self.k)

    @cached_property
    def kinf(self) -> np.ndarray:
        """Max-norm |k|_inf of each lattice point."""
        out = np.zeros(self.dims, dtype=np.int64)
        for kk in self.k:
            out = np.maximum(out, np.abs(kk))
        return out

    @cached_property
    def partner(self) -> tuple[np.ndarray, ...]:
        """Open-mesh index arrays mapping each k to -k."""
        return np.ix_(*[(-np.arange(n)) % n for n in self.dims])

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.ones(self.dims, dtype=bool)
        for kk, n in zip(self.k, self.dims):
            keep = keep & (3 * np.abs(kk) <= n)
        return keep

    @cached_property
    def gauge_mask(self) -> np.ndarray:
        return np.broadcast_to(self.k[-1] != 0, self.dims)

    # half-spectrum (real FFT) layout, last axis holds k_d = 0 .. N_d/2
    @cached_property
    def k_half(self) -> tuple[np.ndarray, ...]:
        h = self.dims[-1] // 2 + 1
        return self.k[:-1] + (self._broadcast(np.arange(h), self.ndim - 1),)

    @cached_property
    def k_odd_half(self) -> tuple[np.ndarray, ...]:
        h = self.dims[-1] // 2 + 1
        last = np.arange(h)
        last[-1] = 0
        return self.k_odd[:-1] + (self._broadcast(last, self.ndim - 1),)

    @cached_property
    def ksq_half(self) -> np.ndarray:
        return sum(kk.astype(float) ** 2 for kk in self.k_half)

    @cached_property
    def half_weight(self) -> np.ndarray:
        """Multiplicity of each half-spectrum entry in full-lattice sums."""
        h = self.dims[-1] // 2 + 1
        w = np.full(h, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return self._broadcast(w, self.ndim - 1)

    def grid(self) -> tuple[np.ndarray, ...]:
        axes = [2 * np.pi * np.arange(n) / n for n in self.dims]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def index_of(self, k) -> tuple[int, ...]:
        k = tuple(int(c) for c in k)
        if len(k) != self.ndim:
            raise LatticeError(f"wavevector {k} has wrong dimension for {self.dims}")
        idx = []
        for c, n in zip(k, self.dims):
            if not (-n // 2 + 1 <= c <= n // 2):
                raise LatticeError(f"wavevector {k} outside lattice {self.dims}")
            idx.append(c % n)
        return tuple(idx)

    def wavevector_at(self, index) -> tuple[int, ...]:
        return tuple(int(kk.ravel()[i]) for kk, i in zip(self.k, index))


def expand_half(half: np.ndarray, lattice: Lattice) -> np.ndarray:
    """Rebuild full-lattice coefficients from the k_d >= 0 half spectrum."""
    n_last = lattice.dims[-1]
    h = n_last // 2 + 1
    full = np.empty(lattice.dims, dtype=complex)
    full[..., :h] = half
    neg = [(-np.arange(n)) % n for n in lattice.dims[:-1]]
    tail = np.arange(h, n_last)
    full[..., h:] = np.conj(half[np.ix_(*neg, n_last - tail)])
    return full


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Normalized Fourier coefficients of a real scalar on a :class:`Lattice`."""

    lattice: Lattice
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.lattice.dims:
            raise LatticeError(f"coefficient shape {c.shape} does not match lattice {self.lattice.dims}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice: Lattice) -> "SpectralField":
        return cls(lattice, np.zeros(lattice.dims, dtype=complex))

    @classmethod
    def from_modes(cls, lattice: Lattice, modes) -> "SpectralField":
        """Build a field from ``{k: amplitude}`` entries, taken literally."""
        c = np.zeros(lattice.dims, dtype=complex)
        for k, amp in dict(modes).items():
            c[lattice.index_of(k)] = amp
        return cls(lattice, c)

    @classmethod
    def from_half(cls, lattice: Lattice, half: np.ndarray) -> "SpectralField":
        return cls(lattice, expand_half(half, lattice))

    @property
    def half(self) -> np.ndarray:
        return self.coeffs[..., : self.lattice.dims[-1] // 2 + 1]

    def coeff(self, k) -> complex:
        return complex(self.coeffs[self.lattice.index_of(k)])

    def hermitian_defect(self) -> float:
        c = self.coeffs
        return float(np.max(np.abs(c[self.lattice.partner] - np.conj(c)), initial=0.0))

    def gauge_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs[..., 0]), initial=0.0))

    @property
    def mean(self) -> complex:
        return complex(self.coeffs[(0,) * self.lattice.ndim])

    def check_gauge(self, tol: float = 0.0) -> None:
        if self.gauge_defect() > tol:
            raise GaugeViolationError("gauge violation: field carries k3=0 modes")

    def to_physical(self) -> np.ndarray:
        return inverse_transform(self)

    def _same(self, other: "SpectralField") -> None:
        if other.lattice != self.lattice:
            raise LatticeError("fields live on different lattices")

    def __add__(self, other):
        self._same(other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.lattice, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.lattice, -self.coeffs)


def forward_transform(samples, lattice: Lattice | None = None) -> SpectralField:
    """Normalized forward FFT of real grid samples."""
    a = np.asarray(samples)
    if lattice is None:
        lattice = Lattice(a.shape)
    elif a.shape != lattice.dims:
        raise LatticeError(f"sample shape {a.shape} does not match lattice {lattice.dims}")
    if np.iscomplexobj(a):
        raise LatticeError("forward_transform expects real samples")
    return SpectralField(lattice, sfft.fftn(a.astype(float)) / lattice.size)


def inverse_transform(field: SpectralField) -> np.ndarray:
    lat = field.lattice
    return sfft.irfftn(field.half * lat.size, s=lat.dims)


def dealias(field: SpectralField) -> SpectralField:
    """2/3 rule: drop every mode with some |k_i| > N_i / 3."""
    return SpectralField(field.lattice, np.where(field.lattice.dealias_mask, field.coeffs, 0))


def project_mg_gauge(field: SpectralField) -> SpectralField:
    """Remove the x3-average, i.e. zero every k3 = 0 mode."""
    return SpectralField(field.lattice, np.where(field.lattice.gauge_mask, field.coeffs, 0))


def gradient(field: SpectralField) -> tuple[SpectralField, ...]:
    lat = field.lattice
    return tuple(SpectralField(lat, 1j * kk * field.coeffs) for kk in lat.k_odd)


def laplacian(field: SpectralField) -> SpectralField:
    return SpectralField(field.lattice, -field.lattice.ksq * field.coeffs)


def l2_norm(field: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(field.coeffs) ** 2)))


def inner(f: SpectralField, g: SpectralField) -> float:
    """Volume-averaged L2 inner product of two real fields."""
    f._same(g)
    return float(np.real(np.vdot(g.coeffs, f.coeffs)))


def linf_norm(field: SpectralField) -> float:
    return float(np.max(np.abs(inverse_transform(field))))


def sobolev_norm(field: SpectralField, s: float) -> float:
    """Homogeneous H^s norm, sqrt(sum_{k != 0} |k|^{2s} |f_k|^2)."""
    if s < 0:
        raise ValueError(f"sobolev_norm needs s >= 0, got {s}")
    ksq = field.lattice.ksq
    w = np.where(ksq > 0, ksq, 0.0) ** s if s > 0 else (ksq > 0).astype(float)
    return float(np.sqrt(np.sum(w * np.abs(field.coeffs) ** 2)))


def negative_sobolev_norm(field: SpectralField, s: float = 1.0) -> float:
    """H^{-s} norm over nonzero modes, sqrt(sum |k|^{-2s} |f_k|^2)."""
    if s < 0:
        raise ValueError("order must be nonnegative")
    ksq = field.lattice.ksq
    w = np.zeros_like(ksq)
    np.divide(1.0, ksq**s, out=w, where=ksq > 0)
    return float(np.sqrt(np.sum(w * np.abs(field.coeffs) ** 2)))


def tail_fraction(field: SpectralField, ratio: float = 0.9) -> float:
    """Share of L2 energy on |k|_inf > ratio * N/3, the under-resolution guard."""
    a2 = np.abs(field.coeffs) ** 2
    total = float(np.sum(a2))
    if total == 0:
        return 0.0
    cut = ratio * min(field.lattice.dims) / 3
    return float(np.sum(a2[field.lattice.kinf > cut])) / total


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


class ShellDecomposition:
    """Smooth dyadic partition of unity on the wavevector lattice.

    ``phi(xi) = chi(|xi| / 2) - chi(|xi|)`` where ``chi`` is a smooth cutoff
    equal to 1 below ``inner`` and 0 above ``outer``.  The blocks telescope,
    so ``sum_j phi(2^-j k) = 1`` for every ``k != 0``; ``phi`` is supported
    in ``(inner, 2 outer)`` which sits inside the shell ``[1/2, 4]``.
    """

    def __init__(self, inner: float = 0.75, outer: float = 1.25):
        if not (0.5 <= inner < outer <= 2.0 and outer <= 2 * inner):
            raise ValueError("need 1/2 <= inner < outer <= min(2, 2*inner)")
        self.inner = inner
        self.outer = outer

    def chi(self, r):
        return _smooth_step((self.outer - np.asarray(r, float)) / (self.outer - self.inner))

    def phi(self, r):
        r = np.asarray(r, float)
        return self.chi(r / 2) - self.chi(r)

    @property
    def support(self) -> tuple[float, float]:
        return self.inner, 2 * self.outer

    def j_range(self, lattice: Lattice) -> range:
        """Block indices whose support meets some nonzero lattice wavevector."""
        rmax = float(np.sqrt(lattice.ksq.max()))
        lo, hi = self.support
        j_min = int(np.floor(np.log2(1.0 / hi)))
        j_max = int(np.ceil(np.log2(rmax / lo)))
        return range(j_min, j_max + 1)

    def weights(self, lattice: Lattice, j: int) -> np.ndarray:
        return self.phi(np.sqrt(lattice.ksq) * 2.0 ** (-j))

    def partition_defect(self, lattice: Lattice) -> float:
        total = sum(self.weights(lattice, j) for j in self.j_range(lattice))
        nz = lattice.ksq > 0
        return float(np.max(np.abs(total[nz] - 1.0)))

    def min_square_sum(self, samples: int = 20001) -> float:
        """Lower bound of sum_j phi_j(r)^2 over one dyadic period r in [1, 2]."""
        r = np.linspace(1.0, 2.0, samples)
        tot = sum(self.phi(r * 2.0 ** (-j)) ** 2 for j in range(-3, 4))
        return float(tot.min())


_DEFAULT_SHELLS = ShellDecomposition()


def shell_project(field: SpectralField, j: int, shells: ShellDecomposition | None = None) -> SpectralField:
    shells = shells or _DEFAULT_SHELLS
    return SpectralField(field.lattice, shells.weights(field.lattice, j) * field.coeffs)


def besov_norm(field: SpectralField, s: float, p: float, q: float,
               shells: ShellDecomposition | None = None) -> float:
    """||2^{js} ||Delta_j f||_{L^p}||_{l^q}; p, q may be ``np.inf``."""
    shells = shells or _DEFAULT_SHELLS
    if p < 1 or q < 1:
        raise ValueError("Besov exponents must satisfy p, q >= 1")
    terms = []
    for j in shells.j_range(field.lattice):
        block = shell_project(field, j, shells)
        if p == 2:
            lp = l2_norm(block)
        else:
            vals = np.abs(inverse_transform(block))
            lp = float(vals.max()) if np.isinf(p) else float(np.mean(vals**p) ** (1.0 / p))
        terms.append(2.0 ** (j * s) * lp)
    terms = np.asarray(terms)
    if np.isinf(q):
        return float(terms.max(initial=0.0))
    return float(np.sum(terms**q) ** (1.0 / q))
