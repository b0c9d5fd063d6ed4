"""Uniform-grid fields on the unit torus and their spectral calculus."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_N = 512


@dataclass(frozen=True, eq=False)
class SpectralWorkspace:
    """Wavenumber tables for real transforms of length ``n``.

    ``k`` holds the physical wavenumbers 2*pi*kappa for the rfft modes.
    """

    n: int
    k: np.ndarray
    k2: np.ndarray
    inv_k2: np.ndarray  # zero on the mean mode
    weights: np.ndarray  # multiplicity of each rfft mode in the full spectrum

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft(values)

    def backward(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfft(coeffs, n=self.n)

    def derivative_symbol(self, order: int) -> np.ndarray:
        sym = (1j * self.k) ** order
        if order % 2:
            sym[-1] = 0.0  # Nyquist mode has no odd derivative
        return sym

    def mode_sum(self, coeffs: np.ndarray, mult: np.ndarray | None = None) -> float:
        """sum over all nonzero modes of mult * |c_k / n|^2."""
        c2 = np.abs(coeffs / self.n) ** 2
        if mult is not None:
            c2 = c2 * mult
        return float(np.sum(self.weights[1:] * c2[1:]))


@functools.lru_cache(maxsize=16)
def workspace(n: int) -> SpectralWorkspace:
    k = 2 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    k2 = k ** 2
    inv_k2 = np.zeros_like(k2)
    inv_k2[1:] = 1.0 / k2[1:]
    weights = np.full(k.shape, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    for arr in (k, k2, inv_k2, weights):
        arr.setflags(write=False)
    return SpectralWorkspace(n, k, k2, inv_k2, weights)


def _check_n(n: int) -> None:
    if n < 16 or n & (n - 1):
        raise ValueError(f"grid size must be a power of two >= 16, got {n}")


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Samples ``values[j] = f(j/n)`` of a function on T = R/Z.

    ``m`` is the prescribed mass; it defaults to the sample mean.
    """

    values: np.ndarray
    m: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field values must be one-dimensional")
        _check_n(len(v))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.m is None:
            object.__setattr__(self, "m", float(np.mean(v)))

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], n: int = DEFAULT_N,
                      m: float | None = None) -> "PeriodicField":
        return cls(np.broadcast_to(f(grid(n)), (n,)), m)

    @classmethod
    def constant(cls, c: float, n: int = DEFAULT_N) -> "PeriodicField":
        return cls(np.full(n, float(c)), float(c))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def x(self) -> np.ndarray:
        return grid(self.n)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    def mass_defect(self) -> float:
        return abs(self.mean - self.m)

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            return PeriodicField(self.values + other.values)
        return PeriodicField(self.values + other)

    def __sub__(self, other):
        if isinstance(other, PeriodicField):
            return PeriodicField(self.values - other.values)
        return PeriodicField(self.values - other)

    def __mul__(self, c):
        return PeriodicField(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicField(-self.values)


def grid(n: int) -> np.ndarray:
    return np.arange(n) / n


def h_minus1_norm_values(values: np.ndarray) -> float:
    ws = workspace(len(values))
    return float(np.sqrt(ws.mode_sum(ws.forward(values), ws.inv_k2)))


def h_minus1_norm(f: PeriodicField) -> float:
    """Homogeneous H^-1 norm: (sum_{k != 0} |f_k|^2 / (2 pi k)^2)^(1/2)."""
    return h_minus1_norm_values(f.values)


def derivative_values(values: np.ndarray, order: int) -> np.ndarray:
    if order not in (1, 2, 3, 4):
        raise ValueError(f"unsupported derivative order {order}")
    ws = workspace(len(values))
    return ws.backward(ws.forward(values) * ws.derivative_symbol(order))


def derivative(f: PeriodicField, order: int = 1) -> PeriodicField:
    return PeriodicField(derivative_values(f.values, order), 0.0)


def inverse_laplacian(f: PeriodicField) -> PeriodicField:
    """Mean-zero phi with -phi_xx = f - mean(f)."""
    ws = workspace(f.n)
    return PeriodicField(ws.backward(ws.forward(f.values) * ws.inv_k2), 0.0)


def pairing(f: PeriodicField, g: PeriodicField) -> float:
    """L^2 pairing by the trapezoid rule (|T| = 1)."""
    return float(np.mean(f.values * g.values))


def l2_norm(f: PeriodicField) -> float:
    return float(np.sqrt(np.mean(np.square(f.values))))


def l2_norm_spectral(f: PeriodicField) -> float:
    ws = workspace(f.n)
    c = ws.forward(f.values)
    return float(np.sqrt(abs(c[0] / f.n) ** 2 + ws.mode_sum(c)))


def linf_norm(f: PeriodicField) -> float:
    return float(np.max(np.abs(f.values)))


def set_mean(f: PeriodicField, m: float) -> PeriodicField:
    return PeriodicField(f.values - np.mean(f.values) + m, m)


def high_mode_fraction(f: PeriodicField, cutoff: float = 0.25) -> float:
    """Share of the fluctuation energy carried by modes above cutoff * n."""
    ws = workspace(f.n)
    c = ws.forward(f.values)
    total = ws.mode_sum(c)
    if total == 0.0:
        return 0.0
    mult = (np.arange(len(c)) > cutoff * f.n).astype(float)
    return ws.mode_sum(c, mult) / total


def write_field_csv(f: PeriodicField, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# n={f.n} m={f.m:.17g}\n")
        for x, v in zip(f.x, f.values):
            fh.write(f"{x:.17g},{v:.17g}\n")


def read_field_csv(path) -> PeriodicField:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing '# n=<n> m=<m>' header")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        n = int(meta["n"])
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (n, 2):
        raise ValueError(f"{path}: expected {n} rows of x,value, got shape {data.shape}")
    return PeriodicField(data[:, 1], float(meta["m"]))
