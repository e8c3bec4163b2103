"""Periodic grids, Fourier transforms and spectral calculus on the unit torus.

Array layout is row-major with y outermost: ``values[j, i]`` sits at
``(x, y) = (i * h_x, j * h_y)``.  Transforms are unnormalised full
complex-to-complex DFTs (``numpy.fft.fft2``); the inverse carries the
``1 / (n_x * n_y)`` factor.

Wavenumbers are stored as integers.  The ``2*pi/length`` factor is applied
only when differentiating.  Odd-order derivatives drop the Nyquist mode so
that the derivative of a real field stays real; every first-order operator in
the package (divergence, curls, gradients, the Leray projector) is built on
the same "derivative wavenumber" so the discrete identities hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField2",
    "SpectralField",
    "forward_fft2",
    "inverse_fft2",
    "spectral_derivative",
    "gradient",
    "laplacian",
    "divergence",
    "curl_scalar",
    "curl_perp",
    "dealias_two_thirds",
    "dealias_mask",
    "l2_inner",
    "l2_norm",
]


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform ``n_y x n_x`` discretisation of a periodic square of side ``length``."""

    n_x: int
    n_y: int
    length: float = 1.0

    def __post_init__(self):
        for name in ("n_x", "n_y"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n!r}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length!r}")

    @classmethod
    def square(cls, n: int, length: float = 1.0) -> "Grid":
        return cls(n, n, length)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    @property
    def hx(self) -> float:
        return self.length / self.n_x

    @property
    def hy(self) -> float:
        return self.length / self.n_y

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of shape ``(n_y, n_x)``."""
        x = np.arange(self.n_x) * self.hx
        y = np.arange(self.n_y) * self.hy
        return np.meshgrid(x, y, indexing="xy")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers ``(kx, ky)`` in DFT order, shapes ``(n_x,)`` and ``(n_y,)``."""
        kx = np.fft.fftfreq(self.n_x, 1.0 / self.n_x).round().astype(np.int64)
        ky = np.fft.fftfreq(self.n_y, 1.0 / self.n_y).round().astype(np.int64)
        return kx, ky

    def wavenumber_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcast integer wavenumbers ``(KX, KY)`` of shape ``(n_y, n_x)``."""
        kx, ky = self.wavenumbers()
        return np.meshgrid(kx, ky, indexing="xy")

    def derivative_wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumber meshes with the Nyquist entries zeroed.

        These are the wavenumbers seen by every first-order operator.
        """
        KX, KY = self.wavenumber_mesh()
        KX = np.where(KX == -self.n_x // 2, 0, KX)
        KY = np.where(KY == -self.n_y // 2, 0, KY)
        return KX, KY

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def _check_grid(grid: Grid, *arrays):
    for a in arrays:
        if a.shape != grid.shape:
            raise ValueError(f"array of shape {a.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("field values must be finite")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        _check_grid(self.grid, self.values)

    def mean(self) -> float:
        return float(self.values.mean())

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField2:
    """Two-component real velocity field ``(u, v)`` on a grid."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))
        object.__setattr__(self, "v", _frozen(self.v))
        _check_grid(self.grid, self.u, self.v)

    @classmethod
    def from_array(cls, grid: Grid, arr: np.ndarray) -> "VectorField2":
        """Build from a ``(2, n_y, n_x)`` array."""
        return cls(grid, arr[0], arr[1])

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField2":
        return cls(grid, grid.zeros(), grid.zeros())

    def to_array(self) -> np.ndarray:
        return np.stack([self.u, self.v])

    def mean(self) -> tuple[float, float]:
        return float(self.u.mean()), float(self.v.mean())

    def _coerce(self, other):
        if not isinstance(other, VectorField2):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("vector fields live on different grids")
        return other

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return VectorField2(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return VectorField2(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, c: float) -> "VectorField2":
        return VectorField2(self.grid, self.u * c, self.v * c)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "VectorField2":
        return VectorField2(self.grid, self.u / c, self.v / c)

    def __neg__(self) -> "VectorField2":
        return VectorField2(self.grid, -self.u, -self.v)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Unnormalised Fourier coefficients: shape ``(n_y, n_x)`` or ``(2, n_y, n_x)``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, complex))
        if self.coeffs.shape[-2:] != self.grid.shape or self.coeffs.ndim not in (2, 3):
            raise ValueError(f"coefficient shape {self.coeffs.shape} does not match grid")

    @property
    def is_vector(self) -> bool:
        return self.coeffs.ndim == 3


def forward_fft2(f: ScalarField | VectorField2) -> SpectralField:
    if isinstance(f, VectorField2):
        return SpectralField(f.grid, np.fft.fft2(f.to_array()))
    return SpectralField(f.grid, np.fft.fft2(f.values))


def inverse_fft2(f: SpectralField) -> ScalarField | VectorField2:
    """Inverse transform, keeping the real part."""
    vals = np.fft.ifft2(f.coeffs).real
    if f.is_vector:
        return VectorField2.from_array(f.grid, vals)
    return ScalarField(f.grid, vals)


def _derivative_symbol(grid: Grid, axis: str, order: int) -> np.ndarray:
    if order not in (1, 2):
        raise ValueError(f"unsupported derivative order {order!r}; expected 1 or 2")
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    if order % 2:
        KX, KY = grid.derivative_wavenumbers()
    else:
        KX, KY = grid.wavenumber_mesh()
    k = KX if axis == "x" else KY
    return (2j * np.pi / grid.length * k) ** order


def spectral_derivative(f: SpectralField, axis: Literal["x", "y"], order: int = 1) -> SpectralField:
    """Multiply by ``(i 2 pi k / length)**order`` along ``axis``."""
    return SpectralField(f.grid, f.coeffs * _derivative_symbol(f.grid, axis, order))


def gradient(q: ScalarField) -> VectorField2:
    qh = np.fft.fft2(q.values)
    gx = np.fft.ifft2(qh * _derivative_symbol(q.grid, "x", 1)).real
    gy = np.fft.ifft2(qh * _derivative_symbol(q.grid, "y", 1)).real
    return VectorField2(q.grid, gx, gy)


def laplacian(f: ScalarField) -> ScalarField:
    g = f.grid
    sym = _derivative_symbol(g, "x", 2) + _derivative_symbol(g, "y", 2)
    return ScalarField(g, np.fft.ifft2(np.fft.fft2(f.values) * sym).real)


def divergence(w: VectorField2) -> ScalarField:
    g = w.grid
    uh, vh = np.fft.fft2(w.to_array())
    dh = uh * _derivative_symbol(g, "x", 1) + vh * _derivative_symbol(g, "y", 1)
    return ScalarField(g, np.fft.ifft2(dh).real)


def curl_scalar(w: VectorField2) -> ScalarField:
    """Scalar curl ``dv/dx - du/dy``."""
    g = w.grid
    uh, vh = np.fft.fft2(w.to_array())
    ch = vh * _derivative_symbol(g, "x", 1) - uh * _derivative_symbol(g, "y", 1)
    return ScalarField(g, np.fft.ifft2(ch).real)


def curl_perp(psi: ScalarField) -> VectorField2:
    """Perpendicular gradient ``(dpsi/dy, -dpsi/dx)``: divergence-free and zero-mean."""
    g = psi.grid
    ph = np.fft.fft2(psi.values)
    u = np.fft.ifft2(ph * _derivative_symbol(g, "y", 1)).real
    v = np.fft.ifft2(-ph * _derivative_symbol(g, "x", 1)).real
    return VectorField2(g, u, v)


def dealias_mask(grid: Grid) -> np.ndarray:
    """Boolean mask of modes kept by the 2/3 rule."""
    KX, KY = grid.wavenumber_mesh()
    return (np.abs(KX) <= grid.n_x / 3) & (np.abs(KY) <= grid.n_y / 3)


def dealias_two_thirds(f: SpectralField) -> SpectralField:
    """Zero every mode with ``|kx| > n_x/3`` or ``|ky| > n_y/3``."""
    return SpectralField(f.grid, np.where(dealias_mask(f.grid), f.coeffs, 0))


def l2_inner(a: VectorField2 | ScalarField, b: VectorField2 | ScalarField) -> float:
    """Midpoint-rule L2 inner product on the torus."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    h2 = a.grid.cell_area
    if isinstance(a, VectorField2):
        return float((np.sum(a.u * b.u) + np.sum(a.v * b.v)) * h2)
    return float(np.sum(a.values * b.values) * h2)


def l2_norm(a: VectorField2 | ScalarField) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))
