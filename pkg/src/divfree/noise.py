"""Gaussian random fields and divergence-free Gaussian noise.

Randomness is keyed by ``(seed, index)`` through :class:`numpy.random.SeedSequence`
spawn keys, so frame ``i`` of seed ``s`` is the same no matter how many frames
are drawn or in which order.  ``frame_rng(s, i)`` is the generator that
``SeedSequence(s).spawn(n)[i]`` would produce.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.ndimage import gaussian_filter

from .spectral import Grid, ScalarField, VectorField2

__all__ = [
    "GrfSpec",
    "StreamNoiseSpec",
    "frame_rng",
    "split_seed",
    "grf_coefficient_variance",
    "sample_grf_scalar",
    "sample_divfree_noise",
    "divfree_noise_array",
    "solenoidal_mode_variance",
    "central_difference_divergence",
]

BLUR_TRUNCATE = 4.0


def frame_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def split_seed(seed: int, index: int) -> int:
    """Derive the 64-bit child seed used for trajectory/frame ``index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GrfSpec:
    """Power-law Gaussian random field ``E|c_k|^2 = A^2 (4 pi^2 |k|^2 / L^2 + tau^2)^-alpha``.

    ``c_k`` are Fourier-series coefficients (``fft / (n_x n_y)``), so the
    field statistics do not depend on resolution.  ``amplitude=None`` uses
    ``A = tau**(alpha - 1)``, which puts the large-scale coefficient variance
    at ``tau**-2``.
    """

    alpha: float = 2.5
    tau: float = 7.0
    seed: int = 0
    amplitude: float | None = None

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"alpha must exceed 1 for a trace-class covariance, got {self.alpha}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    @property
    def scale(self) -> float:
        return self.tau ** (self.alpha - 1.0) if self.amplitude is None else float(self.amplitude)


@dataclass(frozen=True)
class StreamNoiseSpec:
    """Divergence-free noise built from a random stream function.

    ``spectral`` draws ``psi`` from ``grf`` and takes the spectral
    perpendicular gradient.  ``finite_difference`` blurs white noise with a
    periodic Gaussian of width ``blur_sigma`` cells and takes periodic central
    differences.  With ``normalize`` the output has expected squared L2 norm 1.
    """

    mode: Literal["spectral", "finite_difference"] = "spectral"
    grf: GrfSpec = field(default_factory=GrfSpec)
    blur_sigma: float = 2.0
    normalize: bool = True

    def __post_init__(self):
        if self.mode not in ("spectral", "finite_difference"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be positive")


def grf_coefficient_variance(spec: GrfSpec, grid: Grid) -> np.ndarray:
    """Variance of each Fourier-series coefficient, zero at the mean mode."""
    KX, KY = grid.wavenumber_mesh()
    k2 = (2 * np.pi / grid.length) ** 2 * (KX**2 + KY**2)
    var = spec.scale**2 * (k2 + spec.tau**2) ** (-spec.alpha)
    var[0, 0] = 0.0
    return var


def _grf_values(var: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m = var.size
    xi_hat = np.fft.fft2(rng.standard_normal(var.shape))
    # E|xi_hat|^2 = m, so sqrt(var * m) * xi_hat has E|.|^2 = m^2 var (unnormalised coefficients)
    return np.fft.ifft2(np.sqrt(var * m) * xi_hat).real


def sample_grf_scalar(spec: GrfSpec, grid: Grid, index: int = 0) -> ScalarField:
    """Zero-mean real Gaussian field; conjugate symmetry comes from real white noise."""
    var = grf_coefficient_variance(spec, grid)
    return ScalarField(grid, _grf_values(var, frame_rng(spec.seed, index)))


def _spectral_symbols(grid: Grid):
    c = 2 * np.pi / grid.length
    KX, KY = grid.derivative_wavenumbers()
    return 1j * c * KY, -1j * c * KX


def _fd_symbols(spec: StreamNoiseSpec, grid: Grid):
    delta = np.zeros(grid.shape)
    delta[0, 0] = 1.0
    kernel = gaussian_filter(delta, spec.blur_sigma, mode="wrap", truncate=BLUR_TRUNCATE)
    G = np.fft.fft2(kernel)
    KX, KY = grid.wavenumber_mesh()
    dx = 1j * np.sin(2 * np.pi * KX / grid.n_x) / grid.hx
    dy = 1j * np.sin(2 * np.pi * KY / grid.n_y) / grid.hy
    return G * dy, -G * dx


def _norm_scale(spec: StreamNoiseSpec, grid: Grid) -> float:
    if not spec.normalize:
        return 1.0
    if spec.mode == "spectral":
        su, sv = _spectral_symbols(grid)
        var = grf_coefficient_variance(spec.grf, grid)
        expected = grid.length**2 * np.sum((np.abs(su) ** 2 + np.abs(sv) ** 2) * var)
    else:
        su, sv = _fd_symbols(spec, grid)
        expected = grid.cell_area * np.sum(np.abs(su) ** 2 + np.abs(sv) ** 2)
    return 1.0 / np.sqrt(expected)


def central_difference_divergence(arr: np.ndarray, grid: Grid) -> np.ndarray:
    """Periodic second-order central-difference divergence of ``(..., 2, n_y, n_x)``."""
    u, v = arr[..., 0, :, :], arr[..., 1, :, :]
    du = (np.roll(u, -1, axis=-1) - np.roll(u, 1, axis=-1)) / (2 * grid.hx)
    dv = (np.roll(v, -1, axis=-2) - np.roll(v, 1, axis=-2)) / (2 * grid.hy)
    return du + dv


def _fd_frame(spec: StreamNoiseSpec, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    psi = gaussian_filter(rng.standard_normal(grid.shape), spec.blur_sigma, mode="wrap", truncate=BLUR_TRUNCATE)
    dpsi_dx = (np.roll(psi, -1, axis=1) - np.roll(psi, 1, axis=1)) / (2 * grid.hx)
    dpsi_dy = (np.roll(psi, -1, axis=0) - np.roll(psi, 1, axis=0)) / (2 * grid.hy)
    return np.stack([dpsi_dy, -dpsi_dx])


def divfree_noise_array(spec: StreamNoiseSpec, grid: Grid, frames: int, first_frame: int = 0) -> np.ndarray:
    """Raw ``(frames, 2, n_y, n_x)`` noise; frame ``i`` uses ``frame_rng(seed, first_frame + i)``."""
    if frames < 1:
        raise ValueError("frames must be positive")
    scale = _norm_scale(spec, grid)
    out = np.empty((frames, 2) + grid.shape)
    if spec.mode == "spectral":
        var = grf_coefficient_variance(spec.grf, grid)
        c = 2 * np.pi / grid.length
        KX, KY = grid.derivative_wavenumbers()
        sym = np.stack([1j * c * KY, -1j * c * KX])
        for i in range(frames):
            psi = _grf_values(var, frame_rng(spec.grf.seed, first_frame + i))
            out[i] = np.fft.ifft2(sym * np.fft.fft2(psi)).real
    else:
        for i in range(frames):
            out[i] = _fd_frame(spec, grid, frame_rng(spec.grf.seed, first_frame + i))
    out *= scale
    return out


def sample_divfree_noise(
    spec: StreamNoiseSpec, grid: Grid, frames: int = 1, first_frame: int = 0
) -> list[VectorField2]:
    arr = divfree_noise_array(spec, grid, frames, first_frame)
    return [VectorField2.from_array(grid, a) for a in arr]


def solenoidal_mode_variance(spec: StreamNoiseSpec, grid: Grid) -> np.ndarray:
    """Per-mode variance of the solenoidal coordinate of spectral-mode noise.

    For unnormalised coefficients ``(u_hat, v_hat)`` the coordinate is
    ``a_k = (ky u_hat - kx v_hat) / |k|`` with derivative wavenumbers; the
    noise is a centred circular Gaussian in each ``a_k`` and vanishes in the
    orthogonal (gradient) direction.  Returns ``E|a_k|^2`` of shape ``(n_y, n_x)``.
    """
    if spec.mode != "spectral":
        raise ValueError("mode variances are defined for spectral-mode noise only")
    c = 2 * np.pi / grid.length
    KX, KY = grid.derivative_wavenumbers()
    k2 = (KX**2 + KY**2).astype(float)
    var = grf_coefficient_variance(spec.grf, grid)
    scale = _norm_scale(spec, grid)
    return scale**2 * c**2 * k2 * grid.size**2 * var
