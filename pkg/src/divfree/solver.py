"""Pseudo-spectral 2D Navier-Stokes in vorticity-streamfunction form.

Time stepping is Crank-Nicolson on the viscous term and forward Euler on the
advection and forcing terms::

    (1 + nu k^2 dt / 2) w_new = (1 - nu k^2 dt / 2) w + dt (f - u.grad w)

with ``k^2 = 4 pi^2 |k|^2`` and the advection product dealiased by the 2/3
rule.  Internally the stepper works on real-input FFT layouts; public
functions take and return full complex spectra.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .noise import GrfSpec, sample_grf_scalar
from .spectral import Grid, ScalarField, SpectralField, VectorField2

__all__ = [
    "UnstableStep",
    "SolverConfig",
    "Trajectory",
    "VorticityStepper",
    "forcing_field",
    "step_vorticity",
    "velocity_from_vorticity",
    "simulate",
    "taylor_green_velocity",
    "taylor_green_vorticity",
    "taylor_green_pressure",
]

log = logging.getLogger(__name__)

DEFAULT_FORCING_AMPLITUDE = 0.1 * np.sqrt(2.0)


class UnstableStep(RuntimeError):
    """CFL violation or non-finite state; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    nu: float = 1e-3
    dt: float = 1e-3
    record_every: int = 1000
    snapshots: int = 50
    forcing_amplitude: float = DEFAULT_FORCING_AMPLITUDE
    forcing_phase: float = 0.0
    grid: Grid = field(default_factory=lambda: Grid(64, 64))
    seed: int = 0
    init: GrfSpec = field(default_factory=GrfSpec)

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.record_every < 1 or self.snapshots < 1:
            raise ValueError("record_every and snapshots must be positive")

    @property
    def snapshot_interval(self) -> float:
        return self.record_every * self.dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    config: SolverConfig
    frames: list[VectorField2]
    times: np.ndarray

    def __len__(self) -> int:
        return len(self.frames)

    def to_array(self) -> np.ndarray:
        """Stack as ``(T, 2, n_y, n_x)``."""
        return np.stack([f.to_array() for f in self.frames])


def forcing_field(config: SolverConfig) -> ScalarField:
    """Kolmogorov-type forcing ``A sin(2 pi (x + y) / L + phase)``."""
    g = config.grid
    X, Y = g.coords()
    vals = config.forcing_amplitude * np.sin(2 * np.pi * (X + Y) / g.length + config.forcing_phase)
    return ScalarField(g, vals)


class VorticityStepper:
    """Precomputed operators for repeated steps of one configuration."""

    def __init__(self, config: SolverConfig, nonlinear: bool = True):
        self.config = config
        self.nonlinear = nonlinear
        g = config.grid
        nx, ny = g.n_x, g.n_y
        c = 2 * np.pi / g.length
        kx = np.arange(nx // 2 + 1)
        ky = np.fft.fftfreq(ny, 1.0 / ny).round().astype(np.int64)
        KX, KY = np.meshgrid(kx, ky, indexing="xy")
        KXd = np.where(KX == nx // 2, 0, KX)
        KYd = np.where(KY == -ny // 2, 0, KY)
        k2 = c**2 * (KX**2 + KY**2)
        kd2 = c**2 * (KXd**2 + KYd**2).astype(float)
        half = 0.5 * config.nu * k2 * config.dt
        self.lhs = 1.0 / (1.0 + half)
        self.rhs = 1.0 - half
        self.inv_kd2 = np.divide(1.0, kd2, out=np.zeros_like(kd2), where=kd2 > 0)
        self.ikx = 1j * c * KXd
        self.iky = 1j * c * KYd
        self.mask = (np.abs(KX) <= nx / 3) & (np.abs(KY) <= ny / 3)
        self.f_hat = np.fft.rfft2(forcing_field(config).values)
        self.f_hat[0, 0] = 0.0
        self.h = min(g.hx, g.hy)
        self.shape = g.shape

    def velocity_hat(self, w_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        psi_hat = w_hat * self.inv_kd2
        return self.iky * psi_hat, -self.ikx * psi_hat

    def step(self, w_hat: np.ndarray, index: int = 0) -> np.ndarray:
        """Advance real-FFT vorticity coefficients by one step."""
        dt = self.config.dt
        rhs = self.rhs * w_hat + dt * self.f_hat
        if self.nonlinear:
            uh, vh = self.velocity_hat(w_hat)
            s = self.shape
            u = np.fft.irfft2(uh, s)
            v = np.fft.irfft2(vh, s)
            umax = max(np.abs(u).max(), np.abs(v).max())
            if not np.isfinite(umax):
                raise UnstableStep(f"non-finite velocity at step {index}", index)
            if umax * dt / self.h > 1.0:
                raise UnstableStep(
                    f"CFL violated at step {index}: max|u| dt / h = {umax * dt / self.h:.3g} > 1", index
                )
            wx = np.fft.irfft2(self.ikx * w_hat, s)
            wy = np.fft.irfft2(self.iky * w_hat, s)
            adv = np.fft.rfft2(u * wx + v * wy)
            rhs -= dt * np.where(self.mask, adv, 0.0)
        out = rhs * self.lhs
        out[0, 0] = 0.0
        return out


def step_vorticity(omega_hat: SpectralField, config: SolverConfig, nonlinear: bool = True) -> SpectralField:
    """One solver step on full complex coefficients.

    ``nonlinear=False`` drops the advection term (test hook).
    """
    g = omega_hat.grid
    if g != config.grid:
        raise ValueError("spectral field grid does not match the solver grid")
    stepper = VorticityStepper(config, nonlinear=nonlinear)
    w = np.fft.ifft2(omega_hat.coeffs).real
    w_next = np.fft.irfft2(stepper.step(np.fft.rfft2(w)), g.shape)
    return SpectralField(g, np.fft.fft2(w_next))


def velocity_from_vorticity(omega: ScalarField) -> VectorField2:
    """Solve ``-lap psi = omega`` spectrally and return ``(dpsi/dy, -dpsi/dx)``."""
    g = omega.grid
    c = 2 * np.pi / g.length
    KX, KY = g.derivative_wavenumbers()
    kd2 = c**2 * (KX**2 + KY**2).astype(float)
    psi_hat = np.fft.fft2(omega.values) * np.divide(1.0, kd2, out=np.zeros_like(kd2), where=kd2 > 0)
    u = np.fft.ifft2(1j * c * KY * psi_hat).real
    v = np.fft.ifft2(-1j * c * KX * psi_hat).real
    return VectorField2(g, u, v)


def simulate(
    config: SolverConfig,
    omega0: ScalarField | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> Trajectory:
    """Run ``record_every * (snapshots - 1)`` steps, storing velocity snapshots.

    The initial vorticity is a GRF drawn with ``config.init`` keyed by
    ``config.seed`` unless ``omega0`` is given.  The mean mode is removed.
    """
    g = config.grid
    if omega0 is None:
        omega0 = sample_grf_scalar(replace(config.init, seed=config.seed), g)
    stepper = VorticityStepper(config)
    w_hat = np.fft.rfft2(omega0.values)
    w_hat[0, 0] = 0.0

    def snapshot(w_hat):
        return velocity_from_vorticity(ScalarField(g, np.fft.irfft2(w_hat, g.shape)))

    frames = [snapshot(w_hat)]
    step = 0
    for k in range(1, config.snapshots):
        for _ in range(config.record_every):
            w_hat = stepper.step(w_hat, step)
            step += 1
        frames.append(snapshot(w_hat))
        if progress is not None:
            progress(k, step * config.dt)
    times = np.arange(config.snapshots) * config.record_every * config.dt
    return Trajectory(config, frames, times)


def taylor_green_velocity(grid: Grid, t: float = 0.0, nu: float = 0.0) -> VectorField2:
    """``(sin 2pi x cos 2pi y, -cos 2pi x sin 2pi y) exp(-8 pi^2 nu t)`` on the unit torus."""
    X, Y = grid.coords()
    a, b = 2 * np.pi * X / grid.length, 2 * np.pi * Y / grid.length
    decay = np.exp(-8 * np.pi**2 * nu * t / grid.length**2)
    return VectorField2(grid, np.sin(a) * np.cos(b) * decay, -np.cos(a) * np.sin(b) * decay)


def taylor_green_vorticity(grid: Grid, t: float = 0.0, nu: float = 0.0) -> ScalarField:
    X, Y = grid.coords()
    a, b = 2 * np.pi * X / grid.length, 2 * np.pi * Y / grid.length
    decay = np.exp(-8 * np.pi**2 * nu * t / grid.length**2)
    return ScalarField(grid, 4 * np.pi / grid.length * np.sin(a) * np.sin(b) * decay)


def taylor_green_pressure(grid: Grid) -> ScalarField:
    """Kinematic pressure of the unit-amplitude Taylor-Green velocity."""
    X, Y = grid.coords()
    a, b = 4 * np.pi * X / grid.length, 4 * np.pi * Y / grid.length
    return ScalarField(grid, 0.25 * (np.cos(a) + np.cos(b)))
