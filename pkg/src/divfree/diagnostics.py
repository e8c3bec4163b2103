"""Evaluation metrics: MSE, divergence error, pressure recovery, spectra, staged reports."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hodge import distance_to_solenoidal
from .spectral import ScalarField, VectorField2, curl_scalar, dealias_mask, divergence

__all__ = [
    "SpectrumCurve",
    "StageReport",
    "DEFAULT_STAGES",
    "mse",
    "divergence_error",
    "pressure_reconstruct",
    "enstrophy_spectrum",
    "energy_spectrum",
    "spectral_slope",
    "stage_report",
    "pooled_moments",
]

# Table-style staging: prediction, short-term and long-term frame ranges (inclusive).
DEFAULT_STAGES = {"prediction": (15, 49), "short_term": (50, 100), "long_term": (101, 300)}


def _same_grid(a: VectorField2, b: VectorField2):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def mse(pred: VectorField2, ref: VectorField2) -> tuple[float, float]:
    """Per-component mean squared error ``(u_mse, v_mse)``."""
    _same_grid(pred, ref)
    return float(np.mean((pred.u - ref.u) ** 2)), float(np.mean((pred.v - ref.v) ** 2))


def divergence_error(u: VectorField2) -> float:
    """Grid mean of the squared spectral divergence."""
    return float(np.mean(divergence(u).values ** 2))


def pressure_reconstruct(u: VectorField2, tol: float = 1e-6) -> ScalarField:
    """Kinematic pressure from ``-lap p = div((u . grad) u)`` with zero-mean ``p``.

    The advection term is formed pseudo-spectrally and dealiased.  A warning is
    issued when ``u`` is not solenoidal to within ``tol``, since the result is
    then only a consistency probe.
    """
    g = u.grid
    dist = distance_to_solenoidal(u)
    if dist > tol:
        warnings.warn(
            f"pressure reconstruction on a non-solenoidal field (||u - Pu||/||u|| = {dist:.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    c = 2 * np.pi / g.length
    KX, KY = g.derivative_wavenumbers()
    ikx, iky = 1j * c * KX, 1j * c * KY
    uh, vh = np.fft.fft2(u.to_array())
    ux, uy = np.fft.ifft2(ikx * uh).real, np.fft.ifft2(iky * uh).real
    vx, vy = np.fft.ifft2(ikx * vh).real, np.fft.ifft2(iky * vh).real
    mask = dealias_mask(g)
    ax = np.where(mask, np.fft.fft2(u.u * ux + u.v * uy), 0.0)
    ay = np.where(mask, np.fft.fft2(u.u * vx + u.v * vy), 0.0)
    div_hat = ikx * ax + iky * ay
    KXf, KYf = g.wavenumber_mesh()
    k2 = c**2 * (KXf**2 + KYf**2).astype(float)
    p_hat = np.divide(div_hat, k2, out=np.zeros_like(div_hat), where=k2 > 0)
    return ScalarField(g, np.fft.ifft2(p_hat).real)


@dataclass(frozen=True, eq=False)
class SpectrumCurve:
    shells: np.ndarray
    values: np.ndarray
    kind: str = "enstrophy"

    def __post_init__(self):
        if np.any(np.diff(self.shells) <= 0):
            raise ValueError("shells must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("spectrum values must be nonnegative")

    def total(self) -> float:
        return float(np.sum(self.values))


def _shell_bin(grid, density: np.ndarray, kind: str) -> SpectrumCurve:
    KX, KY = grid.wavenumber_mesh()
    shell = np.floor(np.sqrt(KX**2 + KY**2) + 0.5).astype(np.int64)
    sums = np.bincount(shell.ravel(), weights=density.ravel())
    shells = np.arange(1, sums.size)
    return SpectrumCurve(shells, sums[1:], kind)


def enstrophy_spectrum(u: VectorField2) -> SpectrumCurve:
    """Shell sums of ``|w_hat|^2 / (2 (n_x n_y)^2)`` over nearest-integer radii.

    Shells run from 1 up to the grid corner so the total equals the grid mean
    of ``w^2 / 2``; shell 0 (the mean) is excluded.
    """
    g = u.grid
    wh = np.fft.fft2(curl_scalar(u).values)
    return _shell_bin(g, 0.5 * np.abs(wh) ** 2 / g.size**2, "enstrophy")


def energy_spectrum(u: VectorField2) -> SpectrumCurve:
    """Kinetic-energy counterpart of :func:`enstrophy_spectrum` (``|u_hat|^2 / 2``)."""
    g = u.grid
    uh, vh = np.fft.fft2(u.to_array())
    return _shell_bin(g, 0.5 * (np.abs(uh) ** 2 + np.abs(vh) ** 2) / g.size**2, "energy")


def spectral_slope(curve: SpectrumCurve, k_min: int, k_max: int) -> float:
    """Least-squares slope of ``log(value)`` against ``log(k)`` over ``[k_min, k_max]``."""
    if not (1 <= k_min < k_max <= curve.shells[-1]):
        raise ValueError(f"fit range [{k_min}, {k_max}] outside shells 1..{curve.shells[-1]}")
    sel = (curve.shells >= k_min) & (curve.shells <= k_max)
    vals = curve.values[sel]
    if np.any(vals <= 0):
        raise ValueError("spectrum has nonpositive values inside the fit range")
    slope, _ = np.polyfit(np.log(curve.shells[sel].astype(float)), np.log(vals), 1)
    return float(slope)


@dataclass(frozen=True, eq=False)
class StageReport:
    stage: str
    frame_range: tuple[int, int]
    u_mse: float
    v_mse: float
    div_mse: float
    u_mse_std: float
    v_mse_std: float
    div_mse_std: float
    frames: np.ndarray = field(repr=False)
    series: dict[str, np.ndarray] = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.frames.size)


def _frames_of(traj) -> Sequence[VectorField2]:
    return traj.frames if hasattr(traj, "frames") else traj


def stage_report(
    pred, ref, stages: Sequence[tuple[int, int]] | dict[str, tuple[int, int]]
) -> list[StageReport]:
    """Per-stage mean and population standard deviation of the frame metrics.

    ``pred`` and ``ref`` are trajectories or sequences of fields; stage ranges
    are inclusive frame indices.  ``div_mse`` is the divergence error of the
    prediction.
    """
    pf, rf = _frames_of(pred), _frames_of(ref)
    if len(pf) != len(rf):
        raise ValueError(f"trajectories have {len(pf)} and {len(rf)} frames")
    if hasattr(pred, "times") and hasattr(ref, "times") and not np.allclose(pred.times, ref.times):
        raise ValueError("trajectory times are not aligned")
    named = stages.items() if isinstance(stages, dict) else ((f"{a}:{b}", (a, b)) for a, b in stages)
    reports = []
    for name, (a, b) in named:
        if not (0 <= a <= b < len(pf)):
            raise ValueError(f"stage {name} = [{a}, {b}] outside frames 0..{len(pf) - 1}")
        idx = np.arange(a, b + 1)
        uu = np.empty(idx.size)
        vv = np.empty(idx.size)
        dd = np.empty(idx.size)
        for n, i in enumerate(idx):
            uu[n], vv[n] = mse(pf[i], rf[i])
            dd[n] = divergence_error(pf[i])
        reports.append(
            StageReport(
                name, (int(a), int(b)),
                float(uu.mean()), float(vv.mean()), float(dd.mean()),
                float(uu.std()), float(vv.std()), float(dd.std()),
                idx, {"u_mse": uu, "v_mse": vv, "div_mse": dd},
            )
        )
    return reports


def pooled_moments(counts, means, stds) -> tuple[float, float]:
    """Combine per-group means and population stds into whole-sample ones."""
    counts = np.asarray(counts, float)
    means = np.asarray(means, float)
    stds = np.asarray(stds, float)
    n = counts.sum()
    mean = float(np.sum(counts * means) / n)
    var = float(np.sum(counts * (stds**2 + (means - mean) ** 2)) / n)
    return mean, float(np.sqrt(max(var, 0.0)))
