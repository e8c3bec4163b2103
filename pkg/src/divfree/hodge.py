"""Helmholtz-Hodge decomposition and the spectral Leray projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import Grid, ScalarField, VectorField2, gradient, l2_norm

__all__ = [
    "NotSolenoidal",
    "HodgeParts",
    "leray_project",
    "leray_project_array",
    "helmholtz_decompose",
    "stream_function_of",
    "distance_to_solenoidal",
]


class NotSolenoidal(ValueError):
    """Raised when a field expected in the solenoidal subspace is not."""


def _projector_parts(grid: Grid):
    KX, KY = grid.derivative_wavenumbers()
    k2 = (KX * KX + KY * KY).astype(float)
    inv_k2 = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    return KX, KY, inv_k2


def leray_project_array(arr: np.ndarray, grid: Grid) -> np.ndarray:
    """Leray-project a raw ``(..., 2, n_y, n_x)`` array of velocity fields.

    For every wavevector ``k`` the component ``(k . w_hat) k / |k|^2`` is
    removed.  ``k`` is the derivative wavenumber (Nyquist entries zeroed),
    which keeps conjugate symmetry and makes the result exactly idempotent.
    Modes whose derivative wavenumber vanishes (the mean and the three
    self-conjugate Nyquist modes) lie in the kernel of both discrete
    divergence and curl; like the mean they are set to zero, so the image is
    exactly the range of :func:`~divfree.spectral.curl_perp`.
    """
    KX, KY, inv_k2 = _projector_parts(grid)
    wh = np.fft.fft2(arr)
    uh, vh = wh[..., 0, :, :], wh[..., 1, :, :]
    alpha = (KX * uh + KY * vh) * inv_k2
    keep = inv_k2 > 0
    out = np.stack([np.where(keep, uh - alpha * KX, 0), np.where(keep, vh - alpha * KY, 0)], axis=-3)
    return np.fft.ifft2(out).real


def leray_project(w: VectorField2) -> VectorField2:
    """L2-orthogonal projection onto divergence-free, zero-mean fields."""
    return VectorField2.from_array(w.grid, leray_project_array(w.to_array(), w.grid))


@dataclass(frozen=True, eq=False)
class HodgeParts:
    """``w = solenoidal + grad(potential) + harmonic``.

    ``harmonic`` holds the modes annihilated by both discrete divergence and
    curl: the mean and, on even grids, the self-conjugate Nyquist modes.
    """

    solenoidal: VectorField2
    potential: ScalarField
    harmonic: VectorField2

    @property
    def mean(self) -> tuple[float, float]:
        return self.harmonic.mean()

    def reconstruct(self) -> VectorField2:
        return self.solenoidal + gradient(self.potential) + self.harmonic


def helmholtz_decompose(w: VectorField2) -> HodgeParts:
    """Split ``w`` into ``P w + grad q + harmonic``.

    The potential solves ``div grad q = div w`` with zero mean, using the
    same first-order wavenumbers as the projector so the three parts add back
    to ``w`` exactly.
    """
    g = w.grid
    KX, KY, inv_k2 = _projector_parts(g)
    uh, vh = np.fft.fft2(w.to_array())
    # grad q has symbol i 2 pi k / L, so q_hat = (k . w_hat) / (i 2 pi/L |k|^2)
    qh = (KX * uh + KY * vh) * inv_k2 / (2j * np.pi / g.length)
    qh[0, 0] = 0.0
    potential = ScalarField(g, np.fft.ifft2(qh).real)
    hh = np.where(inv_k2 > 0, 0, np.stack([uh, vh]))
    harmonic = VectorField2.from_array(g, np.fft.ifft2(hh).real)
    return HodgeParts(leray_project(w), potential, harmonic)


def distance_to_solenoidal(u: VectorField2) -> float:
    """Relative L2 distance ``||u - P u|| / ||u||`` (0 for the zero field)."""
    norm = l2_norm(u)
    if norm == 0.0:
        return 0.0
    return l2_norm(u - leray_project(u)) / norm


def stream_function_of(u: VectorField2, tol: float = 1e-8) -> ScalarField:
    """Zero-mean stream function ``psi`` with ``curl_perp(psi) = u``.

    Raises
    ------
    NotSolenoidal
        If ``u`` is farther than ``tol * ||u||`` from the solenoidal subspace.
    """
    dist = distance_to_solenoidal(u)
    if dist > tol:
        raise NotSolenoidal(f"field is not solenoidal: ||u - Pu|| / ||u|| = {dist:.3e} > {tol:.1e}")
    g = u.grid
    KX, KY, inv_k2 = _projector_parts(g)
    uh, vh = np.fft.fft2(u.to_array())
    # u_hat = i c ky psi_hat, v_hat = -i c kx psi_hat with c = 2 pi / L
    c = 2.0 * np.pi / g.length
    ph = (KY * uh - KX * vh) * inv_k2 / (1j * c)
    ph[0, 0] = 0.0
    return ScalarField(g, np.fft.ifft2(ph).real)
