"""Flow-matching probability paths on the divergence-free subspace.

Two conditional paths are supported:

* ``linear``: ``u_t = (1 - t) u0 + t y`` with target velocity ``y - u0``;
* ``affine_sigma``: ``u_t = s_t u0 + t y`` with ``s_t = 1 - (1 - s_min) t``,
  whose velocity at state ``x`` is ``(y - (1 - s_min) x) / s_t``.

Models are callables ``model(x, tau, condition) -> VectorField2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Literal, Sequence

import numpy as np

from .hodge import distance_to_solenoidal, leray_project
from .noise import GrfSpec, StreamNoiseSpec, sample_divfree_noise, solenoidal_mode_variance
from .spectral import Grid, VectorField2, l2_norm

__all__ = [
    "PathSpec",
    "OdeSolveSpec",
    "OdeResult",
    "StepUnderflow",
    "NonFiniteState",
    "IllPosedDensity",
    "sigma_schedule",
    "interpolate",
    "conditional_velocity",
    "fm_loss",
    "marginal_velocity_finite",
    "marginal_velocity_batch",
    "ode_solve",
    "ode_integrate",
    "projected",
    "generate_sample",
]

VectorFieldFn = Callable[[VectorField2, float, Any], VectorField2]

MAX_MARGINAL_GRID = 16
MODE_VARIANCE_FLOOR = 1e-30
SUPPORT_TOL = 1e-10


class StepUnderflow(RuntimeError):
    pass


class NonFiniteState(FloatingPointError):
    pass


class IllPosedDensity(ValueError):
    """The state has mass along a covariance direction of zero variance."""


@dataclass(frozen=True)
class PathSpec:
    kind: Literal["linear", "affine_sigma"] = "affine_sigma"
    sigma_min: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("linear", "affine_sigma"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if not 0 <= self.sigma_min <= 1:
            raise ValueError("sigma_min must lie in [0, 1]")


@dataclass(frozen=True)
class OdeSolveSpec:
    method: Literal["rk4_fixed", "dormand_prince_adaptive"] = "dormand_prince_adaptive"
    steps: int = 50
    abs_tol: float = 1e-5
    rel_tol: float = 1e-5

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "dormand_prince_adaptive"):
            raise ValueError(f"unknown ODE method {self.method!r}")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")


def _check_tau(tau: float):
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")


def sigma_schedule(spec: PathSpec, tau: float) -> float:
    """Noise scale ``s_t`` of the conditional path (``1 - t`` for ``linear``)."""
    if spec.kind == "linear":
        return 1.0 - tau
    return 1.0 - (1.0 - spec.sigma_min) * tau


def interpolate(spec: PathSpec, u0: VectorField2, y: VectorField2, tau: float) -> VectorField2:
    _check_tau(tau)
    return u0 * sigma_schedule(spec, tau) + y * tau


def _cond_vel(spec: PathSpec, x, y, tau: float):
    # works on VectorField2 and on broadcastable arrays alike
    if spec.kind == "linear":
        return (y - x) * (1.0 / (1.0 - tau))
    return (y - x * (1.0 - spec.sigma_min)) * (1.0 / sigma_schedule(spec, tau))


def conditional_velocity(
    spec: PathSpec, x: VectorField2, y: VectorField2, tau: float, u0: VectorField2 | None = None
) -> VectorField2:
    """Velocity of the conditional path through ``x`` towards ``y``.

    For ``linear`` paths passing ``u0`` returns ``y - u0`` directly (valid for
    any ``tau``); otherwise ``u0`` is recovered from ``x``, which needs
    ``tau < 1``.
    """
    _check_tau(tau)
    if spec.kind == "linear":
        if u0 is not None:
            return y - u0
        if tau == 1.0:
            raise ValueError("linear path at tau = 1 needs u0")
    elif sigma_schedule(spec, tau) == 0.0:
        raise ValueError("affine path with sigma_min = 0 has no velocity at tau = 1")
    return _cond_vel(spec, x, y, tau)


def _target(spec: PathSpec, u0: VectorField2, y: VectorField2) -> VectorField2:
    if spec.kind == "linear":
        return y - u0
    return y - u0 * (1.0 - spec.sigma_min)


def fm_loss(model: VectorFieldFn, spec: PathSpec, pairs: Iterable[Sequence]) -> float:
    """Mean of ``|| P model(u_t, t; c) - v_t ||^2`` over ``(u0, y, tau[, condition])`` items."""
    total = 0.0
    n = 0
    for item in pairs:
        u0, y, tau = item[:3]
        cond = item[3] if len(item) > 3 else None
        for name, f in (("u0", u0), ("y", y)):
            d = distance_to_solenoidal(f)
            if d > 1e-8:
                warnings.warn(f"{name} is not solenoidal (relative distance {d:.2e})", RuntimeWarning, stacklevel=2)
        x = interpolate(spec, u0, y, tau)
        resid = leray_project(model(x, tau, cond)) - _target(spec, u0, y)
        total += l2_norm(resid) ** 2
        n += 1
    if n == 0:
        raise ValueError("fm_loss needs at least one (u0, y, tau) item")
    return total / n


# ---------------------------------------------------------------------------
# finite-dimensional marginal field


def _noise_spec(noise: GrfSpec | StreamNoiseSpec) -> StreamNoiseSpec:
    if isinstance(noise, GrfSpec):
        return StreamNoiseSpec(mode="spectral", grf=noise)
    if noise.mode != "spectral":
        raise ValueError("marginal densities need spectral-mode noise")
    return noise


def _solenoidal_coords(arr: np.ndarray, grid: Grid) -> np.ndarray:
    KX, KY = grid.derivative_wavenumbers()
    kn = np.sqrt((KX**2 + KY**2).astype(float))
    inv = np.divide(1.0, kn, out=np.zeros_like(kn), where=kn > 0)
    h = np.fft.fft2(arr)
    return (KY * h[..., 0, :, :] - KX * h[..., 1, :, :]) * inv


def marginal_velocity_batch(
    spec: PathSpec,
    data: np.ndarray,
    weights: np.ndarray,
    x: np.ndarray,
    tau: float,
    noise: GrfSpec | StreamNoiseSpec,
    grid: Grid,
    check_support: bool = True,
) -> np.ndarray:
    """Array form of :func:`marginal_velocity_finite`.

    ``data`` is ``(J, 2, n_y, n_x)``, ``x`` is ``(B, 2, n_y, n_x)``; returns
    ``(B, 2, n_y, n_x)``.  Each conditional law is Gaussian with mean
    ``tau * y_j`` and covariance ``s_t^2 C_u``, diagonal in the solenoidal
    Fourier coordinates, so the posterior weights are a softmax of
    ``log w_j - |a(x - tau y_j)|^2_C / (2 s_t^2)``.
    """
    if max(grid.n_x, grid.n_y) > MAX_MARGINAL_GRID:
        raise ValueError(f"grid {grid.shape} too large for dense marginal densities (max {MAX_MARGINAL_GRID})")
    _check_tau(tau)
    s = sigma_schedule(spec, tau)
    if s <= 0:
        raise IllPosedDensity("conditional covariance vanishes at this tau")
    lam = solenoidal_mode_variance(_noise_spec(noise), grid)
    keep = lam > MODE_VARIANCE_FLOOR
    inv_lam = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)

    data = np.asarray(data, float)
    x = np.asarray(x, float)
    weights = np.asarray(weights, float)
    if data.shape[0] != weights.shape[0]:
        raise ValueError("one weight per data field is required")
    if not np.isclose(weights.sum(), 1.0, rtol=0, atol=1e-12) or np.any(weights < 0):
        raise ValueError("data weights must be nonnegative and sum to 1")

    if data.shape[0] == 1:
        logits = np.zeros((x.shape[0], 1))
    else:
        ax = _solenoidal_coords(x, grid)  # (B, ny, nx)
        ay = _solenoidal_coords(data, grid)  # (J, ny, nx)
        r = ax[:, None] - tau * ay[None]
        quad = np.sum(np.abs(r) ** 2 * inv_lam, axis=(-2, -1))
        with np.errstate(divide="ignore"):
            logits = np.log(weights)[None, :] - 0.5 * quad / s**2
    if check_support:
        _check_support(x, data, tau, grid, keep)
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)

    out = np.zeros_like(x)
    for j in range(data.shape[0]):
        out += w[:, j, None, None, None] * _cond_vel(spec, x, data[j][None], tau)
    return out


def _check_support(x, data, tau, grid, keep):
    KX, KY = grid.derivative_wavenumbers()
    kn = np.sqrt((KX**2 + KY**2).astype(float))
    inv = np.divide(1.0, kn, out=np.zeros_like(kn), where=kn > 0)
    null = kn == 0
    for j in range(data.shape[0]):
        rh = np.fft.fft2(x - tau * data[j][None])
        uh, vh = rh[..., 0, :, :], rh[..., 1, :, :]
        grad_part = np.abs((KX * uh + KY * vh) * inv) ** 2
        sol_part = np.abs((KY * uh - KX * vh) * inv) ** 2
        outside = (
            np.sum(grad_part, axis=(-2, -1))
            + np.sum(np.where(null, np.abs(uh) ** 2 + np.abs(vh) ** 2, 0.0), axis=(-2, -1))
            + np.sum(np.where(keep, 0.0, sol_part), axis=(-2, -1))
        )
        total = np.sum(np.abs(rh) ** 2, axis=(-3, -2, -1))
        # relative mass 1e-20 corresponds to a relative L2 distance of 1e-10
        if np.any(outside > SUPPORT_TOL**2 * np.maximum(total, 1e-300)):
            raise IllPosedDensity("x - tau*y has mass outside the support of the reference noise")


def marginal_velocity_finite(
    spec: PathSpec,
    data: Sequence[VectorField2],
    weights: Sequence[float] | None,
    x: VectorField2,
    tau: float,
    noise_cov_spectrum: GrfSpec | StreamNoiseSpec,
) -> VectorField2:
    """Posterior-weighted average of conditional velocities on a small grid."""
    g = x.grid
    arr = np.stack([d.to_array() for d in data])
    if weights is None:
        weights = np.full(len(data), 1.0 / len(data))
    out = marginal_velocity_batch(spec, arr, np.asarray(weights), x.to_array()[None], tau, noise_cov_spectrum, g)
    return VectorField2.from_array(g, out[0])


# ---------------------------------------------------------------------------
# ODE integration

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

MIN_STEP = 1e-12
SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass
class OdeResult:
    state: VectorField2
    nfev: int
    accepted: int
    rejected: int
    taus: list[float] = field(default_factory=list)


def _rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(a * a)))


def ode_solve(
    model: VectorFieldFn,
    x0: VectorField2,
    spec: OdeSolveSpec = OdeSolveSpec(),
    condition: Any = None,
    callback: Callable[[float, VectorField2], None] | None = None,
) -> OdeResult:
    """Integrate ``dx/dtau = model(x, tau, condition)`` from 0 to 1.

    ``callback(tau, state)`` runs after every accepted step.
    """
    grid = x0.grid
    nfev = 0

    def f(t: float, y: np.ndarray) -> np.ndarray:
        nonlocal nfev
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at tau = {t:.6g}")
        nfev += 1
        out = model(VectorField2.from_array(grid, y), t, condition)
        if out.grid != grid:
            raise ValueError("model changed the grid")
        return out.to_array()

    y = x0.to_array()
    if spec.method == "rk4_fixed":
        h = 1.0 / spec.steps
        taus = []
        for n in range(spec.steps):
            t = n * h
            k1 = f(t, y)
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t_new = 1.0 if n == spec.steps - 1 else (n + 1) * h
            taus.append(t_new)
            if not np.all(np.isfinite(y)):
                raise NonFiniteState(f"non-finite state at tau = {t_new:.6g}")
            if callback is not None:
                callback(t_new, VectorField2.from_array(grid, y))
        return OdeResult(VectorField2.from_array(grid, y), nfev, spec.steps, 0, taus)

    atol, rtol = spec.abs_tol, spec.rel_tol
    t, t_end = 0.0, 1.0
    k1 = f(t, y)
    h = _initial_step(f, t, y, k1, atol, rtol)
    accepted = rejected = 0
    taus: list[float] = []
    stages = np.empty((7,) + y.shape)
    while t < t_end:
        if h < MIN_STEP:
            raise StepUnderflow(f"adaptive step {h:.3e} below {MIN_STEP:g} at tau = {t:.6g}")
        last = t + h >= t_end
        if last:
            h = t_end - t
        stages[0] = k1
        for i in range(1, 7):
            yi = y + h * np.tensordot(_A[i], stages[:i], axes=1)
            stages[i] = f(t + _C[i] * h, yi)
        y_new = yi  # stage 7 evaluates at the 5th-order solution (FSAL)
        err = h * np.tensordot(_E, stages, axes=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = _rms(err / scale)
        if not np.isfinite(err_norm):
            err_norm = np.inf
        if err_norm <= 1.0:
            t = t_end if last else t + h
            y = y_new
            k1 = stages[6]
            accepted += 1
            taus.append(t)
            if callback is not None:
                callback(t, VectorField2.from_array(grid, y))
            fac = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err_norm ** -0.2))
            h *= fac
        else:
            rejected += 1
            fac = MIN_FACTOR if not np.isfinite(err_norm) else max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            h *= min(1.0, fac)
    return OdeResult(VectorField2.from_array(grid, y), nfev, accepted, rejected, taus)


def _initial_step(f, t, y, f0, atol, rtol) -> float:
    scale = atol + rtol * np.abs(y)
    d0, d1 = _rms(y / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, 1.0)
    f1 = f(t + h0, y + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, 1.0)


def ode_integrate(
    model: VectorFieldFn, x0: VectorField2, spec: OdeSolveSpec = OdeSolveSpec(), condition: Any = None
) -> VectorField2:
    return ode_solve(model, x0, spec, condition).state


def projected(model: VectorFieldFn) -> VectorFieldFn:
    """Compose a model with the Leray projector."""

    def wrapped(x: VectorField2, tau: float, condition: Any = None) -> VectorField2:
        return leray_project(model(x, tau, condition))

    return wrapped


def generate_sample(
    model: VectorFieldFn,
    noise: StreamNoiseSpec,
    ode: OdeSolveSpec,
    grid: Grid,
    condition: Any = None,
    index: int = 0,
    callback: Callable[[float, VectorField2], None] | None = None,
) -> VectorField2:
    """Draw divergence-free noise (frame ``index``) and transport it with the projected model."""
    x0 = sample_divfree_noise(noise, grid, 1, first_frame=index)[0]
    return ode_solve(projected(model), x0, ode, condition, callback).state
