"""Random field factories shared by the tests."""

import numpy as np

from divfree.spectral import ScalarField, VectorField2


def random_vector(grid, rng):
    return VectorField2(grid, rng.standard_normal(grid.shape), rng.standard_normal(grid.shape))


def random_scalar(grid, rng):
    return ScalarField(grid, rng.standard_normal(grid.shape))


def smooth_scalar(grid, rng, kmax=4):
    """Random trigonometric polynomial with modes up to ``kmax``."""
    X, Y = grid.coords()
    out = np.zeros(grid.shape)
    for kx in range(-kmax, kmax + 1):
        for ky in range(-kmax, kmax + 1):
            a, b = rng.standard_normal(2)
            phase = 2 * np.pi * (kx * X + ky * Y) / grid.length
            out += a * np.cos(phase) + b * np.sin(phase)
    return ScalarField(grid, out)


def continuity_t_statistics(velocity, data, tau, sigma_min, noise_cov, sampler, functionals, n, rng):
    """Monte Carlo check of the weak continuity equation for quadratic functionals.

    For ``phi_b(x) = <b, x>^2`` the path ``x = s_t u0 + t y_j`` (``j`` uniform,
    ``u0 ~ N(0, C)``) has the closed form
    ``d/dt E phi_b = mean_j 2 t <b, y_j>^2 + 2 s_t s_t' b^T C b``.  The residual
    ``2 <b, x> <b, v(x)> - d/dt E phi_b`` has zero mean when ``v`` generates
    the path.  Returns one t-statistic (mean / standard error) per ``b``.
    """
    J = data.shape[0]
    s = 1.0 - (1.0 - sigma_min) * tau
    ds = -(1.0 - sigma_min)
    u0 = sampler(n)
    j = rng.integers(0, J, size=n)
    x = s * u0 + tau * data[j]
    v = velocity(x)
    flat_x = x.reshape(n, -1)
    flat_v = v.reshape(n, -1)
    flat_y = data.reshape(J, -1)
    out = []
    for b in functionals:
        exact = np.mean(2 * tau * (flat_y @ b) ** 2) + 2 * s * ds * b @ noise_cov @ b
        r = 2 * (flat_x @ b) * (flat_v @ b) - exact
        out.append(r.mean() / (r.std(ddof=1) / np.sqrt(n)))
    return np.array(out)


def two_point_setup(rng, noise):
    """Two unit-norm solenoidal data points on 4x4 plus the noise covariance and a sampler."""
    from divfree.hodge import leray_project
    from divfree.noise import divfree_noise_array
    from divfree.spectral import Grid
    from oracles import spectral_noise_covariance

    g = Grid(4, 4)
    data = np.stack([leray_project(random_vector(g, rng)).to_array() for _ in range(2)])
    data /= np.sqrt(np.sum(data**2, axis=(1, 2, 3), keepdims=True) * g.cell_area)
    cov = spectral_noise_covariance(4, noise.grf)
    functionals = [rng.standard_normal(data[0].size) for _ in range(5)]
    counter = iter(range(10**9))

    def sampler(n):
        return divfree_noise_array(noise, g, n, first_frame=next(counter) * n)

    return g, data, cov, functionals, sampler
