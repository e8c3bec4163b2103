import numpy as np
import pytest

from divfree.diagnostics import divergence_error
from divfree.hodge import (
    NotSolenoidal,
    distance_to_solenoidal,
    helmholtz_decompose,
    leray_project,
    leray_project_array,
    stream_function_of,
)
from divfree.solver import taylor_green_velocity
from divfree.spectral import Grid, ScalarField, VectorField2, curl_perp, divergence, gradient, l2_inner, l2_norm
from helpers import random_scalar, random_vector
from oracles import solenoidal_projector


def test_gradient_is_annihilated():
    g = Grid(32, 32)
    X, Y = g.coords()
    w = gradient(ScalarField(g, np.sin(2 * np.pi * X) + np.cos(4 * np.pi * Y)))
    assert l2_norm(leray_project(w)) <= 1e-12 * l2_norm(w)


def test_fixes_solenoidal_fields(rng):
    g = Grid(32, 32)
    w = curl_perp(random_scalar(g, rng))
    assert l2_norm(leray_project(w) - w) <= 1e-12 * l2_norm(w)


def test_output_is_solenoidal_and_zero_mean(rng):
    g = Grid(16, 16)
    for _ in range(20):
        w = random_vector(g, rng)
        p = leray_project(VectorField2(g, w.u + 3.0, w.v - 1.0))
        assert l2_norm(divergence(p)) <= 1e-12 * l2_norm(p)
        assert max(abs(m) for m in p.mean()) <= 1e-13 * l2_norm(p)


def test_matches_null_space_projector(rng):
    g = Grid(8, 8)
    P = solenoidal_projector(8)
    for _ in range(10):
        w = random_vector(g, rng)
        ref = P @ w.to_array().ravel()
        got = leray_project(w).to_array().ravel()
        assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(w.to_array())


def test_is_closest_solenoidal_field(rng):
    g = Grid(8, 8)
    w = random_vector(g, rng)
    d = l2_norm(w - leray_project(w))
    for _ in range(100):
        v = leray_project(random_vector(g, rng))
        assert d <= l2_norm(w - v)


def test_array_form_batches(rng):
    g = Grid(8, 8)
    arr = rng.standard_normal((3, 4, 2, 8, 8))
    out = leray_project_array(arr, g)
    for i in range(3):
        for j in range(4):
            ref = leray_project(VectorField2.from_array(g, arr[i, j])).to_array()
            np.testing.assert_allclose(out[i, j], ref, atol=1e-14)


class TestInvariants:
    def test_idempotent(self, rng):
        g = Grid(16, 16)
        for _ in range(1000):
            w = random_vector(g, rng)
            p = leray_project(w)
            assert l2_norm(leray_project(p) - p) <= 1e-12 * l2_norm(w)

    def test_self_adjoint(self, rng):
        g = Grid(16, 16)
        for _ in range(50):
            w, z = random_vector(g, rng), random_vector(g, rng)
            lhs = l2_inner(leray_project(w), z)
            rhs = l2_inner(w, leray_project(z))
            assert abs(lhs - rhs) <= 1e-10 * l2_norm(w) * l2_norm(z)

    def test_orthogonal(self, rng):
        g = Grid(16, 16)
        for _ in range(50):
            w = random_vector(g, rng)
            p = leray_project(w)
            assert abs(l2_inner(p, w - p)) <= 1e-10 * l2_norm(w) ** 2

    def test_linear(self, rng):
        g = Grid(16, 16)
        w1, w2 = random_vector(g, rng), random_vector(g, rng)
        a, b = 1.7, -0.3
        lhs = leray_project(w1 * a + w2 * b)
        rhs = leray_project(w1) * a + leray_project(w2) * b
        assert l2_norm(lhs - rhs) <= 1e-12 * l2_norm(rhs)

    def test_contraction(self, rng):
        g = Grid(16, 16)
        for _ in range(50):
            w = random_vector(g, rng)
            assert l2_norm(leray_project(w)) <= l2_norm(w)


class TestHelmholtz:
    def test_reconstructs(self, rng):
        g = Grid(16, 16)
        for _ in range(20):
            w = random_vector(g, rng)
            w = VectorField2(g, w.u + 0.5, w.v)
            parts = helmholtz_decompose(w)
            assert l2_norm(parts.reconstruct() - w) <= 1e-12 * l2_norm(w)
            s = parts.solenoidal
            assert l2_norm(divergence(s)) <= 1e-12 * l2_norm(s)
            assert max(abs(m) for m in s.mean()) <= 1e-13 * l2_norm(w)
            assert parts.mean == pytest.approx(w.mean(), abs=1e-14)

    def test_orthogonal_parts(self, rng):
        g = Grid(16, 16)
        w = random_vector(g, rng)
        parts = helmholtz_decompose(w)
        assert abs(l2_inner(parts.solenoidal, gradient(parts.potential))) <= 1e-10 * l2_norm(w) ** 2

    def test_solenoidal_input(self, rng):
        g = Grid(16, 16)
        w = curl_perp(random_scalar(g, rng))
        parts = helmholtz_decompose(w)
        assert np.abs(parts.potential.values).max() <= 1e-12 * l2_norm(w)
        assert l2_norm(parts.solenoidal - w) <= 1e-12 * l2_norm(w)

    def test_gradient_input(self):
        g = Grid(16, 16)
        X, Y = g.coords()
        q0 = np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y) + 0.3 * np.cos(6 * np.pi * Y)
        w = gradient(ScalarField(g, q0))
        parts = helmholtz_decompose(w)
        assert np.abs(parts.potential.values - q0).max() <= 1e-10
        assert l2_norm(parts.solenoidal) <= 1e-12 * l2_norm(w)


class TestStreamFunction:
    def test_inverts_curl_perp(self, rng):
        g = Grid(16, 16)
        # drop the mean and the self-conjugate Nyquist modes, which curl_perp annihilates
        ph = np.fft.fft2(random_scalar(g, rng).values)
        ph[0, 0] = ph[0, 8] = ph[8, 0] = ph[8, 8] = 0.0
        psi0 = ScalarField(g, np.fft.ifft2(ph).real)
        psi = stream_function_of(curl_perp(psi0))
        assert np.abs(psi.values - psi0.values).max() <= 1e-10 * np.abs(psi0.values).max()

    def test_curl_perp_round_trip(self, rng):
        g = Grid(16, 16)
        u = leray_project(random_vector(g, rng))
        assert l2_norm(curl_perp(stream_function_of(u)) - u) <= 1e-10 * l2_norm(u)

    def test_taylor_green(self):
        g = Grid(32, 32)
        X, Y = g.coords()
        psi = stream_function_of(taylor_green_velocity(g))
        ref = np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y) / (2 * np.pi)
        assert np.abs(psi.values - ref).max() <= 1e-12

    def test_rejects_divergent_field(self, rng):
        g = Grid(16, 16)
        u = leray_project(random_vector(g, rng))
        gq = gradient(random_scalar(g, rng))
        # scale the gradient part so that ||div|| / ||u|| is substantial
        bad = u + gq * (0.1 * l2_norm(u) / l2_norm(gq))
        assert distance_to_solenoidal(bad) > 1e-8
        with pytest.raises(NotSolenoidal):
            stream_function_of(bad)


def test_divergence_error_never_increases(rng):
    g = Grid(16, 16)
    for _ in range(20):
        w = random_vector(g, rng)
        assert divergence_error(leray_project(w)) <= divergence_error(w)
