import numpy as np
import pytest

from divfree.noise import (
    GrfSpec,
    StreamNoiseSpec,
    central_difference_divergence,
    divfree_noise_array,
    frame_rng,
    grf_coefficient_variance,
    sample_divfree_noise,
    sample_grf_scalar,
    solenoidal_mode_variance,
    split_seed,
)
from divfree.spectral import Grid, VectorField2, curl_perp, divergence, gradient, l2_norm
from oracles import grf_covariance, spectral_noise_covariance


def test_grf_spec_validation():
    with pytest.raises(ValueError):
        GrfSpec(alpha=1.0)
    with pytest.raises(ValueError):
        GrfSpec(tau=0.0)
    with pytest.raises(ValueError):
        GrfSpec(seed=-1)
    assert GrfSpec().scale == pytest.approx(7.0**1.5)
    assert GrfSpec(amplitude=2.0).scale == 2.0


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        StreamNoiseSpec(mode="white")
    with pytest.raises(ValueError):
        StreamNoiseSpec(blur_sigma=0.0)


class TestGrf:
    def test_deterministic(self):
        g = Grid(16, 16)
        a = sample_grf_scalar(GrfSpec(seed=9), g)
        b = sample_grf_scalar(GrfSpec(seed=9), g)
        assert a.values.tobytes() == b.values.tobytes()
        c = sample_grf_scalar(GrfSpec(seed=10), g)
        assert not np.array_equal(a.values, c.values)

    def test_zero_mean(self):
        g = Grid(32, 32)
        for seed in range(20):
            f = sample_grf_scalar(GrfSpec(seed=seed), g)
            assert abs(f.mean()) <= 1e-13 * np.linalg.norm(f.values) * np.sqrt(g.cell_area)

    def test_variance_law(self):
        g = Grid(16, 16)
        spec = GrfSpec(seed=4)
        n = 20000
        p10 = p20 = 0.0
        for i in range(n):
            c = np.fft.fft2(sample_grf_scalar(spec, g, index=i).values) / g.size
            p10 += abs(c[0, 1]) ** 2
            p20 += abs(c[0, 2]) ** 2
        tau, alpha = 7.0, 2.5
        law = ((4 * np.pi**2 * 4 + tau**2) / (4 * np.pi**2 + tau**2)) ** alpha
        assert abs((p10 / p20) / law - 1) <= 0.05
        # absolute level as well: Fourier-series variance A^2 (4 pi^2 + tau^2)^-alpha
        var = grf_coefficient_variance(spec, g)
        assert abs(p10 / n / var[0, 1] - 1) <= 0.05

    def test_covariance_matches_oracle(self):
        g = Grid(8, 8)
        spec = GrfSpec(seed=2)
        samples = np.array([sample_grf_scalar(spec, g, index=i).values.ravel() for i in range(20000)])
        emp = samples.T @ samples / len(samples)
        ref = grf_covariance(8, spec.alpha, spec.tau, spec.scale)
        assert np.linalg.norm(emp - ref) / np.linalg.norm(ref) <= 0.1


class TestSpectralNoise:
    def test_in_solenoidal_subspace(self):
        g = Grid(32, 32)
        for u in sample_divfree_noise(StreamNoiseSpec(grf=GrfSpec(seed=1)), g, frames=10):
            assert l2_norm(divergence(u)) <= 1e-12 * l2_norm(u)
            assert max(abs(m) for m in u.mean()) <= 1e-13 * l2_norm(u)

    def test_unit_expected_norm(self):
        g = Grid(16, 16)
        arr = divfree_noise_array(StreamNoiseSpec(grf=GrfSpec(seed=5)), g, 4000)
        sq = np.sum(arr**2, axis=(1, 2, 3)) * g.cell_area
        assert abs(sq.mean() - 1) <= 4 * sq.std() / np.sqrt(len(sq))

    def test_norm_identity_on_stream_function(self):
        g = Grid(32, 32)
        for i in range(10):
            psi = sample_grf_scalar(GrfSpec(seed=3), g, index=i)
            a, b = l2_norm(curl_perp(psi)), l2_norm(gradient(psi))
            assert abs(a - b) <= 1e-12 * b

    def test_centered(self):
        g = Grid(16, 16)
        n = 10000
        arr = divfree_noise_array(StreamNoiseSpec(grf=GrfSpec(seed=6)), g, n)
        mean = arr.mean(axis=0)
        # E||mean||^2 = E||u||^2 / n = 1 / n
        se = np.sqrt(1.0 / n)
        assert np.sqrt(np.sum(mean**2) * g.cell_area) <= 3 * se

    def test_frames_uncorrelated(self):
        g = Grid(16, 16)
        arr = divfree_noise_array(StreamNoiseSpec(grf=GrfSpec(seed=8)), g, 2000).reshape(2000, -1)
        a, b = arr[0::2], arr[1::2]
        inner = np.sum(a * b, axis=1)
        t = inner.mean() / (inner.std() / np.sqrt(len(inner)))
        assert abs(t) <= 3

    def test_mode_variance_matches_samples(self):
        g = Grid(8, 8)
        spec = StreamNoiseSpec(grf=GrfSpec(seed=11))
        arr = divfree_noise_array(spec, g, 20000)
        KX, KY = g.derivative_wavenumbers()
        kn = np.sqrt((KX**2 + KY**2).astype(float))
        h = np.fft.fft2(arr)
        a = np.divide(KY * h[:, 0] - KX * h[:, 1], kn, out=np.zeros_like(h[:, 0]), where=kn > 0)
        emp = np.mean(np.abs(a) ** 2, axis=0)
        lam = solenoidal_mode_variance(spec, g)
        sel = lam > 0
        assert np.all(np.abs(emp[sel] / lam[sel] - 1) < 0.1)
        assert np.all(emp[~sel] < 1e-20)


def test_spectral_covariance_oracle_small():
    g = Grid(8, 8)
    spec = StreamNoiseSpec(grf=GrfSpec(seed=12))
    arr = divfree_noise_array(spec, g, 20000).reshape(20000, -1)
    emp = arr.T @ arr / len(arr)
    ref = spectral_noise_covariance(8, spec.grf)
    assert np.linalg.norm(emp - ref) / np.linalg.norm(ref) <= 0.1


class TestFiniteDifferenceNoise:
    spec = StreamNoiseSpec(mode="finite_difference", grf=GrfSpec(seed=3), blur_sigma=2.0)

    def test_central_difference_divergence_vanishes(self):
        g = Grid(32, 32)
        arr = divfree_noise_array(self.spec, g, 5)
        d = central_difference_divergence(arr, g)
        for i in range(5):
            norm = np.sqrt(np.sum(arr[i] ** 2) * g.cell_area)
            assert np.sqrt(np.sum(d[i] ** 2) * g.cell_area) <= 1e-12 * norm

    def test_spectral_divergence_nonzero(self):
        g = Grid(32, 32)
        u = sample_divfree_noise(self.spec, g)[0]
        assert l2_norm(divergence(u)) > 1e-6 * l2_norm(u)

    def test_zero_mean_and_unit_norm(self):
        g = Grid(16, 16)
        arr = divfree_noise_array(self.spec, g, 3000)
        assert np.abs(arr.mean(axis=(2, 3))).max() <= 1e-13 * np.abs(arr).max()
        sq = np.sum(arr**2, axis=(1, 2, 3)) * g.cell_area
        assert abs(sq.mean() - 1) <= 4 * sq.std() / np.sqrt(len(sq))


class TestSplittableRng:
    def test_frames_independent_of_batching(self):
        g = Grid(16, 16)
        spec = StreamNoiseSpec(grf=GrfSpec(seed=21))
        whole = divfree_noise_array(spec, g, 10)
        parts = np.concatenate([divfree_noise_array(spec, g, 5), divfree_noise_array(spec, g, 5, first_frame=5)])
        assert whole.tobytes() == parts.tobytes()

    def test_frame_rng_stream(self):
        a = frame_rng(5, 3).standard_normal(4)
        b = frame_rng(5, 3).standard_normal(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, frame_rng(5, 4).standard_normal(4))

    def test_split_seed(self):
        seeds = {split_seed(0, i) for i in range(100)}
        assert len(seeds) == 100
        assert all(0 <= s < 2**64 for s in seeds)
        assert split_seed(7, 2) == split_seed(7, 2)

    def test_noise_fields_are_vector_fields(self):
        out = sample_divfree_noise(StreamNoiseSpec(), Grid(8, 8), frames=3)
        assert len(out) == 3 and all(isinstance(u, VectorField2) for u in out)
