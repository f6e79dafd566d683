import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spa.dataset import LabeledDataset, Spectrum
from spa.errors import DegenerateInputError, ParameterError, PipelineStageError
from spa.preprocess import (GaussianKernel, PreprocessConfig, normalize_tic,
                            preprocess_pipeline, smooth_gaussian, standardize,
                            tophat_baseline, tophat_dataset)


def dataset(X, labels=None, flags=()):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if labels is None:
        labels = [1, -1] * (X.shape[0] // 2) + [1] * (X.shape[0] % 2)
    return LabeledDataset(np.arange(1, X.shape[1] + 1, dtype=float), X,
                          np.asarray(labels), provenance=frozenset(flags))


def direct_convolution(x, kernel):
    """O(d^2) oracle: out[k] = sum_l x[l] * G(k - l), zero padded."""
    d = x.size
    out = np.zeros(d)
    for k in range(d):
        for off in range(-kernel.radius, kernel.radius + 1):
            l = k - off
            if 0 <= l < d:
                out[k] += x[l] * kernel.samples[kernel.radius + off]
    return out


class TestKernel:
    def test_samples_match_density_formula(self):
        kern = GaussianKernel.from_sigma(1.5)
        assert kern.radius == math.ceil(4 * 1.5)
        for k in range(-kern.radius, kern.radius + 1):
            expected = math.exp(-k * k / (2 * 1.5 ** 2)) / math.sqrt(2 * math.pi * 1.5 ** 2)
            assert kern.samples[kern.radius + k] == pytest.approx(expected, abs=0)

    def test_samples_symmetric(self):
        kern = GaussianKernel.from_sigma(2.3)
        assert np.array_equal(kern.samples, kern.samples[::-1])

    def test_sigma_must_be_positive(self):
        with pytest.raises(ParameterError):
            GaussianKernel.from_sigma(0.0)


class TestNormalizeTic:
    def test_simple_example(self):
        out = normalize_tic(dataset([[1.0, 3.0], [2.0, 2.0]]))
        assert np.allclose(out.intensities[0], [0.25, 0.75])
        assert "normalized" in out.provenance

    def test_negative_entries_use_absolute_values(self):
        out = normalize_tic(dataset([[-1.0, 1.0], [1.0, 1.0]]))
        assert np.allclose(out.intensities[0], [-0.5, 0.5])

    def test_zero_spectrum_names_index(self):
        with pytest.raises(DegenerateInputError, match="spectrum 1"):
            normalize_tic(dataset([[1.0, 1.0], [0.0, 0.0]]))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_unit_l1_norm(self, seed):
        X = np.random.default_rng(seed).standard_normal((3, 20))
        out = normalize_tic(dataset(X))
        assert np.allclose(np.abs(out.intensities).sum(axis=1), 1.0, atol=1e-12)


class TestSmoothing:
    def test_zero_spectrum_stays_zero(self):
        out = smooth_gaussian(dataset(np.zeros((2, 32))), 2.0)
        assert np.allclose(out.intensities, 0.0, atol=1e-15)
        assert "smoothed" in out.provenance

    def test_impulse_response(self):
        d, k0, sigma = 64, 30, 2.0
        X = np.zeros((2, d))
        X[0, k0] = 1.0
        out = smooth_gaussian(dataset(X), sigma).intensities[0]
        kern = GaussianKernel.from_sigma(sigma)
        for k in range(d):
            off = k - k0
            if abs(off) <= kern.radius:
                assert out[k] == pytest.approx(kern.samples[kern.radius + off], abs=1e-12)
            else:
                assert out[k] == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((3, 8))
        kern = GaussianKernel.from_sigma(1.0)
        out = smooth_gaussian(dataset(X), 1.0).intensities
        for i in range(3):
            assert np.allclose(out[i], direct_convolution(X[i], kern), atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x, z = rng.standard_normal(50), rng.standard_normal(50)
        a, b = 2.5, -1.25

        def smooth_one(v):
            return smooth_gaussian(dataset(np.vstack([v, v])), 3.0).intensities[0]

        left = smooth_one(a * x + b * z)
        right = a * smooth_one(x) + b * smooth_one(z)
        assert np.allclose(left, right, atol=1e-9)

    def test_commutes_with_integer_shift(self):
        d, sigma, shift = 120, 2.0, 7
        rng = np.random.default_rng(5)
        x = np.zeros(d)
        x[40:60] = rng.standard_normal(20)

        def smooth_one(v):
            return smooth_gaussian(dataset(np.vstack([v, v])), sigma).intensities[0]

        shifted_then = smooth_one(np.roll(x, shift))
        then_shifted = np.roll(smooth_one(x), shift)
        interior = slice(shift + 30, d - 30)
        assert np.allclose(shifted_then[interior], then_shifted[interior], atol=1e-12)

    def test_sigma_validation(self):
        with pytest.raises(PipelineStageError, match="smooth_gaussian"):
            preprocess_pipeline(dataset(np.ones((2, 4)) + np.eye(2, 4)),
                                PreprocessConfig(normalize=False, smooth_sigma=-1.0))


class TestStandardize:
    def test_two_point_example(self):
        out, stats = standardize(dataset([[0.0, 0.0], [2.0, 2.0]]))
        assert np.allclose(stats.mean, [1.0, 1.0])
        assert np.allclose(stats.std, [1.0, 1.0])
        assert np.allclose(out.intensities, [[-1.0, -1.0], [1.0, 1.0]])
        assert "standardized" in out.provenance

    def test_constant_feature_zeroed_and_flagged(self):
        out, stats = standardize(dataset([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
                                         labels=[1, -1, 1]))
        assert np.array_equal(stats.constant_mask, [False, True])
        assert np.allclose(out.intensities[:, 1], 0.0)

    def test_random_matrix_moments(self):
        rng = np.random.default_rng(9)
        out, _ = standardize(dataset(rng.standard_normal((5, 4)) * 3 + 1,
                                     labels=[1, -1, 1, -1, 1]))
        Z = out.intensities
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(np.sqrt((Z ** 2).mean(axis=0)) - 1) < 1e-10)

    def test_idempotent_on_nonconstant_features(self):
        rng = np.random.default_rng(10)
        once, _ = standardize(dataset(rng.standard_normal((6, 3)),
                                      labels=[1, -1] * 3))
        twice, stats = standardize(once)
        assert np.allclose(twice.intensities, once.intensities, atol=1e-12)
        assert np.allclose(stats.mean, 0.0, atol=1e-12)
        assert np.allclose(stats.std[~stats.constant_mask], 1.0, atol=1e-12)

    def test_requires_two_spectra(self):
        with pytest.raises(ParameterError):
            standardize(dataset([[1.0, 2.0]], labels=[1]))


class TestTopHat:
    def test_constant_spectrum_maps_to_zero(self):
        x = Spectrum(np.arange(1.0, 33.0), np.full(32, 3.7))
        assert np.allclose(tophat_baseline(x, 5).intensities, 0.0)

    def test_narrow_spike_preserved(self):
        v = np.zeros(32)
        v[16] = 4.0
        x = Spectrum(np.arange(1.0, 33.0), v)
        out = tophat_baseline(x, 5).intensities
        assert np.allclose(out, v)

    def test_matches_sliding_minmax_oracle(self):
        rng = np.random.default_rng(21)
        d, window = 32, 5
        h = window // 2
        # ramp plus spikes
        v = np.linspace(0.0, 3.0, d) + np.where(rng.random(d) > 0.8, 2.0, 0.0)
        x = Spectrum(np.arange(1.0, d + 1.0), v)

        def slide(vals, reducer):
            out = np.empty(d)
            for i in range(d):
                lo, hi = max(0, i - h), min(d, i + h + 1)
                out[i] = reducer(vals[lo:hi])
            return out

        opening = slide(slide(v, np.min), np.max)
        assert np.allclose(tophat_baseline(x, window).intensities, v - opening)

    def test_window_validation(self):
        x = Spectrum(np.arange(1.0, 9.0), np.zeros(8))
        for bad in (4, 1, 5.5):
            with pytest.raises(ParameterError):
                tophat_baseline(x, bad)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_nonnegative_on_nonnegative_input(self, seed):
        v = np.abs(np.random.default_rng(seed).standard_normal(40))
        x = Spectrum(np.arange(1.0, 41.0), v)
        assert np.all(tophat_baseline(x, 7).intensities >= -1e-12)

    def test_idempotent_for_flat_baseline_inputs(self):
        v = np.full(48, 1.5)
        v[10] += 3.0
        v[30] += 1.0
        x = Spectrum(np.arange(1.0, 49.0), v)
        once = tophat_baseline(x, 9)
        twice = tophat_baseline(once, 9)
        assert np.allclose(twice.intensities, once.intensities, atol=1e-12)

    def test_dataset_variant_adds_flag(self):
        ds = dataset(np.abs(np.random.default_rng(2).standard_normal((3, 30))),
                     labels=[1, -1, 1])
        out = tophat_dataset(ds, 5)
        assert "baseline_removed" in out.provenance
        ref = tophat_baseline(ds.spectrum(1), 5).intensities
        assert np.allclose(out.intensities[1], ref)


class TestPipeline:
    def test_stage_error_names_stage(self):
        ds = dataset([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(PipelineStageError, match="normalize_tic"):
            preprocess_pipeline(ds, PreprocessConfig())

    def test_full_pipeline_provenance(self):
        rng = np.random.default_rng(1)
        ds = dataset(np.abs(rng.standard_normal((4, 64))) + 0.1,
                     labels=[1, -1, 1, -1])
        out, stats = preprocess_pipeline(ds, PreprocessConfig(tophat_window=5))
        assert out.provenance == frozenset(
            {"baseline_removed", "normalized", "smoothed", "standardized"})
        assert stats.mean.shape == (64,)
