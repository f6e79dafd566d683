import math

import numpy as np
import pytest

from spa.errors import ParameterError, ParseError
from spa.simulate import (GroundTruth, SimulationConfig, build_correlation,
                          ds2_correlated_pairs, estimate_snr, generate_dataset,
                          load_ground_truth, make_peak_dictionary,
                          make_spiked_fixture, nominal_snr, peak_centers,
                          sample_amplitudes, save_ground_truth,
                          support_peak_indices)
from spa.dataset import FeatureVector


class TestPeakDictionary:
    def test_paper_scale_geometry(self):
        atoms = make_peak_dictionary(8192, 200, 10.0)
        assert atoms.shape == (200, 8192)
        centers = peak_centers(8192, 200)
        spacing = np.diff(centers)
        assert np.all((spacing == 40) | (spacing == 41))
        assert np.all(atoms.max(axis=1) == 1.0)

    def test_single_peak_is_centered(self):
        atoms = make_peak_dictionary(101, 1, 3.0)
        assert atoms[0].argmax() == 50

    def test_adjacent_narrow_atoms_nearly_orthogonal(self):
        atoms = make_peak_dictionary(2000, 10, 2.0)
        inner = float(atoms[3] @ atoms[4])
        assert abs(inner) < 1e-6

    def test_truncation_radius(self):
        width = 5.0
        atoms = make_peak_dictionary(401, 1, width)
        center = 200
        radius = math.ceil(4 * width)
        assert atoms[0, center - radius] > 0
        assert atoms[0, center - radius - 1] == 0

    def test_spacing_below_one_channel_rejected(self):
        with pytest.raises(ParameterError):
            make_peak_dictionary(10, 20, 1.0)


class TestCorrelation:
    def test_ds1_is_identity(self):
        assert np.array_equal(build_correlation("ds1", 4, [0]), np.eye(4))

    def test_ds2_has_eight_off_diagonal_entries(self):
        support = support_peak_indices(200, 5)
        sigma = build_correlation("ds2", 200, support)
        off = sigma[~np.eye(200, dtype=bool)]
        assert np.sum(off == 0.8) == 8
        assert np.sum(off != 0) == 8
        assert np.array_equal(sigma, sigma.T)

    def test_ds2_pairs_are_disjoint_and_touch_one_positive(self):
        support = support_peak_indices(40, 3)
        pairs = ds2_correlated_pairs(40, support)
        flat = [p for pair in pairs for p in pair]
        assert len(flat) == len(set(flat))
        positives = [p for p in flat if p in set(support)]
        assert positives == [min(support)]

    def test_nonpositive_definite_custom_rejected(self):
        bad = np.array([[1.0, 1.1], [1.1, 1.0]])
        with pytest.raises(ParameterError, match="positive definite"):
            build_correlation(bad, 2, [0])

    def test_custom_matrix_passes_through(self):
        sigma = np.array([[1.0, 0.3], [0.3, 1.0]])
        assert np.array_equal(build_correlation(sigma, 2, [0]), sigma)


class TestGenerator:
    def test_noiseless_single_peak_labels_follow_amplitude(self):
        cfg = SimulationConfig(d=256, n_peaks=4, peak_width=3.0, support_size=1,
                               correlation="ds1", noise_sigma=0.0, n=64, seed=5)
        ds, truth = generate_dataset(cfg)
        center = truth.true_peak_centers[0]
        amplitudes = ds.intensities[:, center]
        assert np.array_equal(ds.labels, np.where(amplitudes >= 0, 1, -1))

    def test_deterministic_given_seed(self):
        cfg = SimulationConfig(d=512, n_peaks=8, peak_width=4.0, support_size=2,
                               correlation="ds1", noise_sigma=0.2, n=20, seed=42)
        a, _ = generate_dataset(cfg)
        b, _ = generate_dataset(cfg)
        assert np.array_equal(a.intensities, b.intensities)
        assert np.array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self):
        base = dict(d=512, n_peaks=8, peak_width=4.0, support_size=2,
                    correlation="ds1", noise_sigma=0.2, n=20)
        a, _ = generate_dataset(SimulationConfig(seed=1, **base))
        b, _ = generate_dataset(SimulationConfig(seed=2, **base))
        assert not np.array_equal(a.intensities, b.intensities)

    def test_spectra_can_go_negative(self):
        cfg = SimulationConfig(d=1024, n_peaks=16, peak_width=4.0, support_size=2,
                               correlation="ds1", noise_sigma=0.3, n=50, seed=0)
        ds, _ = generate_dataset(cfg)
        assert ds.intensities.min() < 0

    def test_label_balance_under_symmetric_truth(self):
        cfg = SimulationConfig(d=1024, n_peaks=16, peak_width=4.0, support_size=3,
                               correlation="ds1", noise_sigma=0.1, n=2000, seed=9)
        ds, _ = generate_dataset(cfg)
        fraction = float((ds.labels == 1).mean())
        assert 0.45 <= fraction <= 0.55

    def test_ground_truth_support_matches_config(self):
        cfg = SimulationConfig(d=600, n_peaks=12, peak_width=3.0, support_size=4,
                               correlation="ds1", noise_sigma=0.1, n=10, seed=1)
        _, truth = generate_dataset(cfg)
        assert truth.support_size == 4
        assert np.array_equal(truth.omega0.support, truth.true_peak_centers)
        assert np.all(truth.omega0.weights[truth.true_peak_centers] == 1.0)

    def test_amplitude_covariance_converges(self):
        sigma = np.eye(5)
        sigma[0, 1] = sigma[1, 0] = 0.8
        sigma[2, 3] = sigma[3, 2] = -0.4
        sigma = build_correlation(sigma, 5, [0])
        samples = sample_amplitudes(sigma, 100_000, seed=77)
        emp = np.cov(samples.T, bias=True)
        assert np.max(np.abs(emp - sigma)) < 0.05


class TestSnr:
    def test_paper_correspondence(self):
        assert nominal_snr(0.1) == pytest.approx(10.0)
        assert nominal_snr(0.3) == pytest.approx(10.0 / 3.0, rel=1e-3)

    def test_zero_noise_is_infinite(self):
        assert nominal_snr(0.0) == math.inf

    def test_zero_signal_is_zero(self):
        assert nominal_snr(0.1, amplitude_rms=0.0) == 0.0

    def test_estimator_recovers_configured_value(self):
        cfg = SimulationConfig(d=8192, n_peaks=200, peak_width=4.25, support_size=5,
                               correlation="ds1", noise_sigma=0.1, n=200, seed=13)
        ds, _ = generate_dataset(cfg)
        est = estimate_snr(ds)
        assert 0.8 * 10 <= est <= 1.2 * 10


class TestSidecar:
    def test_roundtrip(self, tmp_path):
        cfg = SimulationConfig(d=600, n_peaks=12, peak_width=3.0, support_size=4,
                               correlation="ds1", noise_sigma=0.1, n=10, seed=1)
        _, truth = generate_dataset(cfg)
        path = tmp_path / "truth.csv"
        save_ground_truth(truth, path, peak_indices=support_peak_indices(12, 4),
                          extra_comments=("correlated-pairs: none",))
        back = load_ground_truth(path)
        assert np.array_equal(back.true_peak_centers, truth.true_peak_centers)
        assert back.n_peaks == truth.n_peaks
        assert back.peak_width == truth.peak_width
        assert np.array_equal(back.omega0.weights, truth.omega0.weights)

    def test_header_magic_enforced(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("peak,center\n0,5\n")
        with pytest.raises(ParseError):
            load_ground_truth(path)

    def test_truth_invariant(self):
        with pytest.raises(ParameterError):
            GroundTruth(FeatureVector(np.array([0.0, 1.0])),
                        np.array([0]), 1.0, 4)


class TestSpikedFixture:
    def test_shape_and_labels(self):
        ds, truth = make_spiked_fixture(level=4, seed=0)
        assert ds.n == 64
        assert truth.support_size == 6
        assert np.sum(ds.labels == 1) == 32

    def test_deterministic(self):
        a, _ = make_spiked_fixture(level=2, seed=3)
        b, _ = make_spiked_fixture(level=2, seed=3)
        assert np.array_equal(a.intensities, b.intensities)

    def test_spiked_class_carries_extra_mass_at_spikes(self):
        ds, truth = make_spiked_fixture(level=4, seed=0)
        case = ds.intensities[ds.labels == -1]
        control = ds.intensities[ds.labels == 1]
        strong = truth.true_peak_centers[:5]
        gap = case[:, strong].mean(axis=0) - control[:, strong].mean(axis=0)
        assert np.all(gap > 1.0)
        weak = truth.true_peak_centers[5]
        weak_gap = case[:, weak].mean() - control[:, weak].mean()
        assert weak_gap < 0.2
