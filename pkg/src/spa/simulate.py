"""Ground-truth synthetic spectra: Gaussian peak dictionary, correlated peak
amplitudes, additive noise, and sign labels.

Each spectrum is a random superposition of M equidistant Gaussian atoms plus
white noise; labels are the sign of the inner product with a sparse
ground-truth weight vector whose non-zeros sit at chosen peak centers.
Generation is deterministic given the seed, with one RNG substream per
sample so parallel generation reproduces sequential output.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureVector, LabeledDataset
from .errors import ParameterError, ParseError
from .util import readonly, sign_pm

_TRUTH_MAGIC = re.compile(
    r"^# spa-ground-truth v(\d+) d=(\d+) peaks=(\d+) width=([0-9.eE+-]+)$")

# amplitude-RMS to noise-RMS convention: sigma=0.1 reports 10, sigma=0.3 reports 3.33
_MAD_SCALE = 0.6744897501960817


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Generator settings.

    `correlation` is "ds1" (independent amplitudes), "ds2" (a few 0.8
    correlations wired between peaks), or a custom positive-definite matrix.
    `peak_width` is the Gaussian standard deviation of an atom in channels.
    """

    d: int
    n_peaks: int
    peak_width: float
    support_size: int
    correlation: object = "ds1"
    noise_sigma: float = 0.1
    n: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n_peaks < 1 or self.n < 1:
            raise ParameterError("d, n_peaks and n must be positive")
        if self.n_peaks > self.d:
            raise ParameterError("cannot place more peaks than channels")
        if not self.peak_width > 0:
            raise ParameterError("peak_width must be positive")
        if not 1 <= self.support_size <= self.n_peaks:
            raise ParameterError("support_size must be in 1..n_peaks")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be non-negative")
        if isinstance(self.correlation, str):
            if self.correlation not in ("ds1", "ds2"):
                raise ParameterError(f"unknown correlation kind {self.correlation!r}")
        else:
            object.__setattr__(self, "correlation", readonly(self.correlation))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """True feature vector, its peak-center support, and peak geometry."""

    omega0: FeatureVector
    true_peak_centers: np.ndarray
    peak_width: float
    n_peaks: int

    def __post_init__(self):
        centers = readonly(np.sort(np.asarray(self.true_peak_centers)), dtype=int)
        object.__setattr__(self, "true_peak_centers", centers)
        if not np.array_equal(centers, self.omega0.support):
            raise ParameterError("omega0 support must equal the true peak centers")

    @property
    def support_size(self):
        return self.true_peak_centers.size


def peak_centers(d, n_peaks) -> np.ndarray:
    """Equidistant centers floor((m + 1/2) * d / M) for m = 0..M-1."""
    return np.floor((np.arange(n_peaks) + 0.5) * d / n_peaks).astype(int)


def make_peak_dictionary(d, n_peaks, peak_width) -> np.ndarray:
    """(M, d) matrix of unit-height Gaussian atoms truncated at 4 * peak_width."""
    if n_peaks > d:
        raise ParameterError("cannot place more peaks than channels")
    if d / n_peaks < 1.0:
        raise ParameterError("peak spacing below one channel")
    if not peak_width > 0:
        raise ParameterError("peak_width must be positive")
    centers = peak_centers(d, n_peaks)
    radius = math.ceil(4 * peak_width)
    atoms = np.zeros((n_peaks, d))
    offsets = np.arange(-radius, radius + 1)
    bump = np.exp(-(offsets * offsets) / (2.0 * peak_width * peak_width))
    for m, c in enumerate(centers):
        pos = offsets + c
        inside = (pos >= 0) & (pos < d)
        atoms[m, pos[inside]] = bump[inside]
    return atoms


def support_peak_indices(n_peaks, support_size) -> np.ndarray:
    """Deterministic equidistant choice of the condition-positive peaks."""
    return np.floor((np.arange(support_size) + 0.5) * n_peaks / support_size).astype(int)


def ds2_correlated_pairs(n_peaks, support):
    """Deterministic DS2 wiring: three disjoint pairs of condition-negative
    peaks plus one (positive, negative) pair, all at the lowest available
    negative indices."""
    support = set(int(s) for s in support)
    negatives = [m for m in range(n_peaks) if m not in support]
    if len(negatives) < 7 or not support:
        raise ParameterError("ds2 needs at least one positive and seven negative peaks")
    pairs = [(negatives[0], negatives[1]),
             (negatives[2], negatives[3]),
             (negatives[4], negatives[5]),
             (min(support), negatives[6])]
    return pairs


def build_correlation(kind, n_peaks, support) -> np.ndarray:
    """Amplitude correlation matrix for the named structure, checked positive
    definite before use. 'ds1' is the identity; 'ds2' adds 0.8 at the wired
    pairs; a custom symmetric matrix is validated and passed through."""
    if isinstance(kind, str):
        if kind == "ds1":
            return np.eye(n_peaks)
        if kind == "ds2":
            sigma = np.eye(n_peaks)
            for p, q in ds2_correlated_pairs(n_peaks, support):
                sigma[p, q] = sigma[q, p] = 0.8
        else:
            raise ParameterError(f"unknown correlation kind {kind!r}")
    else:
        sigma = np.asarray(kind, dtype=float)
        if sigma.shape != (n_peaks, n_peaks):
            raise ParameterError("correlation matrix shape must be (n_peaks, n_peaks)")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ParameterError("correlation matrix must be symmetric")
    smallest = float(np.linalg.eigvalsh(sigma)[0])
    if not smallest > 0:
        raise ParameterError(f"correlation matrix must be positive definite "
                             f"(smallest eigenvalue {smallest:.3g})")
    return sigma


def _sym_sqrt(sigma):
    vals, vecs = np.linalg.eigh(sigma)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def sample_amplitudes(sigma_matrix, n, seed) -> np.ndarray:
    """n rows of N(0, Sigma) amplitudes using per-sample RNG substreams."""
    root = _sym_sqrt(np.asarray(sigma_matrix, dtype=float))
    m = root.shape[0]
    out = np.empty((n, m))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        out[i] = root @ np.random.default_rng(child).standard_normal(m)
    return out


def generate_dataset(cfg: SimulationConfig):
    """Draw n labeled spectra; returns (LabeledDataset, GroundTruth).

    x_i = sum_m s_im * atom_m + noise_i with s_i ~ N(0, Sigma) and
    noise ~ N(0, sigma^2 I); y_i = sign(<x_i, omega0>) with sign(0) = +1,
    computed on the noisy spectrum. Spectra are not clipped and may go
    negative. Bit-identical for equal seeds.
    """
    atoms = make_peak_dictionary(cfg.d, cfg.n_peaks, cfg.peak_width)
    centers = peak_centers(cfg.d, cfg.n_peaks)
    sup_peaks = support_peak_indices(cfg.n_peaks, cfg.support_size)
    sigma_matrix = build_correlation(cfg.correlation, cfg.n_peaks, sup_peaks)
    root = _sym_sqrt(sigma_matrix)

    weights = np.zeros(cfg.d)
    weights[centers[sup_peaks]] = 1.0
    omega0 = FeatureVector(weights)

    X = np.empty((cfg.n, cfg.d))
    for i, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.n)):
        rng = np.random.default_rng(child)
        amplitudes = root @ rng.standard_normal(cfg.n_peaks)
        X[i] = amplitudes @ atoms
        if cfg.noise_sigma > 0:
            X[i] += cfg.noise_sigma * rng.standard_normal(cfg.d)
    labels = sign_pm(X @ weights)

    ds = LabeledDataset(np.arange(1, cfg.d + 1, dtype=float), X, labels)
    truth = GroundTruth(omega0, centers[sup_peaks], float(cfg.peak_width), cfg.n_peaks)
    return ds, truth


def nominal_snr(noise_sigma, amplitude_rms=1.0) -> float:
    """Configured signal-to-noise: RMS peak amplitude over noise RMS.

    With unit peak height this maps sigma=0.1 to 10 and sigma=0.3 to 3.33.
    sigma=0 yields the infinite-SNR sentinel; zero signal yields 0.
    """
    if noise_sigma < 0 or amplitude_rms < 0:
        raise ParameterError("noise_sigma and amplitude_rms must be non-negative")
    if amplitude_rms == 0:
        return 0.0
    if noise_sigma == 0:
        return math.inf
    return amplitude_rms / noise_sigma


def estimate_noise_mad(intensities) -> float:
    """Noise level from the median absolute deviation of first differences.

    Differencing suppresses the smooth peak structure, so the MAD of the
    residual is dominated by the white noise floor; averaged over spectra.
    """
    X = np.atleast_2d(np.asarray(intensities, dtype=float))
    diffs = np.diff(X, axis=1)
    med = np.median(diffs, axis=1, keepdims=True)
    per_spectrum = np.median(np.abs(diffs - med), axis=1) / (_MAD_SCALE * math.sqrt(2.0))
    return float(per_spectrum.mean())


def estimate_snr(ds: LabeledDataset) -> float:
    """Data-driven counterpart of nominal_snr for generated or real spectra.

    The signal scale is taken from the upper tail of per-channel sample
    deviations (peak-center channels), with the estimated noise variance
    subtracted out.
    """
    noise = estimate_noise_mad(ds.intensities)
    channel_var = ds.intensities.var(axis=0)
    peak_var = float(np.quantile(channel_var, 0.995))
    amplitude = math.sqrt(max(peak_var - noise * noise, 0.0))
    if noise == 0:
        return math.inf if amplitude > 0 else 0.0
    return amplitude / noise


def save_ground_truth(truth: GroundTruth, path, peak_indices=None, extra_comments=()) -> None:
    """Write the ground-truth sidecar CSV (peak index, center channel rows)."""
    centers = truth.true_peak_centers
    if peak_indices is None:
        peak_indices = range(len(centers))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# spa-ground-truth v1 d={truth.omega0.d} "
                 f"peaks={truth.n_peaks} width={repr(float(truth.peak_width))}\n")
        for comment in extra_comments:
            fh.write(f"# {comment}\n")
        fh.write("peak,center\n")
        for m, c in zip(peak_indices, centers):
            fh.write(f"{int(m)},{int(c)}\n")


def load_ground_truth(path) -> GroundTruth:
    """Read a sidecar written by save_ground_truth."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() != ""]
    if not rows:
        raise ParseError("empty ground-truth file", line=1)
    match = _TRUTH_MAGIC.match(rows[0][1])
    if match is None:
        raise ParseError("missing 'spa-ground-truth' header", line=rows[0][0])
    version = int(match.group(1))
    if version != 1:
        raise ParseError(f"unsupported ground-truth version v{version}", line=rows[0][0])
    d, n_peaks, width = int(match.group(2)), int(match.group(3)), float(match.group(4))
    body = [(ln, text) for ln, text in rows[1:] if not text.startswith("#")]
    if not body or body[0][1] != "peak,center":
        raise ParseError("missing 'peak,center' column header", line=rows[0][0] + 1)
    centers = []
    for line, text in body[1:]:
        parts = text.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, found {len(parts)}", line=line)
        try:
            int(parts[0])
            center = int(parts[1])
        except ValueError:
            raise ParseError(f"bad row {text!r}", line=line) from None
        if not 0 <= center < d:
            raise ParseError(f"center {center} out of range for d={d}", line=line)
        centers.append(center)
    weights = np.zeros(d)
    weights[centers] = 1.0
    return GroundTruth(FeatureVector(weights), np.array(centers, dtype=int), width, n_peaks)


def make_spiked_fixture(level=4, seed=0, d=2000, n=64):
    """Deterministic spiked-style benchmark: half the spectra carry six
    injected peaks on top of a shared background; returns (dataset, truth).

    The injected heights scale with `level` in 0..4, except the last spike,
    which stays at noise scale at every level and is undetectable by
    construction. Controls are labeled +1, spiked samples -1.
    """
    if not 0 <= level <= 4:
        raise ParameterError(f"level must be in 0..4, got {level}")
    if n < 4 or n % 2:
        raise ParameterError("n must be an even number >= 4")
    level_scale = (0.05, 0.15, 0.4, 1.0, 2.5)[level]
    width = 8.0
    n_background = 40
    bg_atoms = make_peak_dictionary(d, n_background, width)

    spike_centers = (np.floor((np.arange(6) + 0.5) * d / 6).astype(int) + 17) % d
    spike_centers.sort()
    radius = math.ceil(4 * width)
    offsets = np.arange(-radius, radius + 1)
    bump = np.exp(-(offsets * offsets) / (2.0 * width * width))
    spike_atoms = np.zeros((6, d))
    for m, c in enumerate(spike_centers):
        pos = offsets + c
        inside = (pos >= 0) & (pos < d)
        spike_atoms[m, pos[inside]] = bump[inside]
    spike_heights = np.array([1.0, 0.9, 0.8, 0.7, 0.6, 0.02]) * level_scale

    baseline = 2.0 * np.exp(-np.arange(d) / (0.25 * d))
    noise_sigma = 0.1
    half = n // 2
    X = np.empty((n, d))
    labels = np.empty(n, dtype=int)
    for i, child in enumerate(np.random.SeedSequence(entropy=(seed, 2718)).spawn(n)):
        rng = np.random.default_rng(child)
        bg_amp = 1.0 + 0.2 * rng.standard_normal(n_background)
        x = baseline + bg_amp @ bg_atoms + noise_sigma * rng.standard_normal(d)
        if i >= half:
            x = x + (spike_heights * (1.0 + 0.15 * rng.standard_normal(6))) @ spike_atoms
            labels[i] = -1
        else:
            labels[i] = 1
        X[i] = x

    weights = np.zeros(d)
    weights[spike_centers] = 1.0
    truth = GroundTruth(FeatureVector(weights), spike_centers, width,
                        n_peaks=n_background + 6)
    ds = LabeledDataset(np.arange(1, d + 1, dtype=float), X, labels)
    return ds, truth
