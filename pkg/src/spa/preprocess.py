"""Spectrum preprocessing: TIC normalization, Gaussian smoothing, standardization,
and morphological TopHat baseline removal.

All operations are pure and act per spectrum; datasets come back with the
corresponding provenance flag added.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dataset import LabeledDataset, Spectrum, StandardizationStats
from .errors import DegenerateInputError, ParameterError, PipelineStageError, SpaError
from .util import next_pow2, readonly


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Gaussian density sampled at integer offsets -radius..radius.

    The samples are raw density values, deliberately not renormalized to sum
    to one; truncation is at radius = ceil(4 * sigma).
    """

    sigma: float
    radius: int
    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", readonly(self.samples))

    @classmethod
    def from_sigma(cls, sigma) -> "GaussianKernel":
        if not sigma > 0:
            raise ParameterError(f"smoothing sigma must be positive, got {sigma}")
        radius = math.ceil(4 * sigma)
        k = np.arange(-radius, radius + 1, dtype=float)
        samples = np.exp(-(k * k) / (2.0 * sigma * sigma)) / math.sqrt(2.0 * math.pi * sigma * sigma)
        return cls(float(sigma), radius, samples)


@dataclass(frozen=True)
class PreprocessConfig:
    """Preprocessing stages applied ahead of feature selection.

    Order is fixed: TopHat (optional) -> TIC normalization -> Gaussian
    smoothing -> standardization. `smooth_sigma` is in channel units;
    None skips the smoothing stage.
    """

    normalize: bool = True
    smooth_sigma: float | None = 2.0
    tophat_window: int | None = None


def normalize_tic(ds: LabeledDataset) -> LabeledDataset:
    """Scale every spectrum to unit l1 norm (total ion count)."""
    norms = np.abs(ds.intensities).sum(axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateInputError(
            f"spectrum {int(zero[0])} has zero total ion count and cannot be normalized")
    return ds.with_intensities(ds.intensities / norms[:, None], add_flags=("normalized",))


def _fft_convolve_same(X, samples, radius):
    # full linear convolution via rfft at the next power of two >= d + 2*radius,
    # then the d-length centered slice; zero padding, no circular wrap-around
    d = X.shape[1]
    nfft = next_pow2(d + 2 * radius)
    spec = np.fft.rfft(X, nfft, axis=1) * np.fft.rfft(samples, nfft)
    full = np.fft.irfft(spec, nfft, axis=1)
    return np.ascontiguousarray(full[:, radius:radius + d])


def smooth_gaussian(ds: LabeledDataset, sigma) -> LabeledDataset:
    """Convolve every spectrum with a truncated Gaussian density.

    Boundaries are zero padded; the transform-based computation matches the
    direct O(d^2) convolution sum to within 1e-9 relative error.
    """
    kernel = GaussianKernel.from_sigma(sigma)
    smoothed = _fft_convolve_same(ds.intensities, kernel.samples, kernel.radius)
    return ds.with_intensities(smoothed, add_flags=("smoothed",))


def standardize(ds: LabeledDataset):
    """Center every channel and scale non-constant channels to unit deviation.

    Uses the population formula (1/n). Constant channels are set to zero and
    flagged in the returned stats rather than dropped, preserving index
    alignment. Returns (dataset, StandardizationStats).
    """
    if ds.n < 2:
        raise ParameterError("standardization requires at least two spectra")
    X = ds.intensities
    mean = X.mean(axis=0)
    centered = X - mean
    std = np.sqrt(np.mean(centered * centered, axis=0))
    mask = std == 0
    Z = centered / np.where(mask, 1.0, std)
    if np.any(mask):
        Z[:, mask] = 0.0
    stats = StandardizationStats(mean=mean, std=std, constant_mask=mask)
    return ds.with_intensities(Z, add_flags=("standardized",)), stats


def _check_window(window):
    w = int(window)
    if w != window or w < 3 or w % 2 == 0:
        raise ParameterError(f"TopHat window must be an odd integer >= 3, got {window}")
    return w


def tophat_baseline(x: Spectrum, window) -> Spectrum:
    """Subtract the morphological opening (flat structuring element of `window`).

    Removes slowly varying baseline while preserving peaks narrower than the
    window; never produces negative values on the original non-negative signal.
    Window edges clamp to the signal range.
    """
    w = _check_window(window)
    v = x.intensities
    opening = ndimage.grey_dilation(ndimage.grey_erosion(v, size=w, mode="nearest"),
                                    size=w, mode="nearest")
    return Spectrum(x.channels, v - opening)


def tophat_dataset(ds: LabeledDataset, window) -> LabeledDataset:
    """Apply tophat_baseline to every spectrum."""
    w = _check_window(window)
    eroded = ndimage.grey_erosion(ds.intensities, size=(1, w), mode="nearest")
    opening = ndimage.grey_dilation(eroded, size=(1, w), mode="nearest")
    return ds.with_intensities(ds.intensities - opening, add_flags=("baseline_removed",))


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except PipelineStageError:
        raise
    except SpaError as exc:
        raise PipelineStageError(name, exc) from exc


def preprocess_pipeline(ds: LabeledDataset, cfg: PreprocessConfig | None = None):
    """Run the configured preprocessing stages in their fixed order.

    Errors from individual stages are re-raised with the stage name attached.
    Returns (dataset, StandardizationStats).
    """
    cfg = cfg if cfg is not None else PreprocessConfig()
    work = ds
    if cfg.tophat_window is not None:
        work = _stage("tophat_baseline", tophat_dataset, work, cfg.tophat_window)
    if cfg.normalize:
        work = _stage("normalize_tic", normalize_tic, work)
    if cfg.smooth_sigma is not None:
        work = _stage("smooth_gaussian", smooth_gaussian, work, cfg.smooth_sigma)
    return _stage("standardize", standardize, work)
