"""Domain types and CSV I/O for spectra, labels, and feature vectors.

A dataset is a matrix of intensity rows over one shared channel axis plus
binary labels in {-1, +1}. Preprocessing provenance is tracked as a monotone
set of flags so downstream stages can verify pipeline order. All types are
immutable after construction and safe to share across parallel workers.

File formats
------------
Dataset CSV: optional first header line ``mz,<c_1>,...,<c_d>``; each
subsequent line ``<label>,<v_1>,...,<v_d>`` with label in {-1, +1}. Empty
cells and ``nan`` tokens both denote missing values. Without a header the
channel axis defaults to 1..d.

Feature-vector CSV: one comment line ``# spa-feature-vector v1 d=<d>``,
a header ``index,channel,weight``, then one row per support element.
Weights are written with ``repr`` so the round trip is bit-exact.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingDataError, ParameterError, ParseError
from .util import readonly

PROVENANCE_FLAGS = frozenset({"normalized", "smoothed", "standardized", "baseline_removed"})

_LABEL_TOKENS = {"1": 1, "+1": 1, "-1": -1, "−1": -1}

_FEATURE_MAGIC = re.compile(r"^# spa-feature-vector v(\d+) d=(\d+)$")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One intensity vector over a strictly increasing channel axis."""

    channels: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        ch = readonly(self.channels)
        iv = readonly(self.intensities)
        if ch.ndim != 1 or iv.ndim != 1 or ch.shape != iv.shape or ch.size < 1:
            raise ParameterError("channels and intensities must be 1-d arrays of equal positive length")
        if not np.all(np.diff(ch) > 0):
            raise ParameterError("channels must be strictly increasing")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "intensities", iv)

    @property
    def d(self):
        return self.channels.size


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """n spectra sharing one channel axis, with labels in {-1, +1}.

    `provenance` records which preprocessing stages produced the intensities;
    it only ever gains members along the pipeline.
    """

    channels: np.ndarray
    intensities: np.ndarray
    labels: np.ndarray
    provenance: frozenset = frozenset()

    def __post_init__(self):
        ch = readonly(self.channels)
        X = readonly(self.intensities)
        y = readonly(self.labels, dtype=int)
        if ch.ndim != 1 or ch.size < 1:
            raise ParameterError("channels must be a non-empty 1-d array")
        if X.ndim != 2 or X.shape[1] != ch.size:
            raise ParameterError("intensities must be an (n, d) array matching the channel axis")
        if X.shape[0] < 1:
            raise ParameterError("dataset must contain at least one spectrum")
        if y.shape != (X.shape[0],):
            raise ParameterError("labels must be a 1-d array with one entry per spectrum")
        if not np.all(np.isin(y, (-1, 1))):
            raise ParameterError("labels must be -1 or +1")
        if not np.all(np.diff(ch) > 0):
            raise ParameterError("channels must be strictly increasing")
        flags = frozenset(self.provenance)
        if not flags <= PROVENANCE_FLAGS:
            raise ParameterError(f"unknown provenance flags {sorted(flags - PROVENANCE_FLAGS)}")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "intensities", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "provenance", flags)

    @property
    def n(self):
        return self.intensities.shape[0]

    @property
    def d(self):
        return self.intensities.shape[1]

    def spectrum(self, i) -> Spectrum:
        return Spectrum(self.channels, self.intensities[i])

    def iter_spectra(self):
        return (self.spectrum(i) for i in range(self.n))

    def with_intensities(self, intensities, add_flags=()) -> "LabeledDataset":
        """Same axis and labels with new intensities; provenance only gains flags."""
        return LabeledDataset(self.channels, intensities, self.labels,
                              self.provenance | frozenset(add_flags))

    def take(self, indices) -> "LabeledDataset":
        """Row subset in the given order (provenance preserved)."""
        idx = np.asarray(indices, dtype=int)
        return LabeledDataset(self.channels, self.intensities[idx], self.labels[idx],
                              self.provenance)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Dense weight vector; `support` is exactly the set of non-zero indices."""

    weights: np.ndarray
    support: np.ndarray = field(init=False)

    def __post_init__(self):
        w = readonly(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise ParameterError("weights must be a non-empty 1-d array")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "support", readonly(np.flatnonzero(w), dtype=int))

    @property
    def d(self):
        return self.weights.size

    @property
    def nnz(self):
        return self.support.size


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """Per-channel mean and population standard deviation; constant channels flagged."""

    mean: np.ndarray
    std: np.ndarray
    constant_mask: np.ndarray

    def __post_init__(self):
        mean = readonly(self.mean)
        std = readonly(self.std)
        mask = readonly(self.constant_mask, dtype=bool)
        if not (mean.shape == std.shape == mask.shape) or mean.ndim != 1:
            raise ParameterError("mean, std and constant_mask must be 1-d arrays of equal length")
        if np.any(std < 0):
            raise ParameterError("standard deviations must be non-negative")
        if not np.array_equal(mask, std == 0):
            raise ParameterError("constant_mask must mark exactly the zero-deviation channels")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "constant_mask", mask)


def validate_for_prediction(x: Spectrum) -> None:
    """Raise MissingDataError listing offending channels unless every intensity is finite.

    Prediction must not proceed on spectra with missing values; there is no
    imputation path.
    """
    bad = np.flatnonzero(~np.isfinite(x.intensities))
    if bad.size:
        raise MissingDataError(bad)


def validate_dataset(ds: LabeledDataset) -> None:
    """Apply validate_for_prediction to every spectrum, naming the offender."""
    for i in range(ds.n):
        bad = np.flatnonzero(~np.isfinite(ds.intensities[i]))
        if bad.size:
            raise MissingDataError(bad, context=f"spectrum {i}")


def _parse_floats(tokens, line, allow_missing):
    out = np.empty(len(tokens))
    for j, tok in enumerate(tokens):
        tok = tok.strip()
        if tok == "":
            if not allow_missing:
                raise ParseError(f"empty field in column {j + 1}", line=line)
            out[j] = np.nan
            continue
        try:
            out[j] = float(tok)
        except ValueError:
            raise ParseError(f"bad number {tok!r} in column {j + 1}", line=line) from None
    return out


def load_dataset(path, format="csv") -> LabeledDataset:
    """Load a labeled dataset from CSV, preserving file row order.

    Returns a dataset with empty provenance. Missing cells load as NaN; they
    are rejected later by validate_for_prediction, not here.
    """
    if format != "csv":
        raise ParameterError(f"unsupported dataset format {format!r}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() != ""]
    if not rows:
        raise ParseError("empty dataset file", line=1)

    channels = None
    start = 0
    header_line, header_text = rows[0]
    if header_text.split(",", 1)[0].strip() == "mz":
        fields = header_text.split(",")[1:]
        if not fields:
            raise ParseError("header declares no channels", line=header_line)
        channels = _parse_floats(fields, header_line, allow_missing=False)
        if not np.all(np.diff(channels) > 0):
            raise ParseError("header channels must be strictly increasing", line=header_line)
        start = 1

    d = channels.size if channels is not None else None
    labels, data = [], []
    for line, text in rows[start:]:
        parts = text.split(",")
        tok = parts[0].strip()
        if tok not in _LABEL_TOKENS:
            raise ParseError(f"label {tok!r} not in {{-1,+1}}", line=line)
        values = parts[1:]
        if d is None:
            if not values:
                raise ParseError("row has no intensity values", line=line)
            d = len(values)
        if len(values) != d:
            raise ParseError(f"expected {d} intensity values, found {len(values)}", line=line)
        labels.append(_LABEL_TOKENS[tok])
        data.append(_parse_floats(values, line, allow_missing=True))
    if not data:
        raise ParseError("file contains a header but no data rows", line=header_line)
    if channels is None:
        channels = np.arange(1, d + 1, dtype=float)
    return LabeledDataset(channels, np.array(data), np.array(labels))


def save_dataset(ds: LabeledDataset, path) -> None:
    """Write a dataset CSV (header + one row per spectrum) that load_dataset reads back."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mz," + ",".join(repr(float(c)) for c in ds.channels) + "\n")
        for yi, row in zip(ds.labels, ds.intensities):
            tok = "+1" if yi > 0 else "-1"
            fh.write(tok + "," + ",".join(repr(float(v)) for v in row) + "\n")


def save_feature_vector(fv: FeatureVector, channels, path) -> None:
    """Write the support of `fv` as CSV; weights round-trip bit-for-bit."""
    ch = np.asarray(channels, dtype=float)
    if ch.shape != (fv.d,):
        raise ParameterError("channels length must match the feature-vector dimension")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# spa-feature-vector v1 d={fv.d}\n")
        fh.write("index,channel,weight\n")
        for k in fv.support:
            fh.write(f"{int(k)},{repr(float(ch[k]))},{repr(float(fv.weights[k]))}\n")


def load_feature_vector(path) -> FeatureVector:
    """Read a feature-vector CSV written by save_feature_vector."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip() != ""]
    if not rows:
        raise ParseError("empty feature-vector file", line=1)
    match = _FEATURE_MAGIC.match(rows[0][1])
    if match is None:
        raise ParseError("missing 'spa-feature-vector' header", line=rows[0][0])
    version, d = int(match.group(1)), int(match.group(2))
    if version != 1:
        raise ParseError(f"unsupported feature-vector version v{version}", line=rows[0][0])
    if d < 1:
        raise ParseError("feature-vector dimension must be positive", line=rows[0][0])
    if len(rows) < 2 or rows[1][1] != "index,channel,weight":
        raise ParseError("missing 'index,channel,weight' column header", line=rows[0][0] + 1)
    weights = np.zeros(d)
    seen = set()
    for line, text in rows[2:]:
        parts = text.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, found {len(parts)}", line=line)
        try:
            k = int(parts[0])
            float(parts[1])
            w = float(parts[2])
        except ValueError:
            raise ParseError(f"bad row {text!r}", line=line) from None
        if not 0 <= k < d:
            raise ParseError(f"index {k} out of range for d={d}", line=line)
        if k in seen:
            raise ParseError(f"duplicate index {k}", line=line)
        seen.add(k)
        weights[k] = w
    return FeatureVector(weights)
