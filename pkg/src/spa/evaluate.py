"""Feature-level scoring against a known ground truth, the cross-validation
harness, and the linear fold classifier.

Negatives are counted at peak granularity: with M candidate peaks and s true
ones, fp + tn always sums to M - s.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.svm import SVC

from .baselines import run_baseline, tune_baseline
from .dataset import FeatureVector, LabeledDataset
from .errors import (FoldDegenerateError, ParameterError, SpaError,
                     UndefinedMetricError)
from .preprocess import PreprocessConfig
from .selector import SelectorConfig, run_spa, tune_sparsity
from .simulate import GroundTruth
from .util import sign_pm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    """Peak-level confusion counts."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")


def match_features(selected, truth: GroundTruth, tolerance) -> ConfusionCounts:
    """Greedy nearest-first matching of selected channel indices to true peak
    centers within +-tolerance channels.

    Each selected index is consumable by at most one peak and vice versa, so
    a duplicate hit on an already-matched peak counts as a false positive and
    cannot rescue a missed one. tn is derived at peak granularity as
    (M - s) - fp (floored at zero for pathological over-selection).
    """
    if tolerance < 0:
        raise ParameterError("tolerance must be non-negative")
    sel = np.unique(np.asarray(list(selected), dtype=int))
    centers = truth.true_peak_centers
    pairs = []
    for si, s in enumerate(sel):
        dist = np.abs(centers - s)
        for pi in np.flatnonzero(dist <= tolerance):
            pairs.append((int(dist[pi]), int(centers[pi]), int(s), int(pi), si))
    pairs.sort()
    matched_peaks = set()
    matched_sel = set()
    for _, _, _, pi, si in pairs:
        if pi in matched_peaks or si in matched_sel:
            continue
        matched_peaks.add(pi)
        matched_sel.add(si)
    tp = len(matched_peaks)
    fn = truth.support_size - tp
    fp = int(sel.size) - len(matched_sel)
    tn = max(truth.n_peaks - truth.support_size - fp, 0)
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def sensitivity(c: ConfusionCounts) -> float:
    """tp / (tp + fn)."""
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("sensitivity undefined: no condition-positive peaks")
    return c.tp / (c.tp + c.fn)


def specificity(c: ConfusionCounts) -> float:
    """tn / (fp + tn)."""
    if c.fp + c.tn == 0:
        raise UndefinedMetricError("specificity undefined: no condition-negative peaks")
    return c.tn / (c.fp + c.tn)


def balanced_accuracy(c: ConfusionCounts) -> float:
    """(sensitivity + specificity) / 2."""
    return 0.5 * (sensitivity(c) + specificity(c))


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Linear decision rule sign(<w, x> + b) with sign(0) = +1."""

    w: np.ndarray
    b: float

    def decision(self, X):
        return np.asarray(X) @ self.w + self.b

    def predict(self, X):
        return sign_pm(self.decision(X))


def svm_objective(model: LinearModel, X, y, c=1.0) -> float:
    """Primal soft-margin objective 0.5 ||w||^2 + C * sum hinge(y * f(x))."""
    margins = np.asarray(y, dtype=float) * model.decision(X)
    return 0.5 * float(model.w @ model.w) + c * float(np.maximum(0.0, 1.0 - margins).sum())


def train_linear_classifier(X, y, c=1.0, tol=1e-6, max_iter=-1) -> LinearModel:
    """Soft-margin linear classifier for fold prediction.

    Deterministic given the data; raises FoldDegenerateError when only one
    class is present.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if np.unique(y).size < 2:
        raise FoldDegenerateError("training fold contains a single class")
    svc = SVC(kernel="linear", C=c, tol=tol, max_iter=max_iter)
    svc.fit(X, y)
    return LinearModel(w=np.asarray(svc.coef_[0], dtype=float),
                       b=float(svc.intercept_[0]))


def make_selector(method, *, lambda_=None, target_k=None, epsilon=1e-3,
                  solver_tol=1e-10, pre: PreprocessConfig | None = None,
                  tune_step=None, tune_tol=None, tune_max_iter=200,
                  tune_lambda0=1.0, baseline_max_iter=20000, baseline_tol=None):
    """Build a `dataset -> FeatureVector` callable for the named method.

    Exactly one of `lambda_` (fixed parameter) or `target_k` (tuned feature
    count) must be given. On a tuning failure the closest bracketed result is
    used and a warning logged, so downstream reports show the actual count.
    """
    if method not in ("spa", "lasso", "l1svm"):
        raise ParameterError(f"unknown method {method!r}")
    if (lambda_ is None) == (target_k is None):
        raise ParameterError("give exactly one of lambda_ or target_k")

    def from_report(report):
        if report.success:
            result = report.result
        else:
            logger.warning("sparsity tuning failed (%s); using closest bracket",
                           report.message)
            result = report.best_result()
            if result is None:
                raise SpaError(f"sparsity tuning failed: {report.message}")
        return result

    def select(ds: LabeledDataset) -> FeatureVector:
        if method == "spa":
            if lambda_ is not None:
                return run_spa(ds, SelectorConfig(lambda_, epsilon, solver_tol),
                               pre).omega_sparse
            report = tune_sparsity(ds, target_k, step=tune_step, param_tol=tune_tol,
                                   max_iter=tune_max_iter, lambda0=tune_lambda0,
                                   epsilon=epsilon, solver_tol=solver_tol, pre=pre)
            return from_report(report).omega_sparse
        if lambda_ is not None:
            fv, _ = run_baseline(ds, method, lambda_, epsilon=epsilon, pre=pre,
                                 max_iter=baseline_max_iter, tol=baseline_tol)
            return fv
        report = tune_baseline(ds, method, target_k, step=tune_step,
                               param_tol=tune_tol, max_iter=tune_max_iter,
                               lambda0=tune_lambda0, epsilon=epsilon, pre=pre,
                               solver_max_iter=baseline_max_iter,
                               solver_tol=baseline_tol)
        return from_report(report)[0]

    return select


@dataclass(frozen=True)
class CVFoldRow:
    """One (repetition, fold) outcome; skipped folds carry a reason and are
    excluded from the means."""

    repetition: int
    fold: int
    accuracy: float
    n_features: int
    skipped: bool = False
    reason: str = ""


@dataclass(frozen=True, eq=False)
class CVReport:
    """Per-fold rows plus their arithmetic means."""

    rows: tuple
    mean_accuracy: float
    mean_sparsity: float
    repetitions: int
    k_folds: int


def kfold_indices(n, k_folds, rng):
    """Random partition into k disjoint folds whose sizes differ by at most one."""
    return np.array_split(rng.permutation(n), k_folds)


def cross_validate(ds: LabeledDataset, k_folds, method, method_config=None,
                   repetitions=1, seed=0, classifier_c=1.0) -> CVReport:
    """Repeated K-fold protocol: learn a feature vector on the training
    folds, project every spectrum onto its support, train the linear
    classifier on the projected training folds, and score the held-out fold.

    `method` is a method name (with `method_config` keyword arguments for
    make_selector) or a `dataset -> FeatureVector` callable. Deterministic
    given the seed; folds whose training data is single-class (or whose
    selected support is empty) are reported and excluded from the means.
    """
    if k_folds < 2:
        raise ParameterError(f"k_folds must be >= 2, got {k_folds}")
    if ds.n < 2 * k_folds:
        raise ParameterError(f"need at least {2 * k_folds} samples for {k_folds} folds")
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")
    select = method if callable(method) else make_selector(method, **(method_config or {}))

    rows = []
    for rep, child in enumerate(np.random.SeedSequence(seed).spawn(repetitions)):
        rng = np.random.default_rng(child)
        folds = kfold_indices(ds.n, k_folds, rng)
        for k, test_idx in enumerate(folds):
            train_idx = np.concatenate([folds[j] for j in range(k_folds) if j != k])
            train = ds.take(train_idx)
            try:
                fv = select(train)
                if fv.nnz == 0:
                    raise FoldDegenerateError("selected feature support is empty")
                model = train_linear_classifier(train.intensities[:, fv.support],
                                                train.labels, c=classifier_c)
            except (FoldDegenerateError, SpaError) as exc:
                rows.append(CVFoldRow(rep, k, float("nan"), 0, True, str(exc)))
                continue
            predictions = model.predict(ds.intensities[test_idx][:, fv.support])
            accuracy = float(np.mean(predictions == ds.labels[test_idx]))
            rows.append(CVFoldRow(rep, k, accuracy, fv.nnz))

    valid = [r for r in rows if not r.skipped]
    mean_acc = float(np.mean([r.accuracy for r in valid])) if valid else float("nan")
    mean_sparsity = float(np.mean([r.n_features for r in valid])) if valid else float("nan")
    return CVReport(tuple(rows), mean_acc, mean_sparsity, repetitions, k_folds)
