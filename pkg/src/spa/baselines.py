"""Penalized reference selectors: squared-loss lasso and l1-regularized
hinge-loss SVM, both on standardized data with labels as targets.

The lasso runs cyclic coordinate descent with exact per-coordinate
soft-threshold updates. The l1-SVM runs a deterministic proximal-subgradient
scheme with diminishing steps and best-iterate tracking; both stop when an
objective-improvement window falls below `tol`, so a re-run with a larger
iteration cap retraces the same trajectory and stops at the same point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureVector, LabeledDataset
from .errors import ParameterError, PipelineOrderError
from .preprocess import PreprocessConfig, preprocess_pipeline
from .selector import TuningReport, hard_threshold, soft_threshold, tune_lambda


@dataclass(frozen=True)
class BaselineConfig:
    """Regularization weight plus iteration cap and objective-decrease
    stopping tolerance."""

    lambda_: float
    max_iter: int = 20000
    tol: float = 1e-10

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ParameterError(f"lambda must be positive, got {self.lambda_}")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ParameterError("tol must be positive")


@dataclass(eq=False)
class BaselineFit:
    """Solver outcome: weight vector, convergence flag, iteration count,
    final objective, and the per-sweep objective history."""

    omega: FeatureVector
    converged: bool
    n_iter: int
    objective: float
    objective_history: np.ndarray


def _require_standardized(ds):
    if "standardized" not in ds.provenance:
        raise PipelineOrderError("baseline solvers require a standardized dataset")


def lasso(ds: LabeledDataset, lambda_, max_iter=20000, tol=1e-10) -> BaselineFit:
    """Minimize (1/2n) ||y - X w||_2^2 + lambda ||w||_1 by cyclic coordinate
    descent with exact soft-threshold updates.

    Converged when the largest coordinate change in a sweep drops below
    `tol`; otherwise the last iterate is returned with converged=False.
    Constant (zero-variance) channels stay at zero.
    """
    _require_standardized(ds)
    cfg = BaselineConfig(lambda_, max_iter, tol)
    X = ds.intensities
    y = ds.labels.astype(float)
    n, d = X.shape
    col_sq = (X * X).sum(axis=0) / n
    active = np.flatnonzero(col_sq > 0)

    w = np.zeros(d)
    residual = y.copy()
    history = []
    converged = False
    sweeps = 0
    for sweeps in range(1, cfg.max_iter + 1):
        max_delta = 0.0
        for j in active:
            old = w[j]
            rho = (X[:, j] @ residual) / n + col_sq[j] * old
            new = math.copysign(max(abs(rho) - cfg.lambda_, 0.0), rho) / col_sq[j]
            if new != old:
                residual -= X[:, j] * (new - old)
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        history.append(0.5 * float(residual @ residual) / n
                       + cfg.lambda_ * float(np.abs(w).sum()))
        if max_delta < cfg.tol:
            converged = True
            break
    objective = history[-1] if history else 0.5 * float(y @ y) / n
    return BaselineFit(FeatureVector(w), converged, sweeps, objective,
                       np.asarray(history))


def l1_svm(ds: LabeledDataset, lambda_, max_iter=20000, tol=1e-9,
           step0=None, window=100) -> BaselineFit:
    """Minimize sum_i max(0, 1 - y_i <w, x_i>) + lambda ||w||_1 by proximal
    subgradient steps eta_t = step0 / sqrt(t) with best-iterate tracking.

    Stops once a `window`-iteration stretch improves the best objective by
    less than `tol`. The trajectory is deterministic, so a run with a larger
    cap stops at the same iterate whenever the tolerance fires first.
    """
    _require_standardized(ds)
    cfg = BaselineConfig(lambda_, max_iter, tol)
    X = ds.intensities
    y = ds.labels.astype(float)
    if np.unique(y).size < 2:
        raise ParameterError("l1_svm requires both classes present")
    n, d = X.shape
    yx = y[:, None] * X
    if step0 is None:
        step0 = 1.0 / max(1.0, float(np.abs(yx.sum(axis=0)).max()))

    def objective(w):
        margins = yx @ w
        return float(np.maximum(0.0, 1.0 - margins).sum()) \
            + cfg.lambda_ * float(np.abs(w).sum())

    w = np.zeros(d)
    best_w = w.copy()
    best_obj = objective(w)
    history = [best_obj]
    window_ref = best_obj
    converged = False
    iterations = 0
    for t in range(1, cfg.max_iter + 1):
        iterations = t
        margins = yx @ w
        grad = -yx[margins < 1.0].sum(axis=0)
        eta = step0 / math.sqrt(t)
        w = soft_threshold(w - eta * grad, eta * cfg.lambda_)
        obj = objective(w)
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
        history.append(best_obj)
        if t % window == 0:
            if window_ref - best_obj < cfg.tol:
                converged = True
                break
            window_ref = best_obj
    return BaselineFit(FeatureVector(best_w), converged, iterations, best_obj,
                       np.asarray(history))


_SOLVERS = {"lasso": lasso, "l1svm": l1_svm}


def run_baseline(ds: LabeledDataset, method, lambda_, epsilon=1e-3,
                 pre: PreprocessConfig | None = None, max_iter=20000, tol=None):
    """Preprocess a raw dataset, run the named solver, and hard-threshold the
    result exactly as the selection pipeline does. Returns
    (FeatureVector, BaselineFit)."""
    if method not in _SOLVERS:
        raise ParameterError(f"unknown baseline method {method!r}")
    standardized, _ = preprocess_pipeline(ds, pre)
    kwargs = {} if tol is None else {"tol": tol}
    fit = _SOLVERS[method](standardized, lambda_, max_iter=max_iter, **kwargs)
    return hard_threshold(fit.omega, epsilon), fit


def tune_baseline(ds: LabeledDataset, method, target_k, step=None, param_tol=None,
                  max_iter=200, lambda0=1.0, epsilon=1e-3,
                  pre: PreprocessConfig | None = None, solver_max_iter=20000,
                  solver_tol=None) -> TuningReport:
    """Tune the regularization weight until the thresholded solution has
    exactly target_k non-zeros.

    Counts shrink as lambda grows for these penalized solvers, so the search
    brackets from the opposite direction than the selection program.
    """
    if method not in _SOLVERS:
        raise ParameterError(f"unknown baseline method {method!r}")
    standardized, _ = preprocess_pipeline(ds, pre)
    solver = _SOLVERS[method]
    kwargs = {} if solver_tol is None else {"tol": solver_tol}

    def evaluate(lam):
        fit = solver(standardized, lam, max_iter=solver_max_iter, **kwargs)
        thresholded = hard_threshold(fit.omega, epsilon)
        return thresholded.nnz, (thresholded, fit)

    return tune_lambda(evaluate, target_k, lambda0=lambda0, step=step,
                       param_tol=param_tol, max_iter=max_iter, increasing=False)
