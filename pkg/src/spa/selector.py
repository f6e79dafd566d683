"""Sparse feature selection by maximizing the label correlation over an
l1/l2 constraint set, with hard thresholding, connected-component
sparsification, support projection, and sparsity-parameter tuning.

The convex program maximize <c, w> subject to ||w||_1 <= sqrt(lambda) and
||w||_2 <= 1 has a closed solution family: soft-threshold c at some t >= 0
and rescale. The solver picks t by bisection on the l1/l2 ratio, which is
non-increasing in t, so no iterative optimization scheme is needed.
"""

from __future__ import annotations

import bisect as _bisect
import math
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureVector, LabeledDataset, Spectrum
from .errors import (DegenerateObjectiveError, ParameterError, PipelineOrderError)
from .preprocess import PreprocessConfig, _stage, preprocess_pipeline


@dataclass(frozen=True)
class SelectorConfig:
    """Sparsity parameter lambda (the constraint uses sqrt(lambda)), hard
    threshold epsilon, and the bisection tolerance on the l1/l2 ratio."""

    lambda_: float
    epsilon: float = 1e-3
    solver_tol: float = 1e-10

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ParameterError(f"lambda must be positive, got {self.lambda_}")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.solver_tol > 0:
            raise ParameterError(f"solver_tol must be positive, got {self.solver_tol}")


@dataclass(frozen=True, eq=False)
class SPAResult:
    """Selector outputs: raw maximizer, thresholded, and sparsified vectors.

    Supports nest: supp(omega_sparse) <= supp(omega_thresholded) <= supp(omega_raw),
    and omega_sparse keeps one entry per connected support component.
    """

    omega_raw: FeatureVector
    omega_thresholded: FeatureVector
    omega_sparse: FeatureVector
    objective_value: float
    lambda_used: float


def soft_threshold(z, t):
    """sign(z) * max(|z| - t, 0), elementwise."""
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def correlation_vector(ds: LabeledDataset) -> np.ndarray:
    """c[j] = sum_i y_i * x_ij on a standardized dataset.

    Constant channels are zero after standardization, so c vanishes there by
    construction.
    """
    if "standardized" not in ds.provenance:
        raise PipelineOrderError("correlation_vector requires a standardized dataset")
    return ds.labels.astype(float) @ ds.intensities


def l1_l2_ratio(z) -> float:
    """||z||_1 / ||z||_2 of a non-zero vector."""
    z = np.asarray(z, dtype=float)
    n2 = float(np.linalg.norm(z))
    if n2 == 0:
        raise ParameterError("ratio undefined for the zero vector")
    return float(np.abs(z).sum()) / n2


def maximize_linear(c, sqrt_lambda, ratio_tol=1e-10):
    """Maximize <c, w> over {||w||_1 <= sqrt_lambda} intersected with the unit
    l2 ball. Returns (weights, objective).

    Three exact regimes:
      * the l1 constraint is slack at c/||c||_2  ->  return c/||c||_2;
      * sqrt_lambda <= sqrt(m) where m is the multiplicity of max|c_j|  ->
        spread sqrt_lambda evenly over the argmax coordinates (l1 tight,
        l2 slack);
      * otherwise bisect the soft threshold t until the l1/l2 ratio of
        softthreshold(c, t) meets sqrt_lambda, then rescale to unit l2 norm.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ParameterError("c must be a non-empty 1-d array")
    if not sqrt_lambda > 0:
        raise ParameterError(f"sqrt_lambda must be positive, got {sqrt_lambda}")
    if not np.all(np.isfinite(c)):
        raise ParameterError("c must be finite")
    n2 = float(np.linalg.norm(c))
    if n2 == 0.0:
        raise DegenerateObjectiveError("objective direction is the zero vector")
    n1 = float(np.abs(c).sum())
    if n1 <= sqrt_lambda * n2:
        w = c / n2
        return w, float(w @ c)

    a = np.abs(c)
    tmax = float(a.max())
    ties = np.flatnonzero(a == tmax)
    m = ties.size
    if sqrt_lambda * sqrt_lambda <= m:
        w = np.zeros_like(c)
        w[ties] = (sqrt_lambda / m) * np.where(c[ties] >= 0, 1.0, -1.0)
        return w, float(tmax * sqrt_lambda)

    # ratio(0) > sqrt_lambda > sqrt(m) = lim ratio(t), so a root exists
    asc = np.sort(a)
    desc = asc[::-1]
    cum1 = np.cumsum(desc).tolist()
    cum2 = np.cumsum(desc * desc).tolist()
    asc = asc.tolist()
    d = len(asc)

    def ratio(t):
        k = d - _bisect.bisect_right(asc, t)
        s1 = cum1[k - 1] - k * t
        s2 = cum2[k - 1] - 2.0 * t * cum1[k - 1] + k * t * t
        return s1 / math.sqrt(s2)

    lo, hi = 0.0, math.nextafter(tmax, 0.0)
    t = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = ratio(mid)
        if abs(r - sqrt_lambda) <= ratio_tol:
            t = mid
            break
        if r > sqrt_lambda:
            lo = mid
        else:
            hi = mid
        if hi - lo <= np.finfo(float).eps * tmax:
            t = hi
            break
    else:
        t = hi
    u = soft_threshold(c, t)
    w = u / np.linalg.norm(u)
    return w, float(w @ c)


def onebit_select(ds: LabeledDataset, lambda_, tol=1e-10):
    """Solve the selection program on a standardized dataset.

    Returns (FeatureVector, objective). Raises DegenerateObjectiveError when
    the correlation vector vanishes (e.g. a single-class dataset), since no
    direction separates the labels.
    """
    if not lambda_ > 0:
        raise ParameterError(f"lambda must be positive, got {lambda_}")
    c = correlation_vector(ds)
    # centered single-class data leaves c at rounding-noise scale
    if not np.any(np.abs(c) > 1e-10 * ds.n):
        raise DegenerateObjectiveError(
            "class-correlation vector vanishes; no direction separates the labels")
    w, objective = maximize_linear(c, math.sqrt(lambda_), ratio_tol=tol)
    return FeatureVector(w), objective


def hard_threshold(fv: FeatureVector, epsilon) -> FeatureVector:
    """Zero every entry with |w_k| <= epsilon (strict survival: |w_k| > epsilon)."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    w = np.where(np.abs(fv.weights) > epsilon, fv.weights, 0.0)
    return FeatureVector(w)


def sparsify_components(fv: FeatureVector) -> FeatureVector:
    """Keep one entry per connected support component (maximal runs of
    consecutive indices): the largest-magnitude entry, ties to the lowest index."""
    sup = fv.support
    if sup.size == 0:
        return fv
    w = fv.weights
    out = np.zeros_like(w)
    cuts = np.flatnonzero(np.diff(sup) > 1) + 1
    for comp in np.split(sup, cuts):
        k = comp[int(np.argmax(np.abs(w[comp])))]
        out[k] = w[k]
    return FeatureVector(out)


def project_support(x: Spectrum, support) -> Spectrum:
    """Zero every intensity outside `support`; only positions are used, never
    the feature-vector values."""
    idx = np.fromiter(support, dtype=int) if not isinstance(support, np.ndarray) \
        else support.astype(int)
    if idx.size:
        if idx.min() < 0 or idx.max() >= x.d:
            raise ParameterError("support index out of range")
    out = np.zeros(x.d)
    out[idx] = x.intensities[idx]
    return Spectrum(x.channels, out)


def _select_stack(standardized: LabeledDataset, cfg: SelectorConfig) -> SPAResult:
    raw, objective = _stage("onebit_select", onebit_select,
                            standardized, cfg.lambda_, cfg.solver_tol)
    thresholded = _stage("hard_threshold", hard_threshold, raw, cfg.epsilon)
    sparse = sparsify_components(thresholded)
    return SPAResult(raw, thresholded, sparse, objective, cfg.lambda_)


def run_spa(ds: LabeledDataset, cfg: SelectorConfig,
            pre: PreprocessConfig | None = None) -> SPAResult:
    """Full pipeline on a raw dataset: normalize -> smooth -> standardize ->
    select -> hard threshold -> sparsify. Stage errors carry the stage name."""
    standardized, _ = preprocess_pipeline(ds, pre)
    return _select_stack(standardized, cfg)


@dataclass(frozen=True, eq=False)
class TuningReport:
    """Outcome of a sparsity-parameter search.

    On success, `lambda_`/`count`/`result` describe the accepted run. On
    failure, `bracket_low` and `bracket_high` carry the closest
    (lambda, count, result) triples on either side of the target.
    """

    success: bool
    target_k: int
    lambda_: float | None
    count: int | None
    result: object | None
    bracket_low: tuple | None
    bracket_high: tuple | None
    n_evals: int
    message: str

    def best_result(self):
        """The accepted result, or the bracket result closest to the target."""
        if self.success:
            return self.result
        candidates = [b for b in (self.bracket_low, self.bracket_high) if b is not None]
        if not candidates:
            return None
        return min(candidates, key=lambda b: abs(b[1] - self.target_k))[2]


def tune_lambda(evaluate, target_k, lambda0=1.0, step=None, param_tol=None,
                max_iter=200, increasing=True) -> TuningReport:
    """Search for a lambda whose pipeline yields exactly target_k features.

    `evaluate(lam) -> (count, artifact)` runs the pipeline. Starting from
    lambda0 (halved until the count sits on the near side of the target), the
    parameter is increased by the fixed `step` until the count reaches or
    crosses target_k; on overshoot the bracketing interval is bisected until
    the count matches or the interval is narrower than `param_tol`.
    `increasing` states whether the count grows with lambda (selection
    program) or shrinks (penalized baselines).
    """
    if target_k < 1:
        raise ParameterError(f"target_k must be >= 1, got {target_k}")
    if not lambda0 > 0:
        raise ParameterError(f"lambda0 must be positive, got {lambda0}")
    step = 0.1 * lambda0 if step is None else step
    param_tol = 1e-4 * lambda0 if param_tol is None else param_tol
    if not step > 0 or not param_tol > 0:
        raise ParameterError("step and param_tol must be positive")

    evals = 0

    def ev(lam):
        nonlocal evals
        evals += 1
        return evaluate(lam)

    def below(count):
        return count < target_k if increasing else count > target_k

    def success(lam, count, artifact):
        if count != target_k:
            raise AssertionError("tuner accepted a run with the wrong feature count")
        return TuningReport(True, target_k, lam, count, artifact, None, None, evals,
                            f"exact count {target_k} at lambda={lam:.6g}")

    def failure(message, low, high):
        return TuningReport(False, target_k, None, None, None, low, high, evals, message)

    lam = float(lambda0)
    count, art = ev(lam)
    if count == target_k:
        return success(lam, count, art)

    # shrink lambda until the count sits on the near side of the target
    while not below(count):
        if evals >= max_iter or lam <= 1e-12 * lambda0:
            return failure("could not reach the near side of the target by shrinking lambda",
                           None, (lam, count, art))
        lam *= 0.5
        count, art = ev(lam)
        if count == target_k:
            return success(lam, count, art)

    low = (lam, count, art)
    high = None
    while evals < max_iter:
        lam = lam + step
        count, art = ev(lam)
        if count == target_k:
            return success(lam, count, art)
        if below(count):
            low = (lam, count, art)
        else:
            high = (lam, count, art)
            break
    if high is None:
        return failure("evaluation budget exhausted before crossing the target", low, None)

    while evals < max_iter and (high[0] - low[0]) > param_tol:
        mid = 0.5 * (low[0] + high[0])
        count, art = ev(mid)
        if count == target_k:
            return success(mid, count, art)
        if below(count):
            low = (mid, count, art)
        else:
            high = (mid, count, art)
    return failure(
        f"no lambda with exactly {target_k} features: bracket "
        f"[{low[0]:.6g} -> {low[1]}, {high[0]:.6g} -> {high[1]}]",
        low, high)


def tune_sparsity(ds: LabeledDataset, target_k, step=None, param_tol=None,
                  max_iter=200, lambda0=1.0, epsilon=1e-3, solver_tol=1e-10,
                  pre: PreprocessConfig | None = None) -> TuningReport:
    """Find the sparsity parameter whose sparsified output has exactly
    target_k non-zeros.

    Counting happens on omega_sparse (after sparsification). Preprocessing is
    lambda-independent, so it runs once; every probe replays only the
    selection stack, which matches re-running the full pipeline.
    """
    standardized, _ = preprocess_pipeline(ds, pre)

    def evaluate(lam):
        result = _select_stack(standardized, SelectorConfig(lam, epsilon, solver_tol))
        return result.omega_sparse.nnz, result

    return tune_lambda(evaluate, target_k, lambda0=lambda0, step=step,
                       param_tol=param_tol, max_iter=max_iter, increasing=True)
