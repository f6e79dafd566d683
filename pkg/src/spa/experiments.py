"""Desk-scale recovery experiments: feature-recovery quality of the tuned
pipeline on simulated datasets, swept over sample counts and seeds.

Rows are plain dicts ready for CSV. With SPA_THREADS > 1 the sweep fans
cells out to a process pool; results are keyed and sorted, so parallel runs
reproduce the sequential output exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

from .errors import UndefinedMetricError
from .evaluate import balanced_accuracy, match_features, sensitivity, specificity
from .preprocess import PreprocessConfig
from .selector import tune_sparsity
from .simulate import SimulationConfig, generate_dataset
from .util import worker_count

SWEEP_COLUMNS = ("correlation", "noise_sigma", "n", "seed", "tuned", "lambda",
                 "n_features", "tp", "fp", "tn", "fn",
                 "sensitivity", "specificity", "balanced_accuracy")

# full width at half maximum of a Gaussian bump, in deviations
FWHM_PER_SIGMA = 2.3548200450309493


def recovery_trial(*, n, seed, correlation="ds1", noise_sigma=0.1, d=8192,
                   n_peaks=200, peak_fwhm=10.0, support_size=5, target_k=5,
                   tolerance=None, smooth_sigma=2.0, normalize=True,
                   lambda0=1.0, tune_step=25.0, tune_tol=None,
                   tune_max_iter=200) -> dict:
    """Generate one dataset, tune the pipeline to target_k features, and
    score the recovered support against the true peak centers.

    `peak_fwhm` is the visible peak width (full width at half maximum); the
    matching tolerance defaults to that width. Standardization flattens the
    correlation profile across a peak's extent, so the in-peak argmax lands
    anywhere within roughly the half-width of the bump; a tolerance tied to
    the visible width absorbs exactly that displacement.
    """
    sigma_atom = peak_fwhm / FWHM_PER_SIGMA
    cfg = SimulationConfig(d=d, n_peaks=n_peaks, peak_width=sigma_atom,
                           support_size=support_size, correlation=correlation,
                           noise_sigma=noise_sigma, n=n, seed=seed)
    ds, truth = generate_dataset(cfg)
    pre = PreprocessConfig(normalize=normalize, smooth_sigma=smooth_sigma)
    report = tune_sparsity(ds, target_k, step=tune_step, param_tol=tune_tol,
                           max_iter=tune_max_iter, lambda0=lambda0, pre=pre)
    result = report.result if report.success else report.best_result()
    fv = result.omega_sparse
    tol = math.ceil(peak_fwhm) if tolerance is None else tolerance
    counts = match_features(fv.support, truth, tol)

    row = {"correlation": correlation, "noise_sigma": noise_sigma, "n": n,
           "seed": seed, "tuned": report.success,
           "lambda": report.lambda_ if report.success else float("nan"),
           "n_features": fv.nnz, "tp": counts.tp, "fp": counts.fp,
           "tn": counts.tn, "fn": counts.fn}
    for name, metric in (("sensitivity", sensitivity),
                         ("specificity", specificity),
                         ("balanced_accuracy", balanced_accuracy)):
        try:
            row[name] = metric(counts)
        except UndefinedMetricError:
            row[name] = float("nan")
    return row


def _trial_cell(kwargs):
    return recovery_trial(**kwargs)


def sensitivity_sweep(n_values, seeds, workers=None, **trial_kwargs):
    """recovery_trial over the (n, seed) grid; rows sorted by (n, seed)."""
    cells = [dict(trial_kwargs, n=int(n), seed=int(s))
             for n in n_values for s in seeds]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial_cell, cells))
    else:
        rows = [recovery_trial(**cell) for cell in cells]
    rows.sort(key=lambda r: (r["n"], r["seed"]))
    return rows
