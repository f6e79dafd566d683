"""Batch command line: simulate, select, crossval, and score subcommands.

Every option can also come from a key=value config file (--config); explicit
flags win over the file, the file wins over built-in defaults. Exit codes:
0 success, 1 runtime or data error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass

from . import dataset as dataset_io
from .errors import ParameterError, SpaError
from .evaluate import (balanced_accuracy, cross_validate, match_features,
                       sensitivity, specificity)
from .experiments import sensitivity_sweep  # re-export for scripts
from .preprocess import PreprocessConfig
from .selector import SelectorConfig, run_spa, tune_sparsity
from .simulate import (SimulationConfig, ds2_correlated_pairs, generate_dataset,
                       load_ground_truth, save_ground_truth, support_peak_indices)
from .baselines import run_baseline, tune_baseline

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _cast_bool(text):
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Param:
    """One configurable option: type caster, default, and help text."""

    cast: object
    default: object = None
    help: str = ""
    required: bool = False
    flag: bool = False  # store_true style


_SELECT_COMMON = {
    "method": Param(str, "spa", "selection method: spa | lasso | l1svm"),
    "lambda": Param(float, None, "fixed sparsity/regularization parameter"),
    "target_features": Param(int, None, "tune the parameter to this feature count"),
    "epsilon": Param(float, 1e-3, "hard threshold applied to every method"),
    "sigma": Param(float, 2.0, "smoothing kernel deviation in channels"),
    "no_normalize": Param(_cast_bool, False, "skip total-ion-count normalization", flag=True),
    "tophat_window": Param(int, None, "odd TopHat baseline window; omit to skip"),
    "lambda0": Param(float, 1.0, "initial parameter for tuning"),
    "step": Param(float, None, "tuning step (default: 10% of lambda0)"),
    "param_tol": Param(float, None, "tuning bisection width tolerance"),
    "max_iter": Param(int, 200, "tuning evaluation budget"),
    "solver_tol": Param(float, 1e-10, "bisection tolerance on the l1/l2 ratio"),
    "baseline_max_iter": Param(int, 20000, "iteration cap for baseline solvers"),
    "baseline_tol": Param(float, None, "stopping tolerance for baseline solvers"),
}

SCHEMAS = {
    "simulate": {
        "d": Param(int, 8192, "number of channels"),
        "peaks": Param(int, 200, "number of equidistant peaks"),
        "width": Param(float, 10.0, "peak deviation in channels"),
        "support": Param(int, 5, "number of condition-positive peaks"),
        "cov": Param(str, "ds1", "amplitude correlation: ds1 | ds2"),
        "noise": Param(float, 0.1, "noise deviation"),
        "n": Param(int, 100, "number of spectra"),
        "seed": Param(int, 0, "generator seed"),
        "out": Param(str, None, "output dataset CSV", required=True),
        "truth_out": Param(str, None, "ground-truth sidecar path (default: <out>.truth.csv)"),
    },
    "select": dict(_SELECT_COMMON, **{
        "out": Param(str, None, "feature CSV path (default: <dataset>.features.csv)"),
        "log": Param(str, None, "run log path (default: <out>.log)"),
    }),
    "crossval": dict(_SELECT_COMMON, **{
        "folds": Param(int, 5, "number of folds (>= 2)"),
        "reps": Param(int, 10, "number of repetitions"),
        "seed": Param(int, 0, "fold-split seed"),
        "svm_c": Param(float, 1.0, "fold classifier C"),
        "out": Param(str, None, "report CSV path (default: <dataset>.crossval.csv)"),
    }),
    "score": {
        "truth": Param(str, None, "ground-truth sidecar CSV", required=True),
        "tolerance": Param(int, None, "match tolerance in channels (default: ceil(peak width))"),
        "out": Param(str, "-", "metrics CSV path, - for stdout"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved parameters of one command; round-trips through key=value text."""

    command: str
    params: dict


def _format_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: RunConfig) -> str:
    lines = [f"command={cfg.command}"]
    lines += [f"{key}={_format_value(cfg.params[key])}" for key in sorted(cfg.params)]
    return "\n".join(lines) + "\n"


def parse_config_text(text, command=None):
    """key=value lines -> dict of raw strings; '#' starts a comment line."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParameterError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    declared = raw.pop("command", None)
    if command is not None and declared is not None and declared != command:
        raise ParameterError(f"config file is for command {declared!r}, not {command!r}")
    return raw, declared


def config_from_text(text) -> RunConfig:
    raw, command = parse_config_text(text)
    if command is None:
        raise ParameterError("config text is missing the command= line")
    if command not in SCHEMAS:
        raise ParameterError(f"unknown command {command!r} in config")
    schema = SCHEMAS[command]
    params = {}
    for key, spec in schema.items():
        if key not in raw:
            params[key] = spec.default
            continue
        value = raw.pop(key)
        params[key] = None if value == "" else spec.cast(value)
    if raw:
        raise ParameterError(f"unknown config keys {sorted(raw)} for command {command!r}")
    return RunConfig(command, params)


def resolve_params(command, args, config_path):
    """Merge CLI values over config-file values over schema defaults."""
    schema = SCHEMAS[command]
    file_values = {}
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            raw, _ = parse_config_text(fh.read(), command=command)
        for key, value in raw.items():
            if key not in schema:
                raise ParameterError(f"unknown config key {key!r} for command {command!r}")
            file_values[key] = None if value == "" else schema[key].cast(value)
    params = {}
    for key, spec in schema.items():
        cli_value = getattr(args, key, None)
        if spec.flag and cli_value is False:
            cli_value = None  # unset flag defers to config file
        if cli_value is not None:
            params[key] = cli_value
        elif key in file_values:
            params[key] = file_values[key]
        else:
            params[key] = spec.default
        if spec.required and params[key] is None:
            raise ParameterError(f"missing required option --{key.replace('_', '-')}")
    return params


def _add_schema_options(parser, schema):
    for key, spec in schema.items():
        flag = "--" + key.replace("_", "-")
        if spec.flag:
            parser.add_argument(flag, action="store_true", default=False, help=spec.help)
        else:
            parser.add_argument(flag, type=spec.cast, default=None, help=spec.help,
                                dest=key)
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--dump-config", default=None,
                        help="write the resolved configuration to this path")
    parser.add_argument("--progress", action="store_true", default=False,
                        help="write per-stage timings to standard error")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spa",
        description="Feature selection and classification for labeled spectra")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset and its ground truth")
    _add_schema_options(p_sim, SCHEMAS["simulate"])

    p_sel = sub.add_parser("select", help="select features from a dataset CSV")
    _add_schema_options(p_sel, SCHEMAS["select"])
    p_sel.add_argument("dataset", help="input dataset CSV")

    p_cv = sub.add_parser("crossval", help="repeated K-fold evaluation of a method")
    _add_schema_options(p_cv, SCHEMAS["crossval"])
    p_cv.add_argument("dataset", help="input dataset CSV")

    p_sc = sub.add_parser("score", help="score selected features against a ground truth")
    _add_schema_options(p_sc, SCHEMAS["score"])
    p_sc.add_argument("selected", help="feature-vector CSV")

    return parser


class _Progress:
    def __init__(self, enabled):
        self.enabled = enabled
        self._t0 = time.perf_counter()

    def stage(self, name):
        if self.enabled:
            now = time.perf_counter()
            print(f"[spa] {name}: {now - self._t0:.3f}s", file=sys.stderr)
            self._t0 = now


def _derived_path(base, suffix):
    return (base[:-4] if base.endswith(".csv") else base) + suffix


def _validate_positive(params, *keys):
    for key in keys:
        value = params.get(key)
        if value is not None and not value > 0:
            raise ParameterError(f"--{key.replace('_', '-')} must be positive, got {value}")


def _preprocess_config(params):
    return PreprocessConfig(normalize=not params["no_normalize"],
                            smooth_sigma=params["sigma"],
                            tophat_window=params["tophat_window"])


def _check_select_params(params):
    if params["method"] not in ("spa", "lasso", "l1svm"):
        raise ParameterError(f"unknown method {params['method']!r}")
    if (params["lambda"] is None) == (params["target_features"] is None):
        raise ParameterError("give exactly one of --lambda or --target-features")
    _validate_positive(params, "lambda", "epsilon", "sigma", "lambda0", "step",
                       "param_tol", "solver_tol", "baseline_tol")
    if params["target_features"] is not None and params["target_features"] < 1:
        raise ParameterError("--target-features must be >= 1")
    if params["tophat_window"] is not None:
        w = params["tophat_window"]
        if w < 3 or w % 2 == 0:
            raise ParameterError(f"--tophat-window must be an odd integer >= 3, got {w}")


def cmd_simulate(params, progress):
    _validate_positive(params, "d", "peaks", "width", "n")
    if params["noise"] < 0:
        raise ParameterError("--noise must be non-negative")
    cfg = SimulationConfig(d=params["d"], n_peaks=params["peaks"],
                           peak_width=params["width"], support_size=params["support"],
                           correlation=params["cov"], noise_sigma=params["noise"],
                           n=params["n"], seed=params["seed"])
    ds, truth = generate_dataset(cfg)
    progress.stage("generate")
    dataset_io.save_dataset(ds, params["out"])
    truth_path = params["truth_out"] or _derived_path(params["out"], ".truth.csv")
    comments = []
    if params["cov"] == "ds2":
        pairs = ds2_correlated_pairs(cfg.n_peaks,
                                     support_peak_indices(cfg.n_peaks, cfg.support_size))
        comments.append("correlated-pairs: " + ",".join(f"{p}~{q}" for p, q in pairs))
    save_ground_truth(truth, truth_path,
                      peak_indices=support_peak_indices(cfg.n_peaks, cfg.support_size),
                      extra_comments=comments)
    progress.stage("write")
    return EXIT_OK


def _select_features(ds, params):
    """Shared select/crossval dispatch; returns (FeatureVector, info dict)."""
    pre = _preprocess_config(params)
    method = params["method"]
    if method == "spa":
        if params["lambda"] is not None:
            result = run_spa(ds, SelectorConfig(params["lambda"], params["epsilon"],
                                                params["solver_tol"]), pre)
            return result.omega_sparse, {"lambda": result.lambda_used,
                                         "objective": result.objective_value}
        report = tune_sparsity(ds, params["target_features"], step=params["step"],
                               param_tol=params["param_tol"], max_iter=params["max_iter"],
                               lambda0=params["lambda0"], epsilon=params["epsilon"],
                               solver_tol=params["solver_tol"], pre=pre)
        if not report.success:
            raise SpaError(f"tuning: {report.message}")
        return report.result.omega_sparse, {"lambda": report.lambda_,
                                            "objective": report.result.objective_value,
                                            "tuning_evals": report.n_evals}
    if params["lambda"] is not None:
        fv, fit = run_baseline(ds, method, params["lambda"], epsilon=params["epsilon"],
                               pre=pre, max_iter=params["baseline_max_iter"],
                               tol=params["baseline_tol"])
        return fv, {"lambda": params["lambda"], "objective": fit.objective,
                    "converged": fit.converged}
    report = tune_baseline(ds, method, params["target_features"], step=params["step"],
                           param_tol=params["param_tol"], max_iter=params["max_iter"],
                           lambda0=params["lambda0"], epsilon=params["epsilon"], pre=pre,
                           solver_max_iter=params["baseline_max_iter"],
                           solver_tol=params["baseline_tol"])
    if not report.success:
        raise SpaError(f"tuning: {report.message}")
    fv, fit = report.result
    return fv, {"lambda": report.lambda_, "objective": fit.objective,
                "tuning_evals": report.n_evals}


def cmd_select(params, progress, dataset_path):
    _check_select_params(params)
    ds = dataset_io.load_dataset(dataset_path)
    dataset_io.validate_dataset(ds)
    progress.stage("load")
    fv, info = _select_features(ds, params)
    progress.stage("select")
    out = params["out"] or _derived_path(dataset_path, ".features.csv")
    dataset_io.save_feature_vector(fv, ds.channels, out)
    log_path = params["log"] or out + ".log"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(f"dataset={dataset_path}\nmethod={params['method']}\n")
        fh.write(f"n={ds.n}\nd={ds.d}\nn_features={fv.nnz}\n")
        for key in sorted(info):
            fh.write(f"{key}={_format_value(info[key])}\n")
    progress.stage("write")
    return EXIT_OK


def cmd_crossval(params, progress, dataset_path):
    _check_select_params(params)
    if params["folds"] < 2:
        raise ParameterError(f"--folds must be >= 2, got {params['folds']}")
    if params["reps"] < 1:
        raise ParameterError("--reps must be >= 1")
    _validate_positive(params, "svm_c")
    ds = dataset_io.load_dataset(dataset_path)
    dataset_io.validate_dataset(ds)
    progress.stage("load")
    method_config = {
        "lambda_": params["lambda"], "target_k": params["target_features"],
        "epsilon": params["epsilon"], "solver_tol": params["solver_tol"],
        "pre": _preprocess_config(params), "tune_step": params["step"],
        "tune_tol": params["param_tol"], "tune_max_iter": params["max_iter"],
        "tune_lambda0": params["lambda0"],
        "baseline_max_iter": params["baseline_max_iter"],
        "baseline_tol": params["baseline_tol"],
    }
    report = cross_validate(ds, params["folds"], params["method"], method_config,
                            repetitions=params["reps"], seed=params["seed"],
                            classifier_c=params["svm_c"])
    progress.stage("crossval")
    out = params["out"] or _derived_path(dataset_path, ".crossval.csv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("method,repetition,fold,accuracy,n_features\n")
        for row in report.rows:
            acc = "nan" if row.skipped else repr(row.accuracy)
            fh.write(f"{params['method']},{row.repetition},{row.fold},{acc},{row.n_features}\n")
        fh.write(f"{params['method']},summary,mean,{repr(report.mean_accuracy)},"
                 f"{repr(report.mean_sparsity)}\n")
    skipped = [r for r in report.rows if r.skipped]
    for row in skipped:
        print(f"[spa] skipped repetition {row.repetition} fold {row.fold}: {row.reason}",
              file=sys.stderr)
    progress.stage("write")
    return EXIT_OK


def cmd_score(params, progress, selected_path):
    fv = dataset_io.load_feature_vector(selected_path)
    truth = load_ground_truth(params["truth"])
    tolerance = params["tolerance"]
    if tolerance is None:
        tolerance = math.ceil(truth.peak_width)
    if tolerance < 0:
        raise ParameterError("--tolerance must be non-negative")
    counts = match_features(fv.support, truth, tolerance)
    progress.stage("score")
    values = {"tolerance": tolerance, "tp": counts.tp, "fp": counts.fp,
              "tn": counts.tn, "fn": counts.fn}
    for name, metric in (("sensitivity", sensitivity), ("specificity", specificity),
                         ("balanced_accuracy", balanced_accuracy)):
        try:
            values[name] = repr(metric(counts))
        except SpaError as exc:
            values[name] = "nan"
            print(f"[spa] {name} undefined: {exc}", file=sys.stderr)
    header = "tolerance,tp,fp,tn,fn,sensitivity,specificity,balanced_accuracy"
    line = ",".join(str(values[k]) for k in header.split(","))
    if params["out"] == "-":
        print(header)
        print(line)
    else:
        with open(params["out"], "w", encoding="utf-8") as fh:
            fh.write(header + "\n" + line + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    try:
        params = resolve_params(args.command, args, args.config)
        if args.command == "select":
            _check_select_params(params)
        if args.dump_config:
            with open(args.dump_config, "w", encoding="utf-8") as fh:
                fh.write(config_to_text(RunConfig(args.command, params)))
    except (ParameterError, OSError) as exc:
        print(f"spa: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    progress = _Progress(args.progress)
    try:
        if args.command == "simulate":
            return cmd_simulate(params, progress)
        if args.command == "select":
            return cmd_select(params, progress, args.dataset)
        if args.command == "crossval":
            return cmd_crossval(params, progress, args.dataset)
        return cmd_score(params, progress, args.selected)
    except ParameterError as exc:
        print(f"spa: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpaError as exc:
        print(f"spa: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"spa: i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
