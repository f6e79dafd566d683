"""Feature selection and classification toolkit for high-dimensional labeled
signal data, such as mass spectra.

The pipeline normalizes, smooths, and standardizes intensity matrices, picks
a sparse set of discriminating channels by maximizing the label correlation
over a combined l1/l2 constraint set, reduces each contiguous support run to
its strongest entry, and evaluates recovered supports by peak-level matching
and cross-validated classification. A synthetic generator with known ground
truth plus lasso and l1-SVM reference selectors support benchmarking.
"""

from .baselines import BaselineConfig, BaselineFit, l1_svm, lasso, run_baseline, tune_baseline
from .dataset import (FeatureVector, LabeledDataset, Spectrum, StandardizationStats,
                      load_dataset, load_feature_vector, save_dataset,
                      save_feature_vector, validate_dataset, validate_for_prediction)
from .errors import (DegenerateInputError, DegenerateObjectiveError, FoldDegenerateError,
                     MissingDataError, ParameterError, ParseError, PipelineOrderError,
                     PipelineStageError, SpaError, UndefinedMetricError)
from .evaluate import (ConfusionCounts, CVReport, LinearModel, balanced_accuracy,
                       cross_validate, make_selector, match_features, sensitivity,
                       specificity, train_linear_classifier)
from .preprocess import (GaussianKernel, PreprocessConfig, normalize_tic,
                         preprocess_pipeline, smooth_gaussian, standardize,
                         tophat_baseline, tophat_dataset)
from .selector import (SelectorConfig, SPAResult, TuningReport, correlation_vector,
                       hard_threshold, maximize_linear, onebit_select, project_support,
                       run_spa, soft_threshold, sparsify_components, tune_lambda,
                       tune_sparsity)
from .simulate import (GroundTruth, SimulationConfig, build_correlation, estimate_snr,
                       generate_dataset, load_ground_truth, make_peak_dictionary,
                       make_spiked_fixture, nominal_snr, save_ground_truth)

__version__ = "0.1.0"
