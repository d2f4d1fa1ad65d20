"""Structural-expansion detection in probability-map time series.

The pipeline: ingest raw multi-band scene stacks, derive per-pixel
structure probabilities, fit a before/after footprint model by maximum
likelihood, and rank locations by the delta log-likelihood between the
unrestricted fit and a no-expansion fit.  Scalar changepoint baselines and
a full evaluation harness round out the package.
"""

from .scene_store import (
    Frame,
    SceneSeries,
    SceneFormatError,
    clip_center,
    filter_frames,
    missing_fraction,
    read_scene_stack,
    write_scene_stack,
)
from .spectral import (
    ProbMap,
    ProbMapSeries,
    cafo_pixel_count,
    confidences_to_probs,
    mean_ndvi,
    ndvi,
    pseudo_segment,
    read_prob_stack,
    segment_series,
    smooth,
    write_prob_stack,
)
from .footprint_model import (
    FootprintModel,
    ModelGradient,
    footprint_at,
    grad_log_likelihood,
    log_likelihood,
    sigmoid_transition,
)
from .detector import (
    DetectionReport,
    FitConfig,
    FitResult,
    NullDistribution,
    calibrate_null,
    detect,
    fit_static,
    fit_unrestricted,
    rank_locations,
    test_statistic,
)
from .baselines import (
    BaselineResult,
    NormalInverseGamma,
    ScalarSeries,
    bocpd,
    ndvi_series,
    series_from_probmaps,
    trend_break,
)
from .evaluation import (
    EvalReport,
    LabeledScore,
    best_balanced_accuracy,
    best_f1,
    cost_curve,
    evaluate_scores,
    expected_random_cost,
    expected_random_false_positives,
    monte_carlo_random_cost,
    roc_auc,
    size_correlation,
)
from .synthgen import (
    GroundTruth,
    SyntheticSpec,
    benchmark_specs,
    generate_benchmark,
    generate_location,
)

__version__ = "0.1.0"

__all__ = [
    "Frame", "SceneSeries", "SceneFormatError", "clip_center", "filter_frames",
    "missing_fraction", "read_scene_stack", "write_scene_stack",
    "ProbMap", "ProbMapSeries", "cafo_pixel_count", "confidences_to_probs",
    "mean_ndvi", "ndvi", "pseudo_segment", "read_prob_stack", "segment_series",
    "smooth", "write_prob_stack",
    "FootprintModel", "ModelGradient", "footprint_at", "grad_log_likelihood",
    "log_likelihood", "sigmoid_transition",
    "DetectionReport", "FitConfig", "FitResult", "NullDistribution",
    "calibrate_null", "detect", "fit_static", "fit_unrestricted",
    "rank_locations", "test_statistic",
    "BaselineResult", "NormalInverseGamma", "ScalarSeries", "bocpd",
    "ndvi_series", "series_from_probmaps", "trend_break",
    "EvalReport", "LabeledScore", "best_balanced_accuracy", "best_f1",
    "cost_curve", "evaluate_scores", "expected_random_cost",
    "expected_random_false_positives", "monte_carlo_random_cost", "roc_auc",
    "size_correlation",
    "GroundTruth", "SyntheticSpec", "benchmark_specs", "generate_benchmark",
    "generate_location",
    "__version__",
]
