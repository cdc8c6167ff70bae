"""Least-ambiguous multi-label classification from single-positive labels.

Train a sigmoid MLP with assume-negative style losses, calibrate one score
threshold per class on a fully labelled calibration split, and keep only the
label predictions that clear their class threshold.
"""

from .calibrate import (
    ACCEPT_ALL,
    FilteredPrediction,
    ThresholdVector,
    calibrate,
    calibrate_scores,
    collect_scores,
    filter_predictions,
    masked_scores,
    quantile_threshold,
)
from .data import (
    MultiLabelDataset,
    SinglePositiveView,
    SplitSpec,
    generate_synthetic,
    load_dataset,
    project_single_positive,
    save_dataset,
    split,
)
from .harness import (
    EvalReport,
    ExperimentConfig,
    SweepReport,
    SyntheticSpec,
    emit_report,
    load_report,
    run_experiment,
    sweep_calibration_size,
)
from .metrics import MetricValues, average_precision, coverage_error, evaluate, ranking_loss
from .nn import AdamState, LossKind, MlpModel, forward, init_mlp, loss_an, loss_bce, loss_wan, train

__version__ = "0.1.0"
