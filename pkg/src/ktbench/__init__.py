"""Knowledge-tracing models and a benchmark harness.

Predicts per-step student response correctness with naive baselines, a
per-skill knowledge-tracing HMM, count-feature logistic regression, desk-scale
recurrent and attention models, and a language-model prompting pathway, all
evaluated with a shared seven-metric report.
"""

from .baselines import MeanModel, Prediction, fit_mean, predict_mean, predict_nap, predict_nap_skills
from .bkt import BktModel, BktParams, BktState, EmConfig, bkt_predict, bkt_predict_sequence, bkt_update, fit_bkt
from .dataset import (
    ColumnMap,
    Dataset,
    FilterReport,
    InteractionRecord,
    SplitSpec,
    StudentSequence,
    apply_split,
    build_dataset,
    filter_degenerate_students,
    generate_synthetic,
    load_interactions,
    read_split_file,
    write_interactions,
)
from .errors import ConfigError, DataError, KtbenchError, ModelError
from .features import (
    FeatureConfig,
    FeatureSpace,
    FeatureVector,
    HistoryFeatures,
    best_lr_vector,
    history_features,
    iter_history_features,
)
from .harness import (
    BackendSpec,
    ExperimentConfig,
    ModelSpec,
    ResultRow,
    ResultsTable,
    config_hash,
    emit_table,
    run_experiment,
)
from .logreg import LrConfig, LrModel, fit_best_lr, lr_gradient, lr_predict, lr_predict_sequence
from .metrics import (
    ConfusionCounts,
    MetricReport,
    UndefinedMetricError,
    auc,
    binarize,
    classification_metrics,
    confusion,
    metric_report,
    rmse,
)

__version__ = "0.1.0"
