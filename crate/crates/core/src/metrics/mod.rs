//! Evaluation metrics.

pub mod ap;
pub mod dependency;
pub mod multilabel;

pub use ap::average_precision;
pub use dependency::{
    aggregate, binarize, condition_mask, pair_ap, pair_counts, pair_precision_recall_f1,
    per_class_metrics, ClassMetrics, EvalInstance, EvalVideo, MetricReport, PairCounts,
    PairMetrics, TauAggregate, DEFAULT_THRESHOLD,
};
pub use multilabel::{f_map, standard_suite, FMap, SampleSet, StandardSuite};
