//! Evaluation over time: interval generation, per-model per-interval metric
//! matrices, composite models, pipeline scores and cost–accuracy fronts.

mod composite;
mod intervals;
mod metrics;

pub use composite::{
    composite_mapping, composite_series, feasible_set, first_common_index, pipeline_score, CompositeVariant,
    FeasiblePoint, PipelinePoint, SkipPolicy, UndefinedTrained,
};
pub use intervals::{generate_intervals, Anchor, EvaluationInterval, IntervalKind, IntervalSpec};
pub use metrics::{build_matrix, evaluate_model, EvalSet, EvaluationMatrix, Metric};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid interval spec: {0}")]
    InvalidSpec(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("no models to map")]
    NoModels,
    #[error("models are not ordered by end timestamp at index {0}")]
    Unordered(usize),
    #[error("every entry of the composite series was skipped")]
    AllSkipped,
    #[error("gap at interval {0} and gaps are not skipped")]
    Gap(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("runs do not share an evaluation setup: {0}")]
    Mismatch(String),
}
