use serde::{Deserialize, Serialize};

use super::{EvalError, EvaluationInterval, EvaluationMatrix, IntervalSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeVariant {
    CurrentlyActive,
    CurrentlyTrained,
}

impl CompositeVariant {
    pub fn id(self) -> &'static str {
        match self {
            Self::CurrentlyActive => "currently_active",
            Self::CurrentlyTrained => "currently_trained",
        }
    }
}

/// Which model counts as "currently trained" before any model finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedTrained {
    #[default]
    First,
    Last,
}

/// Maps every interval to a model index. The active model is the last one
/// with `t_end <= anchor`; the trained model is the one after it (clamped to
/// the last model).
pub fn composite_mapping(
    model_ends: &[i64],
    intervals: &[EvaluationInterval],
    variant: CompositeVariant,
    undefined: UndefinedTrained,
) -> Result<Vec<Option<usize>>, EvalError> {
    if model_ends.is_empty() {
        return Err(EvalError::NoModels);
    }
    if let Some(i) = model_ends.windows(2).position(|w| w[1] < w[0]) {
        return Err(EvalError::Unordered(i + 1));
    }
    let last = model_ends.len() - 1;
    Ok(intervals
        .iter()
        .map(|iv| {
            let finished = model_ends.partition_point(|&t| t <= iv.anchor);
            let active = finished.checked_sub(1);
            match variant {
                CompositeVariant::CurrentlyActive => active,
                CompositeVariant::CurrentlyTrained => Some(match active {
                    Some(i) => (i + 1).min(last),
                    None if undefined == UndefinedTrained::First => 0,
                    None => last,
                }),
            }
        })
        .collect())
}

/// `Λ[j] = matrix[mapping[j]][j]`; `None` where the mapping is undefined or
/// the cell is masked.
pub fn composite_series(matrix: &EvaluationMatrix, mapping: &[Option<usize>]) -> Result<Vec<Option<f64>>, EvalError> {
    if mapping.len() != matrix.cols() {
        return Err(EvalError::Dimension(format!("{} intervals mapped, matrix has {}", mapping.len(), matrix.cols())));
    }
    mapping
        .iter()
        .enumerate()
        .map(|(j, m)| match m {
            None => Ok(None),
            Some(i) if *i < matrix.rows() => Ok(matrix.get(*i, j)),
            Some(i) => Err(EvalError::Dimension(format!("model {i} not in matrix"))),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkipPolicy {
    pub skip_gaps: bool,
    /// Drop every entry before this interval index.
    pub cutoff: Option<usize>,
}

/// Mean of the retained entries of `Λ`.
pub fn pipeline_score(series: &[Option<f64>], policy: SkipPolicy) -> Result<f64, EvalError> {
    let start = policy.cutoff.unwrap_or(0);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (j, v) in series.iter().enumerate().skip(start) {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None if policy.skip_gaps => {}
            None => return Err(EvalError::Gap(j)),
        }
    }
    if n == 0 {
        return Err(EvalError::AllSkipped);
    }
    Ok(sum / n as f64)
}

/// First interval index at which every mapping is defined.
pub fn first_common_index(mappings: &[&[Option<usize>]]) -> Option<usize> {
    let len = mappings.iter().map(|m| m.len()).min()?;
    (0..len).find(|&j| mappings.iter().all(|m| m[j].is_some()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePoint {
    pub pipeline: String,
    pub score: f64,
    pub cost: f64,
    pub intervals: IntervalSpec,
    /// Identifies the dataset and evaluation split.
    pub eval_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub pipeline: String,
    pub score: f64,
    pub cost: f64,
    pub pareto: bool,
}

/// One point per pipeline, sorted by cost (then score descending, then id);
/// a point is Pareto-optimal unless another has no higher cost, no lower
/// score and is strictly better in one of them.
pub fn feasible_set(points: &[PipelinePoint]) -> Result<Vec<FeasiblePoint>, EvalError> {
    if let Some(first) = points.first() {
        for p in &points[1..] {
            if p.intervals != first.intervals {
                return Err(EvalError::Mismatch(format!("{} and {} use different intervals", first.pipeline, p.pipeline)));
            }
            if p.eval_fingerprint != first.eval_fingerprint {
                return Err(EvalError::Mismatch(format!("{} and {} use different eval splits", first.pipeline, p.pipeline)));
            }
        }
    }
    let mut out: Vec<FeasiblePoint> = points
        .iter()
        .map(|p| {
            let dominated = points.iter().any(|q| {
                q.cost <= p.cost && q.score >= p.score && (q.cost < p.cost || q.score > p.score)
            });
            FeasiblePoint { pipeline: p.pipeline.clone(), score: p.score, cost: p.cost, pareto: !dominated }
        })
        .collect();
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(b.score.total_cmp(&a.score)).then(a.pipeline.cmp(&b.pipeline)));
    Ok(out)
}
