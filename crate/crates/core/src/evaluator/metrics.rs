use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvaluationInterval};
use crate::matrix::Matrix;
use crate::trainer::ReferenceLearner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    TopKAccuracy { k: usize },
    WeightedF1,
}

impl Metric {
    /// Identifier used in report file names.
    pub fn id(&self) -> String {
        match self {
            Self::Accuracy => "accuracy".into(),
            Self::TopKAccuracy { k } => format!("top{k}_accuracy"),
            Self::WeightedF1 => "weighted_f1".into(),
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<(), EvalError> {
        match *self {
            Self::TopKAccuracy { k } if k == 0 || k > num_classes => {
                Err(EvalError::InvalidMetric(format!("top-k with k={k} needs 1 <= k <= {num_classes}")))
            }
            _ => Ok(()),
        }
    }
}

/// Evaluation split, sorted by timestamp.
#[derive(Debug, Clone)]
pub struct EvalSet {
    timestamps: Vec<i64>,
    features: Matrix,
    labels: Vec<i64>,
}

impl EvalSet {
    pub fn new(timestamps: Vec<i64>, features: Matrix, labels: Vec<i64>) -> Result<Self, EvalError> {
        if timestamps.len() != features.rows() || labels.len() != features.rows() {
            return Err(EvalError::Dimension("timestamps, features and labels differ in length".into()));
        }
        let mut order: Vec<usize> = (0..timestamps.len()).collect();
        order.sort_by_key(|&i| (timestamps[i], i));
        Ok(Self {
            timestamps: order.iter().map(|&i| timestamps[i]).collect(),
            features: features.select_rows(&order),
            labels: order.iter().map(|&i| labels[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Index range of the samples inside `iv`.
    pub fn range(&self, iv: &EvaluationInterval) -> std::ops::Range<usize> {
        let lo = self.timestamps.partition_point(|&t| t < iv.start);
        let hi = if iv.closed {
            self.timestamps.partition_point(|&t| t <= iv.end)
        } else {
            self.timestamps.partition_point(|&t| t < iv.end)
        };
        lo..hi.max(lo)
    }
}

/// Classes ranked by logit, ties to the lower class id.
fn ranking(logits: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx
}

fn score_rows(logits: &Matrix, labels: &[i64], rows: std::ops::Range<usize>, metric: Metric) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let classes = logits.cols();
    match metric {
        Metric::Accuracy => {
            let hits = rows.filter(|&i| ranking(logits.row(i))[0] as i64 == labels[i]).count();
            Some(hits as f64 / n)
        }
        Metric::TopKAccuracy { k } => {
            let hits = rows.filter(|&i| ranking(logits.row(i))[..k.min(classes)].iter().any(|&c| c as i64 == labels[i])).count();
            Some(hits as f64 / n)
        }
        Metric::WeightedF1 => {
            let mut tp = vec![0usize; classes];
            let mut predicted = vec![0usize; classes];
            let mut support = vec![0usize; classes];
            for i in rows {
                let p = ranking(logits.row(i))[0];
                predicted[p] += 1;
                if let Ok(y) = usize::try_from(labels[i]) {
                    if y < classes {
                        support[y] += 1;
                        if p == y {
                            tp[y] += 1;
                        }
                    }
                }
            }
            let total: usize = support.iter().sum();
            if total == 0 {
                return Some(0.0);
            }
            let f1: f64 = (0..classes)
                .filter(|&c| support[c] > 0)
                .map(|c| {
                    // F1 = 2·tp / (predicted + support)
                    let f = 2.0 * tp[c] as f64 / (predicted[c] + support[c]) as f64;
                    f * support[c] as f64
                })
                .sum();
            Some(f1 / total as f64)
        }
    }
}

/// Score of one model on the samples of one interval; `None` when the
/// interval holds no samples.
pub fn evaluate_model(model: &ReferenceLearner, iv: &EvaluationInterval, data: &EvalSet, metric: Metric) -> Option<f64> {
    let rows = data.range(iv);
    let sub = data.features.select_rows(&rows.clone().collect::<Vec<_>>());
    let logits = model.logits_matrix(&sub);
    score_rows(&logits, &data.labels[rows.clone()], 0..rows.len(), metric)
}

/// Scores of every model on every interval; `None` cells are masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMatrix {
    pub metric: Metric,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl EvaluationMatrix {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn get(&self, model: usize, interval: usize) -> Option<f64> {
        self.cells[model][interval]
    }
}

pub fn build_matrix(
    models: &[ReferenceLearner],
    intervals: &[EvaluationInterval],
    data: &EvalSet,
    metric: Metric,
) -> Result<EvaluationMatrix, EvalError> {
    for m in models {
        metric.validate(m.num_classes())?;
        if m.feature_dim() != data.features.cols() {
            return Err(EvalError::Dimension(format!(
                "model expects {} features, eval split has {}",
                m.feature_dim(),
                data.features.cols()
            )));
        }
    }
    let ranges: Vec<_> = intervals.iter().map(|iv| data.range(iv)).collect();
    let cells = models
        .par_iter()
        .map(|m| {
            let logits = m.logits_matrix(&data.features);
            ranges.iter().map(|r| score_rows(&logits, &data.labels, r.clone(), metric)).collect()
        })
        .collect();
    Ok(EvaluationMatrix { metric, cells })
}
