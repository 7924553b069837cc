//! Per-sample scores from the learner's forward pass.

use serde::{Deserialize, Serialize};

use super::learner::{softmax, ReferenceLearner};
use super::TrainError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Cross-entropy; higher is more valuable.
    Loss,
    /// Norm of the last-layer gradient; higher is more valuable.
    GradNorm,
    /// Top-1 minus top-2 probability; lower is more valuable.
    Margin,
    /// Max-class probability; lower is more valuable.
    LeastConfidence,
    /// Predictive entropy; higher is more valuable.
    Entropy,
}

pub(crate) fn check_label(label: i64, classes: usize) -> Result<usize, TrainError> {
    usize::try_from(label)
        .ok()
        .filter(|&l| l < classes)
        .ok_or(TrainError::InvalidLabel { label, classes })
}

/// Cross-entropy of one sample given its class probabilities.
pub(crate) fn cross_entropy(p: &[f64], y: usize) -> f64 {
    -p[y].ln()
}

pub fn compute_scores(
    learner: &ReferenceLearner,
    features: &Matrix,
    labels: &[i64],
    kind: ScoreKind,
) -> Result<Vec<f64>, TrainError> {
    if features.cols() != learner.feature_dim() {
        return Err(TrainError::Dimension { expected: learner.feature_dim(), got: features.cols() });
    }
    let needs_labels = matches!(kind, ScoreKind::Loss | ScoreKind::GradNorm);
    if needs_labels && labels.len() != features.rows() {
        return Err(TrainError::Dimension { expected: features.rows(), got: labels.len() });
    }
    let mut out = Vec::with_capacity(features.rows());
    for (i, x) in features.iter_rows().enumerate() {
        let p = softmax(&learner.logits(x));
        let score = match kind {
            ScoreKind::Loss => {
                let y = check_label(labels[i], learner.num_classes())?;
                // clamp keeps the score finite when p[y] underflows
                cross_entropy(&p, y).min(f64::MAX)
            }
            ScoreKind::GradNorm => {
                let y = check_label(labels[i], learner.num_classes())?;
                // ‖(p − e_y) ⊗ [x; 1]‖ = ‖p − e_y‖ · ‖[x; 1]‖
                let residual: f64 =
                    p.iter().enumerate().map(|(c, &pc)| (pc - f64::from(u8::from(c == y))).powi(2)).sum();
                let input: f64 = x.iter().map(|v| v * v).sum::<f64>() + 1.0;
                (residual * input).sqrt()
            }
            ScoreKind::Margin => {
                let (first, second) = top_two(&p);
                first - second
            }
            ScoreKind::LeastConfidence => top_two(&p).0,
            ScoreKind::Entropy => -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>(),
        };
        out.push(score);
    }
    Ok(out)
}

fn top_two(p: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if second == f64::NEG_INFINITY {
        second = 0.0;
    }
    (first, second)
}
