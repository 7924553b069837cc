//! Drift detection: embedding-space MMD between a reference window and the
//! current window, turned into trigger decisions by a fixed threshold or by
//! the score's rank within recent history (AutoDrift).

mod detector;
mod pca;

pub use detector::{DriftDetector, DriftEvaluation};
pub use pca::{pca_fit_project, Pca};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{sq_dist, Matrix};
use crate::trainer::ReferenceLearner;

#[derive(Debug, Error, PartialEq)]
pub enum DriftError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("window too small: {0} rows, need at least 2")]
    WindowTooSmall(usize),
    #[error("rank {achieved} is below the requested {requested} dimensions")]
    Rank { achieved: usize, requested: usize },
    #[error("invalid drift config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Threshold { threshold: f64 },
    Percentile { history_len: usize, percentile: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSpec {
    Samples(usize),
    /// Samples with timestamp in `(latest − span, latest]`.
    TimeSpan(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub detection_interval: usize,
    pub window: WindowSpec,
    pub bandwidth: Bandwidth,
    pub decision: Decision,
    pub use_pca: bool,
    pub pca_dims: usize,
}

impl DriftConfig {
    pub fn validate(&self) -> Result<(), DriftError> {
        let bad = |m: &str| Err(DriftError::InvalidConfig(m.into()));
        if self.detection_interval == 0 {
            return bad("detection_interval must be >= 1");
        }
        match self.window {
            WindowSpec::Samples(n) if n < 2 => return bad("window must hold at least 2 samples"),
            WindowSpec::TimeSpan(s) if s <= 0 => return bad("window time span must be positive"),
            _ => {}
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return bad("kernel bandwidth must be positive");
            }
        }
        match self.decision {
            Decision::Threshold { threshold } if !threshold.is_finite() => return bad("threshold must be finite"),
            Decision::Percentile { history_len, percentile } => {
                if history_len == 0 {
                    return bad("history_len must be >= 1");
                }
                if !(percentile > 0.0 && percentile < 1.0) {
                    return bad("percentile must lie in (0,1)");
                }
            }
            _ => {}
        }
        if self.use_pca && self.pca_dims == 0 {
            return bad("pca_dims must be >= 1");
        }
        Ok(())
    }
}

/// Pre-softmax logits of `model`, or the features themselves when no model
/// has been trained yet.
pub fn embed(model: Option<&ReferenceLearner>, features: &Matrix) -> Result<Matrix, DriftError> {
    match model {
        None => Ok(features.clone()),
        Some(m) if m.feature_dim() != features.cols() => {
            Err(DriftError::Dimension { expected: m.feature_dim(), got: features.cols() })
        }
        Some(m) => Ok(m.logits_matrix(features)),
    }
}

/// Median of all pairwise distances within the rows of `x` and `y`; 1 when
/// that median is 0.
pub fn median_bandwidth(x: &Matrix, y: &Matrix) -> f64 {
    let rows: Vec<&[f64]> = x.iter_rows().chain(y.iter_rows()).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_unstable_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn mean_kernel(a: &Matrix, b: &Matrix, gamma: f64) -> f64 {
    let mut s = 0.0;
    for ra in a.iter_rows() {
        for rb in b.iter_rows() {
            s += (-gamma * sq_dist(ra, rb)).exp();
        }
    }
    s / (a.rows() * b.rows()) as f64
}

fn canonical(m: &Matrix) -> Matrix {
    let mut rows: Vec<&[f64]> = m.iter_rows().collect();
    rows.sort_by(|a, b| a.iter().zip(*b).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    Matrix::from_rows(&rows)
}

/// Biased MMD² estimate with a Gaussian kernel, clamped at 0.
pub fn mmd2(x: &Matrix, y: &Matrix, bandwidth: Bandwidth) -> Result<f64, DriftError> {
    for m in [x, y] {
        if m.rows() < 2 {
            return Err(DriftError::WindowTooSmall(m.rows()));
        }
    }
    if x.cols() != y.cols() {
        return Err(DriftError::Dimension { expected: x.cols(), got: y.cols() });
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::MedianHeuristic => median_bandwidth(x, y),
    };
    let gamma = 1.0 / (2.0 * h * h);
    // a canonical row order makes the sums independent of input order
    let (x, y) = (&canonical(x), &canonical(y));
    let v = mean_kernel(x, x, gamma) + mean_kernel(y, y, gamma) - 2.0 * mean_kernel(x, y, gamma);
    Ok(v.max(0.0))
}

/// Decision state: the bounded score history used by the percentile rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionState {
    pub history: VecDeque<f64>,
}

impl DecisionState {
    pub fn decide(&mut self, score: f64, decision: &Decision) -> bool {
        match *decision {
            Decision::Threshold { threshold } => score > threshold,
            Decision::Percentile { history_len, percentile } => {
                let fire = self.history.len() >= history_len && score > percentile_threshold(&self.history, percentile);
                self.history.push_back(score);
                while self.history.len() > history_len {
                    self.history.pop_front();
                }
                fire
            }
        }
    }
}

/// Value at index `ceil((1−p)(n−1))` of the ascending history.
pub fn percentile_threshold(history: &VecDeque<f64>, percentile: f64) -> f64 {
    let mut sorted: Vec<f64> = history.iter().copied().collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    // the epsilon keeps exact products like 0.9·10 from rounding up
    let idx = (((1.0 - percentile) * (n - 1) as f64) - 1e-9).ceil().max(0.0) as usize;
    sorted[idx.min(n - 1)]
}
