use serde::{Deserialize, Serialize};

use crate::matrix::{dot, Matrix};

/// Multinomial logistic regression: `softmax(W·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLearner {
    num_classes: usize,
    feature_dim: usize,
    /// `num_classes × feature_dim`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ReferenceLearner {
    /// Fresh initialization: all zeros.
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Self { num_classes, feature_dim, weights: vec![0.0; num_classes * feature_dim], bias: vec![0.0; num_classes] }
    }

    pub fn from_parts(num_classes: usize, feature_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weights.len(), num_classes * feature_dim);
        assert_eq!(bias.len(), num_classes);
        Self { num_classes, feature_dim, weights, bias }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Parameters as a `[classes, features + 1]` row-major tensor with the
    /// bias in the last column.
    pub fn to_tensor(&self) -> (Vec<u32>, Vec<f64>) {
        let mut data = Vec::with_capacity(self.num_classes * (self.feature_dim + 1));
        for c in 0..self.num_classes {
            data.extend_from_slice(&self.weights[c * self.feature_dim..(c + 1) * self.feature_dim]);
            data.push(self.bias[c]);
        }
        (vec![self.num_classes as u32, self.feature_dim as u32 + 1], data)
    }

    pub fn from_tensor(shape: &[u32], data: &[f64]) -> Option<Self> {
        let [classes, cols] = *shape else { return None };
        let (classes, cols) = (classes as usize, cols as usize);
        if cols == 0 || data.len() != classes * cols {
            return None;
        }
        let fd = cols - 1;
        let mut weights = Vec::with_capacity(classes * fd);
        let mut bias = Vec::with_capacity(classes);
        for row in data.chunks_exact(cols) {
            weights.extend_from_slice(&row[..fd]);
            bias.push(row[fd]);
        }
        Some(Self { num_classes: classes, feature_dim: fd, weights, bias })
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.feature_dim);
        (0..self.num_classes)
            .map(|c| dot(&self.weights[c * self.feature_dim..(c + 1) * self.feature_dim], x) + self.bias[c])
            .collect()
    }

    /// Logits for every row of `features`.
    pub fn logits_matrix(&self, features: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(features.rows(), self.num_classes);
        for (i, x) in features.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.logits(x));
        }
        out
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Most probable class; ties go to the lower class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Adds `scale · g` to the parameters, where `g` is laid out like
    /// `(weights, bias)`.
    pub fn apply_step(&mut self, grad_w: &[f64], grad_b: &[f64], scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(grad_w) {
            *w += scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(grad_b) {
            *b += scale * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
