use super::DriftError;
use crate::matrix::{dot, Matrix};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;

/// Principal axes fitted by deflated power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One unit-length component per row, by decreasing eigenvalue.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn fit(x: &Matrix, dims: usize) -> Result<Self, DriftError> {
        let (n, d) = (x.rows(), x.cols());
        if n < 2 {
            return Err(DriftError::WindowTooSmall(n));
        }
        if dims == 0 || dims > d {
            return Err(DriftError::Dimension { expected: d, got: dims });
        }
        let mut mean = vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = Matrix::zeros(d, d);
        for r in x.iter_rows() {
            let c: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for j in 0..d {
                    cov.set(i, j, cov.get(i, j) + c[i] * c[j]);
                }
            }
        }
        cov.as_mut_slice().iter_mut().for_each(|v| *v /= (n - 1) as f64);

        let scale = (0..d).map(|i| cov.get(i, i)).sum::<f64>().max(f64::MIN_POSITIVE);
        let mut components = Vec::with_capacity(dims * d);
        let mut eigenvalues = Vec::with_capacity(dims);
        for k in 0..dims {
            let (lambda, v) = power_iteration(&cov, k);
            if lambda <= 1e-12 * scale {
                return Err(DriftError::Rank { achieved: k, requested: dims });
            }
            for i in 0..d {
                for j in 0..d {
                    cov.set(i, j, cov.get(i, j) - lambda * v[i] * v[j]);
                }
            }
            components.extend_from_slice(&v);
            eigenvalues.push(lambda);
        }
        Ok(Self { mean, components: Matrix::from_vec(dims, d, components), eigenvalues })
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix, DriftError> {
        if x.cols() != self.mean.len() {
            return Err(DriftError::Dimension { expected: self.mean.len(), got: x.cols() });
        }
        let k = self.components.rows();
        let mut out = Matrix::zeros(x.rows(), k);
        for (i, r) in x.iter_rows().enumerate() {
            let c: Vec<f64> = r.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
            for (j, comp) in self.components.iter_rows().enumerate() {
                out.set(i, j, dot(&c, comp));
            }
        }
        Ok(out)
    }
}

/// Dominant eigenpair of a symmetric PSD matrix. The start vector is the
/// `seed_axis`-th unit vector plus a small spread, so it is never orthogonal
/// to every remaining eigenvector by construction.
fn power_iteration(a: &Matrix, seed_axis: usize) -> (f64, Vec<f64>) {
    let d = a.rows();
    let mut v: Vec<f64> = (0..d).map(|i| if i == seed_axis % d { 1.0 } else { 1.0 / (d as f64 + i as f64 + 1.0) }).collect();
    normalize(&mut v);
    for _ in 0..MAX_ITERATIONS {
        let mut w = vec![0.0; d];
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = dot(a.row(i), &v);
        }
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return (0.0, v);
        }
        let delta: f64 = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = w;
        if delta < TOLERANCE {
            break;
        }
    }
    // Rayleigh quotient is more accurate than the last norm
    let av: Vec<f64> = (0..d).map(|i| dot(a.row(i), &v)).collect();
    let lambda = dot(&v, &av).max(0.0);
    let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (lambda, v)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Centers `x` and projects it onto its top `dims` principal axes.
pub fn pca_fit_project(x: &Matrix, dims: usize) -> Result<Matrix, DriftError> {
    Pca::fit(x, dims)?.project(x)
}
