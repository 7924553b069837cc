//! Synthetic datasets: Gaussian class streams with abrupt mean shifts, and
//! random fixed-size records for throughput measurements.

use std::io;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::storage::{write_mdsf, FileRecordSpec, MdsfWriter, SampleStore, StorageError, LABEL_BYTES};

/// From sample `at` on, every sample is translated by `offset` along the
/// class axis (replacing any earlier shift).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub at: usize,
    pub offset: f64,
}

/// Classes are Gaussians with identity covariance scaled by `noise`, centred
/// on evenly spaced points of the diagonal direction `(1,…,1)/√dim`, spanning
/// `[-separation, separation]`. Sample `i` has timestamp `i * timestamp_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStream {
    pub samples: usize,
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub noise: f64,
    pub shifts: Vec<Shift>,
    pub timestamp_step: i64,
    pub seed: u64,
}

impl Default for GaussianStream {
    fn default() -> Self {
        Self { samples: 1000, dim: 8, classes: 2, separation: 3.0, noise: 1.0, shifts: Vec::new(), timestamp_step: 1, seed: 0 }
    }
}

impl GaussianStream {
    pub fn record_bytes(&self) -> u32 {
        (LABEL_BYTES as usize + 4 * self.dim) as u32
    }

    pub fn offset_at(&self, i: usize) -> f64 {
        self.shifts.iter().filter(|s| s.at <= i).max_by_key(|s| s.at).map_or(0.0, |s| s.offset)
    }

    fn class_center(&self, c: usize) -> f64 {
        if self.classes == 1 {
            0.0
        } else {
            self.separation * (2.0 * c as f64 / (self.classes - 1) as f64 - 1.0)
        }
    }

    /// `(label, features)` for every sample, in timestamp order.
    pub fn generate(&self) -> Vec<(i64, Vec<f32>)> {
        let mut rng = seed::rng(seed::sub_seed(self.seed, "synth"));
        let axis = 1.0 / (self.dim as f64).sqrt();
        (0..self.samples)
            .map(|i| {
                let y = rng.gen_range(0..self.classes);
                let centre = (self.class_center(y) + self.offset_at(i)) * axis;
                let x = (0..self.dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (centre + self.noise * z) as f32
                    })
                    .collect();
                (y as i64, x)
            })
            .collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        (0..self.samples as i64).map(|i| i * self.timestamp_step).collect()
    }

    /// Writes the stream as one `MDSF` file of f32 LE payloads.
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let rows = self.generate();
        let payloads: Vec<(i64, Vec<u8>)> =
            rows.into_iter().map(|(y, x)| (y, x.iter().flat_map(|v| v.to_le_bytes()).collect())).collect();
        write_mdsf(path, self.record_bytes(), payloads.iter().map(|(y, p)| (*y, p.as_slice())))
    }

    /// Writes the stream to `path` and registers it in a fresh store.
    pub fn materialize(&self, path: &Path) -> Result<SampleStore, StorageError> {
        self.write(path).map_err(|source| StorageError::Io { path: path.to_path_buf(), source })?;
        let mut store = SampleStore::new();
        store.register_file(
            path,
            FileRecordSpec::BinaryFixedRecord { record_bytes: self.record_bytes() },
            0,
            Some(&self.timestamps()),
        )?;
        Ok(store)
    }
}

/// `n` records of `record_bytes` bytes with random labels; payloads are f32
/// LE values in `[-1, 1)` (any trailing bytes are random).
pub fn write_random_records(path: &Path, n: usize, record_bytes: u32, seed: u64) -> io::Result<()> {
    let mut rng = seed::rng(seed);
    let mut w = MdsfWriter::create(path, record_bytes)?;
    let mut payload = vec![0u8; (record_bytes - LABEL_BYTES) as usize];
    for _ in 0..n {
        rng.fill(payload.as_mut_slice());
        for c in payload.chunks_exact_mut(4) {
            c.copy_from_slice(&rng.gen_range(-1.0f32..1.0).to_le_bytes());
        }
        w.push(rng.gen_range(0..10), &payload)?;
    }
    w.finish()?;
    Ok(())
}
