//! Training-throughput measurements for the data loader.
//!
//! A measurement trains the reference learner for one epoch over every
//! sample of the store and reports samples per second, timed from the start
//! of the loop to the last update. The sequential baseline reads the sample
//! files front to back without any key lookup and trains the same way.

use std::fs::File;
use std::io::{self, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::selector::{write_trigger_set, SelectorError};
use crate::share::balanced_share;
use crate::storage::{FileRecordSpec, Key, SampleStore, MDSF_HEADER_LEN};
use crate::trainer::{batch_gradient, BytesParser, F32LeParser, Loader, LoaderConfig, ReferenceLearner, TrainError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark needs a store of MDSF files only: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub workers: usize,
    pub prefetch_partitions: usize,
    pub parallel_requests: usize,
    pub storage_threads: usize,
    pub partition_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Keyed,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub point: BenchPoint,
    pub samples: usize,
    /// Throughput of each repetition.
    pub runs: Vec<f64>,
    pub samples_per_s: f64,
}

/// Shape of the learner trained during a measurement.
struct Workload {
    parser: Arc<F32LeParser>,
    classes: usize,
    record_bytes: u32,
}

fn workload(store: &SampleStore) -> Result<Workload, BenchError> {
    let mut record_bytes = None;
    for f in store.files() {
        match f.spec {
            FileRecordSpec::BinaryFixedRecord { record_bytes: rb } if record_bytes.is_none_or(|r| r == rb) => {
                record_bytes = Some(rb)
            }
            _ => return Err(BenchError::Unsupported(f.path.display().to_string())),
        }
    }
    let record_bytes = record_bytes.ok_or_else(|| BenchError::Unsupported("empty store".into()))?;
    let classes = store.entries().iter().map(|e| e.label).max().unwrap_or(0).max(1) as usize + 1;
    let dim = ((record_bytes - 8) / 4).max(1) as usize;
    Ok(Workload { parser: Arc::new(F32LeParser { dim }), classes, record_bytes })
}

fn step(learner: &mut ReferenceLearner, features: &Matrix, labels: &[i64], weights: &[f64]) -> Result<(), TrainError> {
    let classes = learner.num_classes() as i64;
    let labels: Vec<i64> = labels.iter().map(|l| l.rem_euclid(classes)).collect();
    let g = batch_gradient(learner, features, &labels, weights)?;
    learner.apply_step(&g.grad_w, &g.grad_b, -0.01);
    Ok(())
}

fn summarize(mode: BenchMode, point: BenchPoint, samples: usize, runs: Vec<f64>) -> BenchRow {
    let samples_per_s = runs.iter().sum::<f64>() / runs.len() as f64;
    BenchRow { mode, point, samples, runs, samples_per_s }
}

/// Key-based loading through trigger-set partitions.
pub fn bench_keyed(
    store: &Arc<SampleStore>,
    point: BenchPoint,
    batch_size: usize,
    repetitions: usize,
    work_dir: &Path,
) -> Result<BenchRow, BenchError> {
    let w = workload(store)?;
    let keys: Vec<(Key, f64)> = store.keys().map(|k| (k, 1.0)).collect();
    let tts = write_trigger_set(work_dir, 0, &keys, point.partition_size, 4)?;
    let config = LoaderConfig {
        num_workers: point.workers,
        prefetch_buffer_partitions: point.prefetch_partitions,
        parallel_prefetch_requests: point.parallel_requests,
        storage_threads: point.storage_threads,
        ..LoaderConfig::default()
    };
    let parser: Arc<dyn BytesParser> = w.parser.clone();
    let loader = Loader::new(Arc::clone(store), tts, config, batch_size, parser, None)?;
    let mut runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut learner = ReferenceLearner::zeros(w.classes, w.parser.dim);
        let started = Instant::now();
        let mut n = 0usize;
        for batch in loader.epoch(0) {
            let b = batch?;
            step(&mut learner, &b.features, &b.labels, &b.weights)?;
            n += b.len();
        }
        runs.push(n as f64 / started.elapsed().as_secs_f64());
    }
    Ok(summarize(BenchMode::Keyed, point, keys.len(), runs))
}

struct Chunk {
    features: Matrix,
    labels: Vec<i64>,
}

/// Reads records `range` of `path` in file order and sends batches.
fn read_sequential(
    path: &Path,
    record_bytes: u32,
    range: std::ops::Range<usize>,
    batch_size: usize,
    parser: &F32LeParser,
    tx: crossbeam_channel::Sender<Chunk>,
) -> io::Result<()> {
    let mut f = BufReader::with_capacity(1 << 20, File::open(path)?);
    f.seek(SeekFrom::Start(MDSF_HEADER_LEN + range.start as u64 * u64::from(record_bytes)))?;
    let mut record = vec![0u8; record_bytes as usize];
    let mut left = range.len();
    while left > 0 {
        let take = left.min(batch_size);
        let mut rows = Vec::with_capacity(take * parser.dim);
        let mut labels = Vec::with_capacity(take);
        for _ in 0..take {
            f.read_exact(&mut record)?;
            labels.push(i64::from_le_bytes(record[..8].try_into().unwrap()));
            rows.extend(parser.parse(&record[8..]).map_err(io::Error::other)?);
        }
        left -= take;
        if tx.send(Chunk { features: Matrix::from_vec(take, parser.dim, rows), labels }).is_err() {
            break;
        }
    }
    Ok(())
}

/// Sequential baseline: `workers` readers over contiguous record ranges of
/// each file, consumed round-robin.
pub fn bench_sequential(
    store: &SampleStore,
    workers: usize,
    batch_size: usize,
    repetitions: usize,
) -> Result<BenchRow, BenchError> {
    let w = workload(store)?;
    let workers = workers.max(1);
    let total = store.len();
    let mut runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut learner = ReferenceLearner::zeros(w.classes, w.parser.dim);
        let started = Instant::now();
        let mut n = 0usize;
        for file in store.files() {
            let count = file.count as usize;
            let parser = &*w.parser;
            let outcome = thread::scope(|scope| -> Result<(), BenchError> {
                let mut rxs = Vec::new();
                let mut handles = Vec::new();
                for t in 0..workers {
                    let (tx, rx) = bounded(2);
                    rxs.push(rx);
                    let range = balanced_share(count, workers, t);
                    let path = file.path.as_path();
                    let rb = w.record_bytes;
                    handles.push(scope.spawn(move || read_sequential(path, rb, range, batch_size, parser, tx)));
                }
                let mut live: Vec<_> = rxs.into_iter().collect();
                while !live.is_empty() {
                    live.retain(|rx| match rx.recv() {
                        Ok(c) => {
                            n += c.labels.len();
                            let ones = vec![1.0; c.labels.len()];
                            step(&mut learner, &c.features, &c.labels, &ones).is_ok()
                        }
                        Err(_) => false,
                    });
                }
                for h in handles {
                    h.join()
                        .expect("reader panicked")
                        .map_err(|source| BenchError::Io { path: file.path.clone(), source })?;
                }
                Ok(())
            });
            outcome?;
        }
        runs.push(n as f64 / started.elapsed().as_secs_f64());
    }
    let point = BenchPoint { workers, prefetch_partitions: 0, parallel_requests: 0, storage_threads: 0, partition_size: 0 };
    Ok(summarize(BenchMode::Sequential, point, total, runs))
}

pub const CSV_HEADER: &str = "mode,storage_threads,partition_size,workers,prefetch_partitions,parallel_requests,samples,run_1,run_2,run_3,samples_per_s";

pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<(), BenchError> {
    let io = |source| BenchError::Io { path: path.to_path_buf(), source };
    let mut out = io::BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for r in rows {
        let mode = match r.mode {
            BenchMode::Keyed => "keyed",
            BenchMode::Sequential => "sequential",
        };
        let runs: Vec<String> = (0..3).map(|i| r.runs.get(i).map_or(String::new(), |v| format!("{v:.1}"))).collect();
        let p = r.point;
        writeln!(
            out,
            "{mode},{},{},{},{},{},{},{},{:.1}",
            p.storage_threads,
            p.partition_size,
            p.workers,
            p.prefetch_partitions,
            p.parallel_requests,
            r.samples,
            runs.join(","),
            r.samples_per_s
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}
