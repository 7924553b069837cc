//! Prefetching data loader.
//!
//! Every worker owns an equal share of every partition of the trigger
//! training set. A worker keeps up to `prefetch_buffer_partitions` partitions
//! fetched or in flight, using `parallel_prefetch_requests` fetcher threads,
//! and turns payloads into batches as soon as they arrive (in partition
//! order). The consumer pulls batches from the workers round-robin.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::matrix::Matrix;
use crate::selector::{TriggerSetHandle, WeightedKey};
use crate::seed;
use crate::storage::{FetchOptions, FetchedSample, Key, SampleStore, DEFAULT_BUFFER_BYTES};

/// Turns payload bytes into a feature vector.
pub trait BytesParser: Send + Sync {
    fn feature_dim(&self) -> usize;
    fn parse(&self, payload: &[u8]) -> Result<Vec<f64>, String>;

    /// Appends the features of `payload` to `out`.
    fn parse_into(&self, payload: &[u8], out: &mut Vec<f64>) -> Result<(), String> {
        out.extend(self.parse(payload)?);
        Ok(())
    }
}

/// Little-endian `f32` vector of a fixed length.
#[derive(Debug, Clone, Copy)]
pub struct F32LeParser {
    pub dim: usize,
}

impl BytesParser for F32LeParser {
    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn parse(&self, payload: &[u8]) -> Result<Vec<f64>, String> {
        let mut out = Vec::with_capacity(self.dim);
        self.parse_into(payload, &mut out)?;
        Ok(out)
    }

    fn parse_into(&self, payload: &[u8], out: &mut Vec<f64>) -> Result<(), String> {
        if payload.len() < self.dim * 4 {
            return Err(format!("payload of {} bytes holds fewer than {} f32 values", payload.len(), self.dim));
        }
        out.extend(payload[..self.dim * 4].chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoaderConfig {
    pub num_workers: usize,
    pub prefetch_buffer_partitions: usize,
    pub parallel_prefetch_requests: usize,
    /// Threads the storage uses per request.
    pub storage_threads: usize,
    pub buffer_bytes: usize,
}

impl Default for LoaderConfig {
    fn default() -> Self {
        Self {
            num_workers: 1,
            prefetch_buffer_partitions: 1,
            parallel_prefetch_requests: 1,
            storage_threads: 1,
            buffer_bytes: DEFAULT_BUFFER_BYTES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub worker: usize,
    pub keys: Vec<Key>,
    pub features: Matrix,
    pub labels: Vec<i64>,
    pub weights: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Loader over one trigger training set.
#[derive(Clone)]
pub struct Loader {
    store: Arc<SampleStore>,
    tts: TriggerSetHandle,
    config: LoaderConfig,
    batch_size: usize,
    parser: Arc<dyn BytesParser>,
    shuffle_seed: Option<u64>,
}

impl Loader {
    pub fn new(
        store: Arc<SampleStore>,
        tts: TriggerSetHandle,
        config: LoaderConfig,
        batch_size: usize,
        parser: Arc<dyn BytesParser>,
        shuffle_seed: Option<u64>,
    ) -> Result<Self, TrainError> {
        if config.num_workers == 0 || batch_size == 0 || config.storage_threads == 0 || config.buffer_bytes == 0 {
            return Err(TrainError::InvalidConfig("loader counts must be positive".into()));
        }
        if config.prefetch_buffer_partitions > 0 && config.parallel_prefetch_requests == 0 {
            return Err(TrainError::InvalidConfig("parallel_prefetch_requests must be positive".into()));
        }
        Ok(Self { store, tts, config, batch_size, parser, shuffle_seed })
    }

    pub fn trigger_set(&self) -> &TriggerSetHandle {
        &self.tts
    }

    /// Partition visiting order for `epoch`.
    fn partition_order(&self, epoch: u32) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tts.num_partitions()).collect();
        if let Some(s) = self.shuffle_seed {
            order.shuffle(&mut seed::rng(seed::mix(s, &[u64::from(epoch)])));
        }
        order
    }

    /// Starts the worker threads for one pass over the data.
    pub fn epoch(&self, epoch: u32) -> LoaderStream {
        let order = Arc::new(self.partition_order(epoch));
        let receivers = (0..self.config.num_workers)
            .map(|w| {
                let (tx, rx) = bounded(2);
                let worker = Worker { loader: self.clone(), id: w, epoch, order: Arc::clone(&order), out: tx };
                thread::Builder::new()
                    .name(format!("loader-w{w}"))
                    .spawn(move || worker.run())
                    .expect("spawn loader worker");
                Some(rx)
            })
            .collect();
        LoaderStream { receivers, next: 0 }
    }
}

/// Round-robin stream of batches from all workers.
pub struct LoaderStream {
    receivers: Vec<Option<Receiver<Result<TrainingBatch, TrainError>>>>,
    next: usize,
}

impl Iterator for LoaderStream {
    type Item = Result<TrainingBatch, TrainError>;

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.receivers.len();
        for _ in 0..n {
            let w = self.next;
            self.next = (self.next + 1) % n;
            let Some(rx) = &self.receivers[w] else { continue };
            match rx.recv() {
                Ok(item) => return Some(item),
                Err(_) => self.receivers[w] = None,
            }
        }
        None
    }
}

enum Msg {
    Start { seq: usize, share: Vec<WeightedKey> },
    Data { seq: usize, samples: Vec<FetchedSample> },
    Failed { error: TrainError },
}

/// Reassembles one partition share in persisted order and releases the ready
/// prefix.
struct Assembly {
    share: Vec<WeightedKey>,
    slots: Vec<Option<FetchedSample>>,
    /// First unfilled position of each key; later duplicates chain through
    /// `next_dup`.
    positions: HashMap<Key, usize>,
    next_dup: Vec<usize>,
    emitted: usize,
    filled: usize,
}

impl Assembly {
    fn new(share: Vec<WeightedKey>) -> Self {
        let mut positions: HashMap<Key, usize> = HashMap::with_capacity(share.len());
        let mut next_dup = vec![usize::MAX; share.len()];
        for (i, (k, _)) in share.iter().enumerate().rev() {
            if let Some(later) = positions.insert(*k, i) {
                next_dup[i] = later;
            }
        }
        let slots = (0..share.len()).map(|_| None).collect();
        Self { share, slots, positions, next_dup, emitted: 0, filled: 0 }
    }

    fn insert(&mut self, s: FetchedSample) {
        let slot = self.positions.get_mut(&s.key).expect("storage returned an unrequested key");
        let i = *slot;
        assert!(i != usize::MAX, "storage returned key {} too often", s.key);
        *slot = self.next_dup[i];
        self.slots[i] = Some(s);
        self.filled += 1;
    }

    fn complete(&self) -> bool {
        self.filled == self.share.len()
    }

    fn take_ready(&mut self) -> Vec<(FetchedSample, f64)> {
        let mut out = Vec::new();
        while self.emitted < self.slots.len() {
            match self.slots[self.emitted].take() {
                Some(s) => {
                    out.push((s, self.share[self.emitted].1));
                    self.emitted += 1;
                }
                None => break,
            }
        }
        out
    }
}

struct BatchBuilder {
    worker: usize,
    size: usize,
    dim: usize,
    keys: Vec<Key>,
    features: Vec<f64>,
    labels: Vec<i64>,
    weights: Vec<f64>,
}

impl BatchBuilder {
    /// Call after the features of the sample were appended to `features`.
    fn push(&mut self, key: Key, label: i64, weight: f64) -> Option<TrainingBatch> {
        self.keys.push(key);
        self.labels.push(label);
        self.weights.push(weight);
        (self.keys.len() == self.size).then(|| self.flush())
    }

    fn flush(&mut self) -> TrainingBatch {
        let rows = self.keys.len();
        TrainingBatch {
            worker: self.worker,
            keys: std::mem::take(&mut self.keys),
            features: Matrix::from_vec(rows, self.dim, std::mem::take(&mut self.features)),
            labels: std::mem::take(&mut self.labels),
            weights: std::mem::take(&mut self.weights),
        }
    }
}

struct Worker {
    loader: Loader,
    id: usize,
    epoch: u32,
    order: Arc<Vec<usize>>,
    out: Sender<Result<TrainingBatch, TrainError>>,
}

impl Worker {
    fn run(self) {
        if let Err(e) = self.drive() {
            let _ = self.out.send(Err(e));
        }
    }

    fn fetch_options(&self) -> FetchOptions {
        FetchOptions { threads: self.loader.config.storage_threads, buffer_bytes: self.loader.config.buffer_bytes }
    }

    fn share(&self, seq: usize) -> Result<Vec<WeightedKey>, TrainError> {
        let p = self.order[seq];
        self.loader
            .tts
            .partition_share(p, self.id, self.loader.config.num_workers)
            .map_err(|e| TrainError::Loader { partition: p, reason: e.to_string() })
    }

    fn drive(&self) -> Result<(), TrainError> {
        let mut builder = BatchBuilder {
            worker: self.id,
            size: self.loader.batch_size,
            dim: self.loader.parser.feature_dim(),
            keys: Vec::new(),
            features: Vec::new(),
            labels: Vec::new(),
            weights: Vec::new(),
        };
        let alive = if self.loader.config.prefetch_buffer_partitions == 0 {
            self.drive_sync(&mut builder)?
        } else {
            self.drive_prefetch(&mut builder)?
        };
        if alive && !builder.keys.is_empty() {
            let _ = self.out.send(Ok(builder.flush()));
        }
        Ok(())
    }

    /// Emits samples; returns false once the consumer is gone.
    fn emit(&self, builder: &mut BatchBuilder, ready: Vec<(FetchedSample, f64)>, partition: usize) -> Result<bool, TrainError> {
        for (s, w) in ready {
            self.loader
                .parser
                .parse_into(&s.payload, &mut builder.features)
                .map_err(|reason| TrainError::Loader { partition, reason: format!("key {}: {reason}", s.key) })?;
            if let Some(batch) = builder.push(s.key, s.label, w) {
                if self.out.send(Ok(batch)).is_err() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn finish_partition(&self, builder: &mut BatchBuilder, mut asm: Assembly, seq: usize) -> Result<bool, TrainError> {
        let partition = self.order[seq];
        let mut ready = asm.take_ready();
        if let Some(s) = self.loader.shuffle_seed {
            let mut rng = seed::rng(seed::mix(s, &[u64::from(self.epoch), partition as u64, self.id as u64]));
            ready.shuffle(&mut rng);
        }
        self.emit(builder, ready, partition)
    }

    /// No prefetching: fetch a partition share only when the previous one is
    /// used up.
    fn drive_sync(&self, builder: &mut BatchBuilder) -> Result<bool, TrainError> {
        let streaming = self.loader.shuffle_seed.is_none();
        for seq in 0..self.order.len() {
            let partition = self.order[seq];
            let share = self.share(seq)?;
            let keys: Vec<Key> = share.iter().map(|e| e.0).collect();
            let mut asm = Assembly::new(share);
            let mut alive = true;
            let mut failure = None;
            self.loader
                .store
                .get_samples_by_keys(&keys, self.fetch_options(), |buf| {
                    if !alive || failure.is_some() {
                        return;
                    }
                    for s in buf.samples {
                        asm.insert(s);
                    }
                    if streaming {
                        match self.emit(builder, asm.take_ready(), partition) {
                            Ok(a) => alive = a,
                            Err(e) => failure = Some(e),
                        }
                    }
                })
                .map_err(|e| TrainError::Loader { partition, reason: e.to_string() })?;
            if let Some(e) = failure {
                return Err(e);
            }
            if !alive || !self.finish_partition(builder, asm, seq)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn drive_prefetch(&self, builder: &mut BatchBuilder) -> Result<bool, TrainError> {
        let total = self.order.len();
        let slots = self.loader.config.prefetch_buffer_partitions;
        let fetchers = self.loader.config.parallel_prefetch_requests.min(slots).min(total.max(1));
        let (permit_tx, permit_rx) = bounded::<()>(slots);
        let (data_tx, data_rx) = unbounded::<Msg>();
        let next_seq = Arc::new(AtomicUsize::new(0));

        thread::scope(|scope| {
            for _ in 0..fetchers {
                let permit_tx = permit_tx.clone();
                let data_tx = data_tx.clone();
                let next_seq = Arc::clone(&next_seq);
                scope.spawn(move || {
                    // a slot is reserved before a sequence number is taken, so
                    // the oldest unconsumed partition always holds a slot
                    while permit_tx.send(()).is_ok() {
                        let seq = next_seq.fetch_add(1, Ordering::SeqCst);
                        if seq >= total {
                            return;
                        }
                        let share = match self.share(seq) {
                            Ok(s) => s,
                            Err(error) => {
                                let _ = data_tx.send(Msg::Failed { error });
                                return;
                            }
                        };
                        let keys: Vec<Key> = share.iter().map(|e| e.0).collect();
                        if data_tx.send(Msg::Start { seq, share }).is_err() {
                            return;
                        }
                        let result = self.loader.store.get_samples_by_keys(&keys, self.fetch_options(), |buf| {
                            let _ = data_tx.send(Msg::Data { seq, samples: buf.samples });
                        });
                        if let Err(e) = result {
                            let error = TrainError::Loader { partition: self.order[seq], reason: e.to_string() };
                            let _ = data_tx.send(Msg::Failed { error });
                            return;
                        }
                    }
                });
            }
            drop(permit_tx);
            drop(data_tx);

            let result = self.consume(builder, &data_rx, &permit_rx, total);
            // unblock fetchers waiting on a slot or on the data channel
            drop(permit_rx);
            drop(data_rx);
            result
        })
    }

    fn consume(
        &self,
        builder: &mut BatchBuilder,
        data_rx: &Receiver<Msg>,
        permit_rx: &Receiver<()>,
        total: usize,
    ) -> Result<bool, TrainError> {
        let streaming = self.loader.shuffle_seed.is_none();
        let mut pending: HashMap<usize, Assembly> = HashMap::new();
        for seq in 0..total {
            let partition = self.order[seq];
            loop {
                if pending.get(&seq).is_some_and(Assembly::complete) {
                    break;
                }
                let msg = data_rx
                    .recv()
                    .map_err(|_| TrainError::Loader { partition, reason: "fetcher exited early".into() })?;
                match msg {
                    Msg::Start { seq: s, share } => {
                        pending.insert(s, Assembly::new(share));
                    }
                    Msg::Data { seq: s, samples } => {
                        let asm = pending.get_mut(&s).expect("data before start");
                        for sample in samples {
                            asm.insert(sample);
                        }
                    }
                    Msg::Failed { error, .. } => return Err(error),
                }
                if streaming {
                    if let Some(asm) = pending.get_mut(&seq) {
                        let ready = asm.take_ready();
                        if !self.emit(builder, ready, partition)? {
                            return Ok(false);
                        }
                    }
                }
            }
            let asm = pending.remove(&seq).expect("completed partition");
            if !self.finish_partition(builder, asm, seq)? {
                return Ok(false);
            }
            let _ = permit_rx.recv();
        }
        Ok(true)
    }
}
