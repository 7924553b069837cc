//! Data selection: per-trigger pools of informed samples, window and
//! presampling policies, and persistence of the resulting trigger training set.

mod backend;
mod presample;
mod tss;

pub use backend::{InMemoryBackend, LocalBinaryBackend, PoolBackend};
pub use presample::{balanced_quotas, presample, Candidate, Presampling};
pub use tss::{
    mdts_len, partition_file_name, read_mdts, read_mdts_range, write_mdts, write_trigger_set, TriggerSetHandle,
    WeightedKey, MDTS_MAGIC, MDTS_VERSION,
};

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::storage::{Key, StreamItem};

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error("key {0} was already informed")]
    DuplicateKey(Key),
    #[error("empty_trigger: trigger {0} has no samples in its window")]
    EmptyTrigger(u32),
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("{what} index {index} out of range (< {bound})")]
    OutOfRange { what: &'static str, index: usize, bound: usize },
    #[error("no trigger set for trigger {0}")]
    UnknownTrigger(u32),
    #[error("malformed trigger-sample file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// A sample as seen by the selector.
pub type PoolEntry = StreamItem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// How many earlier trigger pools join the window; `None` means all.
    pub tail_triggers: Option<u32>,
    pub presampling: Presampling,
    pub presampling_ratio: f64,
    /// Triggers (counted from the first) that skip presampling.
    pub warmup_triggers: u32,
    pub partition_size: usize,
    pub writer_threads: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            tail_triggers: None,
            presampling: Presampling::None,
            presampling_ratio: 1.0,
            warmup_triggers: 0,
            partition_size: 10_000,
            writer_threads: 1,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectorError> {
        if !(self.presampling_ratio > 0.0 && self.presampling_ratio <= 1.0) {
            return Err(SelectorError::InvalidConfig(format!("presampling_ratio {} not in (0,1]", self.presampling_ratio)));
        }
        if self.partition_size == 0 || self.writer_threads == 0 {
            return Err(SelectorError::InvalidConfig("partition_size and writer_threads must be positive".into()));
        }
        Ok(())
    }
}

/// Selection state of one pipeline.
pub struct SelectorState {
    backend: Box<dyn PoolBackend>,
    trigger: u32,
    seen: HashSet<Key>,
    class_counts: BTreeMap<i64, u64>,
    tss_dir: PathBuf,
}

impl SelectorState {
    pub fn new(backend: Box<dyn PoolBackend>, tss_dir: impl Into<PathBuf>) -> Self {
        Self { backend, trigger: 0, seen: HashSet::new(), class_counts: BTreeMap::new(), tss_dir: tss_dir.into() }
    }

    pub fn in_memory(tss_dir: impl Into<PathBuf>) -> Self {
        Self::new(Box::<InMemoryBackend>::default(), tss_dir)
    }

    /// Index of the trigger whose pool is currently open.
    pub fn current_trigger(&self) -> u32 {
        self.trigger
    }

    pub fn informed(&self) -> usize {
        self.seen.len()
    }

    pub fn class_count(&self, label: i64) -> u64 {
        self.class_counts.get(&label).copied().unwrap_or(0)
    }

    pub fn pool_len(&self, trigger: u32) -> usize {
        self.backend.pool_len(trigger)
    }

    pub fn tss_dir(&self) -> &Path {
        &self.tss_dir
    }

    /// Adds samples to the open pool. The batch is rejected as a whole if any
    /// key was informed before or occurs twice.
    pub fn inform_samples(&mut self, batch: &[PoolEntry]) -> Result<(), SelectorError> {
        let mut fresh = HashSet::with_capacity(batch.len());
        for e in batch {
            if self.seen.contains(&e.key) || !fresh.insert(e.key) {
                return Err(SelectorError::DuplicateKey(e.key));
            }
        }
        self.backend.append(self.trigger, batch)?;
        self.seen.extend(fresh);
        for e in batch {
            *self.class_counts.entry(e.label).or_default() += 1;
        }
        Ok(())
    }

    /// First trigger pool inside the window of the current trigger.
    pub fn window_start(&self, config: &SelectionConfig) -> u32 {
        match config.tail_triggers {
            None => 0,
            Some(tail) => self.trigger.saturating_sub(tail),
        }
    }

    /// Window candidates for the current trigger.
    pub fn window(&self, config: &SelectionConfig) -> Result<Vec<Candidate>, SelectorError> {
        Ok(self
            .backend
            .window(self.window_start(config), self.trigger)?
            .into_iter()
            .map(|(e, t)| Candidate { key: e.key, label: e.label, trigger_id: t })
            .collect())
    }

    /// Closes the open pool, selects the trigger training set and persists it.
    /// On error the pool stays open.
    pub fn inform_trigger(&mut self, config: &SelectionConfig) -> Result<TriggerSetHandle, SelectorError> {
        config.validate()?;
        let window = self.window(config)?;
        if window.is_empty() {
            return Err(SelectorError::EmptyTrigger(self.trigger));
        }
        let selected = if self.trigger < config.warmup_triggers {
            presample(&window, Presampling::None, 1.0, 0)?
        } else {
            let s = seed::mix(config.seed, &[u64::from(self.trigger)]);
            presample(&window, config.presampling, config.presampling_ratio, s)?
        };
        let handle =
            write_trigger_set(&self.tss_dir, self.trigger, &selected, config.partition_size, config.writer_threads)?;
        self.trigger += 1;
        Ok(handle)
    }
}
