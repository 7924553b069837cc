//! Experiment-mode replay and the train/evaluation split.

use serde::{Deserialize, Serialize};

use super::{Key, SampleStore, StorageError};
use crate::seed::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamItem {
    pub key: Key,
    pub timestamp: i64,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamBatch {
    pub items: Vec<StreamItem>,
    /// Largest timestamp in the batch.
    pub watermark: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    HashModulo,
    EveryKth,
}

impl SampleStore {
    /// All samples ordered by `(timestamp, key)`.
    pub fn timestamp_order(&self) -> Vec<StreamItem> {
        let mut items: Vec<StreamItem> = self
            .entries
            .iter()
            .map(|e| StreamItem { key: e.key, timestamp: e.timestamp, label: e.label })
            .collect();
        items.sort_by_key(|i| (i.timestamp, i.key));
        items
    }

    /// Replays the whole store in timestamp order.
    pub fn replay(&self, batch_size: usize) -> Result<Vec<StreamBatch>, StorageError> {
        let keys: Vec<Key> = self.keys().collect();
        self.replay_keys(&keys, batch_size)
    }

    /// Replays a subset of the store (e.g. the training split).
    pub fn replay_keys(&self, keys: &[Key], batch_size: usize) -> Result<Vec<StreamBatch>, StorageError> {
        if batch_size == 0 {
            return Err(StorageError::InvalidArgument("batch_size must be positive".into()));
        }
        if self.is_empty() {
            return Err(StorageError::InvalidArgument("replay of an empty store".into()));
        }
        let mut items = keys
            .iter()
            .map(|&k| self.entry(k).map(|e| StreamItem { key: k, timestamp: e.timestamp, label: e.label }))
            .collect::<Result<Vec<_>, _>>()?;
        items.sort_by_key(|i| (i.timestamp, i.key));
        Ok(items
            .chunks(batch_size)
            .map(|c| StreamBatch { watermark: c.last().map_or(i64::MIN, |i| i.timestamp), items: c.to_vec() })
            .collect())
    }

    /// Splits all keys into `(train, eval)`, both ascending.
    pub fn split_stream(
        &self,
        eval_fraction: f64,
        scheme: SplitScheme,
        seed: u64,
    ) -> Result<(Vec<Key>, Vec<Key>), StorageError> {
        if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
            return Err(StorageError::InvalidArgument(format!("eval_fraction {eval_fraction} not in (0,1)")));
        }
        if self.is_empty() {
            return Err(StorageError::InvalidArgument("split of an empty store".into()));
        }
        let mut train = Vec::new();
        let mut eval = Vec::new();
        match scheme {
            SplitScheme::HashModulo => {
                let salt = splitmix64(seed);
                for k in self.keys() {
                    // top 53 bits as a uniform in [0,1)
                    let u = (splitmix64(k ^ salt) >> 11) as f64 / (1u64 << 53) as f64;
                    if u < eval_fraction { eval.push(k) } else { train.push(k) }
                }
            }
            SplitScheme::EveryKth => {
                // position i (timestamp order) is evaluation data iff the running
                // quota floor(i·f) increases at i
                for (i, item) in self.timestamp_order().iter().enumerate() {
                    let before = (i as f64 * eval_fraction).floor();
                    let after = ((i + 1) as f64 * eval_fraction).floor();
                    if after > before { eval.push(item.key) } else { train.push(item.key) }
                }
                train.sort_unstable();
                eval.sort_unstable();
            }
        }
        Ok((train, eval))
    }
}
