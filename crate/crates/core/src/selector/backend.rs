//! Pool backends. Both keep the per-trigger pools of informed samples behind
//! the same interface; one in memory, one as append-only local files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::PathBuf;

use super::{PoolEntry, SelectorError};

pub trait PoolBackend: Send {
    /// Appends entries to the pool of `trigger`.
    fn append(&mut self, trigger: u32, entries: &[PoolEntry]) -> Result<(), SelectorError>;
    /// Entries of the pools `first..=last`, tagged with their trigger id, in
    /// insertion order.
    fn window(&self, first: u32, last: u32) -> Result<Vec<(PoolEntry, u32)>, SelectorError>;
    fn pool_len(&self, trigger: u32) -> usize;
}

/// Indexed in-memory table.
#[derive(Debug, Default)]
pub struct InMemoryBackend {
    pools: Vec<Vec<PoolEntry>>,
}

impl PoolBackend for InMemoryBackend {
    fn append(&mut self, trigger: u32, entries: &[PoolEntry]) -> Result<(), SelectorError> {
        let t = trigger as usize;
        if self.pools.len() <= t {
            self.pools.resize_with(t + 1, Vec::new);
        }
        self.pools[t].extend_from_slice(entries);
        Ok(())
    }

    fn window(&self, first: u32, last: u32) -> Result<Vec<(PoolEntry, u32)>, SelectorError> {
        let mut out = Vec::new();
        for t in first..=last {
            if let Some(pool) = self.pools.get(t as usize) {
                out.extend(pool.iter().map(|e| (*e, t)));
            }
        }
        Ok(out)
    }

    fn pool_len(&self, trigger: u32) -> usize {
        self.pools.get(trigger as usize).map_or(0, Vec::len)
    }
}

const RECORD: usize = 24;

/// Append-only binary pool files, `pool_<trigger>.bin`, each a sequence of
/// (key u64, timestamp i64, label i64) little-endian records.
#[derive(Debug)]
pub struct LocalBinaryBackend {
    dir: PathBuf,
    lens: Vec<usize>,
}

impl LocalBinaryBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, SelectorError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| SelectorError::Io { path: dir.clone(), source })?;
        Ok(Self { dir, lens: Vec::new() })
    }

    fn path(&self, trigger: u32) -> PathBuf {
        self.dir.join(format!("pool_{trigger}.bin"))
    }
}

impl PoolBackend for LocalBinaryBackend {
    fn append(&mut self, trigger: u32, entries: &[PoolEntry]) -> Result<(), SelectorError> {
        let path = self.path(trigger);
        let io = |source| SelectorError::Io { path: path.clone(), source };
        let f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let mut w = BufWriter::new(f);
        for e in entries {
            let mut rec = [0u8; RECORD];
            rec[..8].copy_from_slice(&e.key.to_le_bytes());
            rec[8..16].copy_from_slice(&e.timestamp.to_le_bytes());
            rec[16..].copy_from_slice(&e.label.to_le_bytes());
            w.write_all(&rec).map_err(io)?;
        }
        w.flush().map_err(io)?;
        let t = trigger as usize;
        if self.lens.len() <= t {
            self.lens.resize(t + 1, 0);
        }
        self.lens[t] += entries.len();
        Ok(())
    }

    fn window(&self, first: u32, last: u32) -> Result<Vec<(PoolEntry, u32)>, SelectorError> {
        let mut out = Vec::new();
        for t in first..=last {
            if self.pool_len(t) == 0 {
                continue;
            }
            let path = self.path(t);
            let mut bytes = Vec::new();
            File::open(&path)
                .and_then(|mut f| f.read_to_end(&mut bytes))
                .map_err(|source| SelectorError::Io { path: path.clone(), source })?;
            for rec in bytes.chunks_exact(RECORD) {
                let word = |i: usize| u64::from_le_bytes(rec[i..i + 8].try_into().unwrap());
                out.push((PoolEntry { key: word(0), timestamp: word(8) as i64, label: word(16) as i64 }, t));
            }
        }
        Ok(out)
    }

    fn pool_len(&self, trigger: u32) -> usize {
        self.lens.get(trigger as usize).copied().unwrap_or(0)
    }
}
