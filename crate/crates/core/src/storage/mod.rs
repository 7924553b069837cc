//! Sample storage: file registration, the key index, parallel key-based
//! retrieval, and timestamp-ordered replay.

mod format;
mod retrieval;
mod stream;
mod wrapper;

pub use format::{read_mdsf, write_mdsf, MdsfHeader, MdsfRecords, MdsfWriter, LABEL_BYTES, MDSF_HEADER_LEN, MDSF_MAGIC, MDSF_VERSION};
pub use retrieval::{FetchOptions, FetchedSample, ResponseBuffer, DEFAULT_BUFFER_BYTES};
pub use stream::{SplitScheme, StreamBatch, StreamItem};

use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Key = u64;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: parse error at byte {offset}: {reason}")]
    Parse { path: PathBuf, offset: u64, reason: String },
    #[error("{0} is already registered")]
    DuplicateFile(PathBuf),
    #[error("unknown key {0}")]
    UnknownKey(Key),
    #[error("invalid file spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("timestamp offsets: expected {expected}, got {got}")]
    TimestampCount { expected: usize, got: usize },
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

/// How samples are laid out inside one file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "wrapper_kind", rename_all = "snake_case")]
pub enum FileRecordSpec {
    /// `MDSF` file of fixed-size records.
    BinaryFixedRecord { record_bytes: u32 },
    /// UTF-8 CSV; one sample per row.
    Csv { label_column: usize, has_header: bool },
    /// The whole file is one payload; label comes from registration.
    SingleSample { label: i64 },
}

impl FileRecordSpec {
    pub fn validate(&self) -> Result<(), StorageError> {
        match self {
            Self::BinaryFixedRecord { record_bytes } if *record_bytes < LABEL_BYTES + 1 => Err(
                StorageError::InvalidSpec(format!("record_bytes must be >= 9, got {record_bytes}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Location and metadata of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleIndexEntry {
    pub key: Key,
    pub file_id: u32,
    /// Start of the payload (binary), the row (CSV) or 0 (single sample).
    pub byte_offset: u64,
    /// Length of the byte span at `byte_offset`.
    pub length: u32,
    pub label: i64,
    pub timestamp: i64,
}

const ENTRY_BYTES: usize = 40;

impl SampleIndexEntry {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.key.to_le_bytes());
        out.extend_from_slice(&self.file_id.to_le_bytes());
        out.extend_from_slice(&self.byte_offset.to_le_bytes());
        out.extend_from_slice(&self.length.to_le_bytes());
        out.extend_from_slice(&self.label.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
    }

    fn decode(b: &[u8]) -> Self {
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        Self {
            key: u64_at(0),
            file_id: u32_at(8),
            byte_offset: u64_at(12),
            length: u32_at(20),
            label: u64_at(24) as i64,
            timestamp: u64_at(32) as i64,
        }
    }
}

/// A fully materialized sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub key: Key,
    pub timestamp: i64,
    pub label: i64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisteredFile {
    pub path: PathBuf,
    pub spec: FileRecordSpec,
    pub first_key: Key,
    pub count: u64,
}

#[derive(Serialize, Deserialize)]
struct Catalog {
    version: u32,
    files: Vec<RegisteredFile>,
}

const CATALOG_FILE: &str = "catalog.json";
const INDEX_FILE: &str = "index.bin";

/// The sample store. Keys are dense and equal to the position in `entries`,
/// so lookup is a bounds check plus an array access.
#[derive(Debug, Default)]
pub struct SampleStore {
    files: Vec<RegisteredFile>,
    by_path: HashMap<PathBuf, u32>,
    entries: Vec<SampleIndexEntry>,
    file_opens: AtomicU64,
}

impl SampleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn files(&self) -> &[RegisteredFile] {
        &self.files
    }

    pub fn entry(&self, key: Key) -> Result<&SampleIndexEntry, StorageError> {
        usize::try_from(key)
            .ok()
            .and_then(|i| self.entries.get(i))
            .ok_or(StorageError::UnknownKey(key))
    }

    pub fn entries(&self) -> &[SampleIndexEntry] {
        &self.entries
    }

    pub fn keys(&self) -> Range<Key> {
        0..self.entries.len() as Key
    }

    /// Number of file handles opened by retrieval so far.
    pub fn file_open_count(&self) -> u64 {
        self.file_opens.load(Ordering::Relaxed)
    }

    pub(crate) fn note_open(&self) {
        self.file_opens.fetch_add(1, Ordering::Relaxed);
    }

    /// Registers every sample of `path` and returns the newly assigned keys.
    ///
    /// Timestamps are `base_timestamp`, plus `per_sample_offsets[i]` for the
    /// i-th sample when offsets are given.
    pub fn register_file(
        &mut self,
        path: &Path,
        spec: FileRecordSpec,
        base_timestamp: i64,
        per_sample_offsets: Option<&[i64]>,
    ) -> Result<Range<Key>, StorageError> {
        spec.validate()?;
        let canonical = fs::canonicalize(path).map_err(io_err(path))?;
        if self.by_path.contains_key(&canonical) {
            return Err(StorageError::DuplicateFile(canonical));
        }
        let file_id = u32::try_from(self.files.len())
            .map_err(|_| StorageError::InvalidArgument("too many files".into()))?;
        let scanned = wrapper::scan(&canonical, &spec)?;
        if let Some(offsets) = per_sample_offsets {
            if offsets.len() != scanned.len() {
                return Err(StorageError::TimestampCount { expected: scanned.len(), got: offsets.len() });
            }
        }
        let first_key = self.entries.len() as Key;
        self.entries.reserve(scanned.len());
        for (i, s) in scanned.iter().enumerate() {
            let timestamp = base_timestamp + per_sample_offsets.map_or(0, |o| o[i]);
            self.entries.push(SampleIndexEntry {
                key: first_key + i as Key,
                file_id,
                byte_offset: s.offset,
                length: s.length,
                label: s.label,
                timestamp,
            });
        }
        let count = scanned.len() as u64;
        self.by_path.insert(canonical.clone(), file_id);
        self.files.push(RegisteredFile { path: canonical, spec, first_key, count });
        Ok(first_key..first_key + count)
    }

    /// Reads one payload directly, without grouping.
    pub fn read_sample(&self, key: Key) -> Result<Sample, StorageError> {
        let e = *self.entry(key)?;
        let file = &self.files[e.file_id as usize];
        let mut f = fs::File::open(&file.path).map_err(io_err(&file.path))?;
        self.note_open();
        let payload = wrapper::read_payload(&mut f, &file.path, &file.spec, &e)?;
        Ok(Sample { key, timestamp: e.timestamp, label: e.label, payload })
    }

    /// Persists catalog and index into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StorageError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let catalog = Catalog { version: 1, files: self.files.clone() };
        let json = serde_json::to_vec_pretty(&catalog).expect("catalog serializes");
        let cat_path = dir.join(CATALOG_FILE);
        fs::write(&cat_path, json).map_err(io_err(&cat_path))?;
        let mut buf = Vec::with_capacity(8 + self.entries.len() * ENTRY_BYTES);
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            e.encode(&mut buf);
        }
        let idx_path = dir.join(INDEX_FILE);
        let mut f = fs::File::create(&idx_path).map_err(io_err(&idx_path))?;
        f.write_all(&buf).map_err(io_err(&idx_path))?;
        Ok(())
    }

    pub fn is_store_dir(dir: &Path) -> bool {
        dir.join(CATALOG_FILE).is_file() && dir.join(INDEX_FILE).is_file()
    }

    /// Loads a store written by [`SampleStore::save`].
    pub fn load(dir: &Path) -> Result<Self, StorageError> {
        let cat_path = dir.join(CATALOG_FILE);
        let raw = fs::read(&cat_path).map_err(io_err(&cat_path))?;
        let catalog: Catalog =
            serde_json::from_slice(&raw).map_err(|e| StorageError::CorruptIndex(e.to_string()))?;
        let idx_path = dir.join(INDEX_FILE);
        let mut bytes = Vec::new();
        fs::File::open(&idx_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(&idx_path))?;
        if bytes.len() < 8 {
            return Err(StorageError::CorruptIndex("index shorter than its header".into()));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        if bytes.len() != 8 + n * ENTRY_BYTES {
            return Err(StorageError::CorruptIndex(format!("index length {} for {n} entries", bytes.len())));
        }
        let entries: Vec<SampleIndexEntry> = bytes[8..].chunks_exact(ENTRY_BYTES).map(SampleIndexEntry::decode).collect();
        for (i, e) in entries.iter().enumerate() {
            if e.key != i as Key || e.file_id as usize >= catalog.files.len() {
                return Err(StorageError::CorruptIndex(format!("entry {i} is inconsistent")));
            }
        }
        let by_path = catalog.files.iter().enumerate().map(|(i, f)| (f.path.clone(), i as u32)).collect();
        Ok(Self { files: catalog.files, by_path, entries, file_opens: AtomicU64::new(0) })
    }
}
