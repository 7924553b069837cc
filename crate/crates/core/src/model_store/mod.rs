//! Model storage: every model is written either as a full `MDMW` snapshot or
//! as a delta against the previous model, and any model can be rebuilt
//! bit-exactly from its nearest full snapshot.

mod delta;
mod mdmw;

pub use delta::{apply_delta, make_delta, DeltaOperator};
pub use mdmw::{decode_mdmw, encode_mdmw, Weights, MDMW_MAGIC, MDMW_VERSION};

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Error)]
pub enum ModelStoreError {
    #[error("malformed weights at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("shape {got:?} does not match base shape {expected:?}")]
    ShapeMismatch { expected: Vec<u32>, got: Vec<u32> },
    #[error("checksum mismatch for model {id}: manifest {expected:016x}, file {actual:016x}")]
    Checksum { id: u64, expected: u64, actual: u64 },
    #[error("broken chain: {0}")]
    BrokenChain(String),
    #[error("unknown model {0}")]
    UnknownModel(u64),
    #[error("invalid storage policy: {0}")]
    InvalidPolicy(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ModelStoreError + '_ {
    move |source| ModelStoreError::Io { path: path.to_path_buf(), source }
}

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoragePolicy {
    /// Every `full_every`-th model is stored in full; 1 disables deltas.
    pub full_every: u32,
    pub operator: DeltaOperator,
}

impl Default for StoragePolicy {
    fn default() -> Self {
        Self { full_every: 1, operator: DeltaOperator::Xor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Full,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub id: u64,
    pub kind: ArtifactKind,
    pub base: Option<u64>,
    pub operator: Option<DeltaOperator>,
    pub file: String,
    pub checksum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<ModelArtifact>,
}

/// Append-only directory of model artifacts.
#[derive(Debug)]
pub struct ModelStore {
    dir: PathBuf,
    policy: StoragePolicy,
    manifest: Manifest,
    last: Option<Weights>,
}

impl ModelStore {
    /// Opens `dir`, creating it if needed and picking up an existing manifest.
    pub fn open(dir: &Path, policy: StoragePolicy) -> Result<Self, ModelStoreError> {
        if policy.full_every == 0 {
            return Err(ModelStoreError::InvalidPolicy("full_every must be >= 1".into()));
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(MANIFEST_FILE);
        let manifest = if path.is_file() {
            serde_json::from_slice(&fs::read(&path).map_err(io_err(&path))?)?
        } else {
            Manifest::default()
        };
        let mut store = Self { dir: dir.to_path_buf(), policy, manifest, last: None };
        if let Some(a) = store.manifest.artifacts.last() {
            store.last = Some(store.load(a.id)?);
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[ModelArtifact] {
        &self.manifest.artifacts
    }

    pub fn len(&self) -> usize {
        self.manifest.artifacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.artifacts.is_empty()
    }

    /// Stores the next model and returns its artifact entry.
    pub fn store(&mut self, weights: &Weights) -> Result<ModelArtifact, ModelStoreError> {
        weights.validate()?;
        let id = self.manifest.artifacts.len() as u64;
        let full = id.is_multiple_of(u64::from(self.policy.full_every));
        let (kind, base, operator, bytes, file) = if full {
            (ArtifactKind::Full, None, None, encode_mdmw(weights), format!("model_{id}.mdmw"))
        } else {
            let prev = self.last.as_ref().ok_or_else(|| ModelStoreError::BrokenChain("no base model cached".into()))?;
            let bytes = make_delta(prev, weights, self.policy.operator)?;
            (ArtifactKind::Delta, Some(id - 1), Some(self.policy.operator), bytes, format!("model_{id}.delta"))
        };
        let path = self.dir.join(&file);
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        let artifact = ModelArtifact { id, kind, base, operator, file, checksum: crc64(&bytes) };
        self.manifest.artifacts.push(artifact.clone());
        self.write_manifest()?;
        self.last = Some(weights.clone());
        Ok(artifact)
    }

    fn write_manifest(&self) -> Result<(), ModelStoreError> {
        let path = self.dir.join(MANIFEST_FILE);
        let tmp = self.dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&self.manifest)?).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn read_checked(&self, a: &ModelArtifact) -> Result<Vec<u8>, ModelStoreError> {
        let path = self.dir.join(&a.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let actual = crc64(&bytes);
        if actual != a.checksum {
            return Err(ModelStoreError::Checksum { id: a.id, expected: a.checksum, actual });
        }
        Ok(bytes)
    }

    /// Rebuilds model `id` by replaying deltas from its nearest full snapshot.
    pub fn load(&self, id: u64) -> Result<Weights, ModelStoreError> {
        let mut chain = Vec::new();
        let mut cur = id;
        loop {
            let a = self.manifest.artifacts.get(cur as usize).ok_or(ModelStoreError::UnknownModel(cur))?;
            chain.push(a);
            match (a.kind, a.base) {
                (ArtifactKind::Full, _) => break,
                (ArtifactKind::Delta, Some(b)) if b < cur => cur = b,
                (ArtifactKind::Delta, b) => {
                    return Err(ModelStoreError::BrokenChain(format!("model {cur} has invalid base {b:?}")))
                }
            }
        }
        let full = chain.pop().expect("chain ends at a full snapshot");
        let mut weights = decode_mdmw(&self.read_checked(full)?)?;
        while let Some(a) = chain.pop() {
            let op = a.operator.ok_or_else(|| ModelStoreError::BrokenChain(format!("delta {} has no operator", a.id)))?;
            weights = apply_delta(&weights, &self.read_checked(a)?, op)?;
        }
        Ok(weights)
    }
}
