//! Trigger-sample storage: a trigger training set persisted as fixed-size
//! partitions of `(key, weight)` entries, each partition spread over one file
//! per writer thread.
//!
//! `MDTS` file layout: magic `MDTS`, version u32 LE, entry_count u32 LE, then
//! entry_count × (key u64 LE, weight f64 LE).

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SelectorError;
use crate::storage::Key;

pub const MDTS_MAGIC: [u8; 4] = *b"MDTS";
pub const MDTS_VERSION: u32 = 1;
const HEADER: u64 = 12;
const ENTRY: u64 = 16;

pub type WeightedKey = (Key, f64);

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SelectorError + '_ {
    move |source| SelectorError::Io { path: path.to_path_buf(), source }
}

pub fn write_mdts(path: &Path, entries: &[WeightedKey]) -> Result<(), SelectorError> {
    let count = u32::try_from(entries.len()).map_err(|_| SelectorError::Format("too many entries for one file".into()))?;
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    let mut write = || -> io::Result<()> {
        w.write_all(&MDTS_MAGIC)?;
        w.write_all(&MDTS_VERSION.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        for &(k, wt) in entries {
            w.write_all(&k.to_le_bytes())?;
            w.write_all(&wt.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(io_err(path))
}

fn read_header<R: Read>(r: &mut R, path: &Path) -> Result<u32, SelectorError> {
    let mut h = [0u8; HEADER as usize];
    r.read_exact(&mut h).map_err(io_err(path))?;
    if h[..4] != MDTS_MAGIC {
        return Err(SelectorError::Format(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
    if version != MDTS_VERSION {
        return Err(SelectorError::Format(format!("{}: unsupported version {version}", path.display())));
    }
    Ok(u32::from_le_bytes(h[8..12].try_into().unwrap()))
}

/// Entry count of an `MDTS` file, read from its header only.
pub fn mdts_len(path: &Path) -> Result<u32, SelectorError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    read_header(&mut f, path)
}

/// Reads `len` entries starting at entry `start`.
pub fn read_mdts_range(path: &Path, start: u32, len: u32) -> Result<Vec<WeightedKey>, SelectorError> {
    let mut f = BufReader::new(File::open(path).map_err(io_err(path))?);
    let count = read_header(&mut f, path)?;
    if u64::from(start) + u64::from(len) > u64::from(count) {
        return Err(SelectorError::Format(format!(
            "{}: range {start}+{len} exceeds {count} entries",
            path.display()
        )));
    }
    f.seek(SeekFrom::Start(HEADER + u64::from(start) * ENTRY)).map_err(io_err(path))?;
    let mut raw = vec![0u8; (u64::from(len) * ENTRY) as usize];
    f.read_exact(&mut raw).map_err(io_err(path))?;
    Ok(raw
        .chunks_exact(ENTRY as usize)
        .map(|c| {
            (u64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap()))
        })
        .collect())
}

pub fn read_mdts(path: &Path) -> Result<Vec<WeightedKey>, SelectorError> {
    let n = mdts_len(path)?;
    read_mdts_range(path, 0, n)
}

pub fn partition_file_name(trigger: u32, partition: usize, thread: usize) -> String {
    format!("trigger_{trigger}_partition_{partition}_{thread}.mdts")
}

/// Handle to a persisted trigger training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSetHandle {
    pub dir: PathBuf,
    pub trigger_id: u32,
    pub partition_size: usize,
    /// Entries per partition.
    pub partition_lens: Vec<usize>,
    /// Files per partition (one per writer thread that received entries).
    pub files_per_partition: Vec<usize>,
    pub total_count: usize,
}

impl TriggerSetHandle {
    pub fn num_partitions(&self) -> usize {
        self.partition_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_count == 0
    }

    fn files(&self, partition: usize) -> impl Iterator<Item = PathBuf> + '_ {
        (0..self.files_per_partition[partition]).map(move |t| self.dir.join(partition_file_name(self.trigger_id, partition, t)))
    }

    /// Rebuilds a handle from the files in `dir`.
    pub fn open(dir: &Path, trigger_id: u32) -> Result<Self, SelectorError> {
        let mut partition_lens = Vec::new();
        let mut files_per_partition = Vec::new();
        loop {
            let p = partition_lens.len();
            let mut files = 0;
            let mut len = 0usize;
            loop {
                let path = dir.join(partition_file_name(trigger_id, p, files));
                if !path.is_file() {
                    break;
                }
                len += mdts_len(&path)? as usize;
                files += 1;
            }
            if files == 0 {
                break;
            }
            partition_lens.push(len);
            files_per_partition.push(files);
        }
        if partition_lens.is_empty() {
            return Err(SelectorError::UnknownTrigger(trigger_id));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            trigger_id,
            partition_size: partition_lens[0],
            total_count: partition_lens.iter().sum(),
            partition_lens,
            files_per_partition,
        })
    }

    /// Reads a whole partition in persisted order.
    pub fn read_partition(&self, partition: usize) -> Result<Vec<WeightedKey>, SelectorError> {
        let len = *self.partition_lens.get(partition).ok_or(SelectorError::OutOfRange {
            what: "partition",
            index: partition,
            bound: self.num_partitions(),
        })?;
        let mut out = Vec::with_capacity(len);
        for path in self.files(partition) {
            out.extend(read_mdts(&path)?);
        }
        Ok(out)
    }

    pub fn read_all(&self) -> Result<Vec<WeightedKey>, SelectorError> {
        let mut out = Vec::with_capacity(self.total_count);
        for p in 0..self.num_partitions() {
            out.extend(self.read_partition(p)?);
        }
        Ok(out)
    }

    /// The contiguous slice of `partition` owned by `worker_id`. Shares differ
    /// in size by at most one; only the overlapping parts of each thread file
    /// are read.
    pub fn partition_share(
        &self,
        partition: usize,
        worker_id: usize,
        num_workers: usize,
    ) -> Result<Vec<WeightedKey>, SelectorError> {
        if partition >= self.num_partitions() {
            return Err(SelectorError::OutOfRange { what: "partition", index: partition, bound: self.num_partitions() });
        }
        if num_workers == 0 || worker_id >= num_workers {
            return Err(SelectorError::OutOfRange { what: "worker", index: worker_id, bound: num_workers });
        }
        let want = crate::share::balanced_share(self.partition_lens[partition], num_workers, worker_id);
        let mut out = Vec::with_capacity(want.len());
        let mut file_start = 0usize;
        for path in self.files(partition) {
            if file_start >= want.end {
                break;
            }
            let n = mdts_len(&path)? as usize;
            let file_end = file_start + n;
            let lo = want.start.max(file_start);
            let hi = want.end.min(file_end);
            if lo < hi {
                out.extend(read_mdts_range(&path, (lo - file_start) as u32, (hi - lo) as u32)?);
            }
            file_start = file_end;
        }
        Ok(out)
    }
}

/// Persists `entries` as partitions of `partition_size`; each partition is
/// written by up to `writer_threads` threads in parallel, one file each.
pub fn write_trigger_set(
    dir: &Path,
    trigger_id: u32,
    entries: &[WeightedKey],
    partition_size: usize,
    writer_threads: usize,
) -> Result<TriggerSetHandle, SelectorError> {
    if partition_size == 0 || writer_threads == 0 {
        return Err(SelectorError::InvalidConfig("partition_size and writer_threads must be positive".into()));
    }
    if let Some(&(k, w)) = entries.iter().find(|(_, w)| !w.is_finite() || *w <= 0.0) {
        return Err(SelectorError::InvalidConfig(format!("key {k} has non-positive weight {w}")));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut partition_lens = Vec::new();
    let mut files_per_partition = Vec::new();
    for (p, part) in entries.chunks(partition_size).enumerate() {
        let threads = writer_threads.min(part.len()).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let slice = &part[crate::share::balanced_share(part.len(), threads, t)];
                    let path = dir.join(partition_file_name(trigger_id, p, t));
                    s.spawn(move || write_mdts(&path, slice))
                })
                .collect();
            handles.into_iter().try_for_each(|h| h.join().expect("writer thread panicked"))
        })?;
        partition_lens.push(part.len());
        files_per_partition.push(threads);
    }
    Ok(TriggerSetHandle {
        dir: dir.to_path_buf(),
        trigger_id,
        partition_size,
        partition_lens,
        files_per_partition,
        total_count: entries.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mdts_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.mdts");
        write_mdts(&p, &[(1, 0.5), (u64::MAX, 2.0)]).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"MDTS");
        assert_eq!(&bytes[4..12], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &0.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 32);
        assert_eq!(read_mdts_range(&p, 1, 1).unwrap(), vec![(u64::MAX, 2.0)]);
        assert!(read_mdts_range(&p, 1, 2).is_err());
    }

    #[test]
    fn thousand_keys_make_ten_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<WeightedKey> = (0..1000).map(|k| (k, 1.0)).collect();
        let h = write_trigger_set(dir.path(), 3, &entries, 100, 4).unwrap();
        assert_eq!(h.num_partitions(), 10);
        assert!(h.partition_lens.iter().all(|&l| l == 100));
        assert!(dir.path().join("trigger_3_partition_9_3.mdts").is_file());
        assert_eq!(TriggerSetHandle::open(dir.path(), 3).unwrap(), h);
        assert_eq!(h.read_all().unwrap(), entries);
    }

    #[test]
    fn shares_are_balanced_slices() {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<WeightedKey> = (0..10).map(|k| (k * 3, 1.0 + k as f64)).collect();
        let h = write_trigger_set(dir.path(), 0, &entries, 100, 1).unwrap();
        let shares: Vec<Vec<WeightedKey>> = (0..3).map(|w| h.partition_share(0, w, 3).unwrap()).collect();
        assert_eq!(shares.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(shares.concat(), entries);
        assert!(h.partition_share(1, 0, 3).is_err());
        assert!(h.partition_share(0, 3, 3).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_trigger_set(dir.path(), 0, &[(1, 0.0)], 10, 1).is_err());
        assert!(write_trigger_set(dir.path(), 0, &[(1, f64::NAN)], 10, 1).is_err());
    }
}
