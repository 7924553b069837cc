//! Key-based retrieval. A request is cut into contiguous thread shares; each
//! thread groups its share by file, opens every file once, reads the payloads
//! in offset order and emits a buffer whenever `buffer_bytes` is reached.

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};

use crossbeam_channel::bounded;

use super::wrapper::finish_payload;
use crate::share::balanced_share;
use super::{io_err, Key, SampleStore, StorageError};

pub const DEFAULT_BUFFER_BYTES: usize = 8 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FetchOptions {
    pub threads: usize,
    pub buffer_bytes: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self { threads: 1, buffer_bytes: DEFAULT_BUFFER_BYTES }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedSample {
    pub key: Key,
    pub label: i64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseBuffer {
    /// Index of the thread share that produced the buffer.
    pub share: usize,
    pub samples: Vec<FetchedSample>,
}

impl SampleStore {
    /// Streams the payloads of `keys` to `sink`, one [`ResponseBuffer`] at a
    /// time. Unknown keys fail the whole request before any I/O happens.
    pub fn get_samples_by_keys<F>(&self, keys: &[Key], opts: FetchOptions, mut sink: F) -> Result<(), StorageError>
    where
        F: FnMut(ResponseBuffer),
    {
        if opts.threads == 0 || opts.buffer_bytes == 0 {
            return Err(StorageError::InvalidArgument("threads and buffer_bytes must be positive".into()));
        }
        for &k in keys {
            self.entry(k)?;
        }
        if keys.is_empty() {
            return Ok(());
        }
        let threads = opts.threads.min(keys.len());
        if threads == 1 {
            return self.serve_share(keys, 0, opts.buffer_bytes, &mut |b| {
                sink(b);
                true
            });
        }
        let (tx, rx) = bounded::<ResponseBuffer>(threads * 2);
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let tx = tx.clone();
                    let share = &keys[balanced_share(keys.len(), threads, t)];
                    scope.spawn(move || self.serve_share(share, t, opts.buffer_bytes, &mut |b| tx.send(b).is_ok()))
                })
                .collect();
            drop(tx);
            for buffer in rx {
                sink(buffer);
            }
            handles
                .into_iter()
                .map(|h| h.join().expect("retrieval thread panicked"))
                .collect::<Result<Vec<()>, _>>()
                .map(|_| ())
        })
    }

    /// Convenience wrapper collecting every buffer.
    pub fn fetch_all(&self, keys: &[Key], opts: FetchOptions) -> Result<Vec<ResponseBuffer>, StorageError> {
        let mut out = Vec::new();
        self.get_samples_by_keys(keys, opts, |b| out.push(b))?;
        Ok(out)
    }

    /// Payloads of `keys` in request order.
    pub fn fetch_ordered(&self, keys: &[Key], opts: FetchOptions) -> Result<Vec<FetchedSample>, StorageError> {
        let mut slots: Vec<Option<FetchedSample>> = vec![None; keys.len()];
        let mut positions: std::collections::HashMap<Key, Vec<usize>> = std::collections::HashMap::new();
        for (i, &k) in keys.iter().enumerate().rev() {
            positions.entry(k).or_default().push(i);
        }
        self.get_samples_by_keys(keys, opts, |b| {
            for s in b.samples {
                let i = positions.get_mut(&s.key).and_then(Vec::pop).expect("store returned an unrequested key");
                slots[i] = Some(s);
            }
        })?;
        Ok(slots.into_iter().map(|s| s.expect("store dropped a key")).collect())
    }

    /// Serves one share. `emit` returns false when the receiver is gone.
    fn serve_share(
        &self,
        share: &[Key],
        share_index: usize,
        buffer_bytes: usize,
        emit: &mut dyn FnMut(ResponseBuffer) -> bool,
    ) -> Result<(), StorageError> {
        let mut order: Vec<(u32, u64, Key)> = share
            .iter()
            .map(|&k| {
                let e = &self.entries[k as usize];
                (e.file_id, e.byte_offset, k)
            })
            .collect();
        order.sort_unstable();

        let mut buf = Vec::new();
        let mut buf_bytes = 0usize;
        let mut i = 0;
        while i < order.len() {
            let file_id = order[i].0;
            let file = &self.files[file_id as usize];
            let handle = File::open(&file.path).map_err(io_err(&file.path))?;
            self.note_open();
            let mut reader = BufReader::with_capacity(256 << 10, handle);
            let mut pos: u64 = 0;
            reader.seek(SeekFrom::Start(0)).map_err(io_err(&file.path))?;
            while i < order.len() && order[i].0 == file_id {
                let e = &self.entries[order[i].2 as usize];
                let delta = e.byte_offset as i64 - pos as i64;
                if delta != 0 {
                    reader.seek_relative(delta).map_err(io_err(&file.path))?;
                }
                let mut raw = vec![0u8; e.length as usize];
                reader.read_exact(&mut raw).map_err(io_err(&file.path))?;
                pos = e.byte_offset + u64::from(e.length);
                let payload = finish_payload(&file.spec, raw);
                buf_bytes += payload.len();
                buf.push(FetchedSample { key: e.key, label: e.label, payload });
                if buf_bytes >= buffer_bytes {
                    if !emit(ResponseBuffer { share: share_index, samples: std::mem::take(&mut buf) }) {
                        return Ok(());
                    }
                    buf_bytes = 0;
                }
                i += 1;
            }
        }
        if !buf.is_empty() {
            emit(ResponseBuffer { share: share_index, samples: buf });
        }
        Ok(())
    }
}
