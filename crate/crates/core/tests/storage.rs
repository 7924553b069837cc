use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use cotrain::storage::{write_mdsf, FetchOptions, FileRecordSpec, SampleStore, SplitScheme};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_file(path: &Path, n: usize, payload: usize, rng: &mut ChaCha8Rng) {
    let records: Vec<(i64, Vec<u8>)> =
        (0..n).map(|_| (rng.gen_range(-1..10), (0..payload).map(|_| rng.gen()).collect())).collect();
    write_mdsf(path, 8 + payload as u32, records.iter().map(|(l, p)| (*l, p.as_slice()))).unwrap();
}

fn store_with_files(dir: &Path, sizes: &[usize], payload: usize, seed: u64) -> SampleStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = SampleStore::new();
    for (i, &n) in sizes.iter().enumerate() {
        let p = dir.join(format!("f{i}.mdsf"));
        random_file(&p, n, payload, &mut rng);
        let offsets: Vec<i64> = (0..n).map(|_| rng.gen_range(0..50)).collect();
        store
            .register_file(&p, FileRecordSpec::BinaryFixedRecord { record_bytes: 8 + payload as u32 }, 1000, Some(&offsets))
            .unwrap();
    }
    store
}

/// Oracle: open the file and read the span recorded in the index.
fn direct_read(store: &SampleStore, key: u64) -> Vec<u8> {
    let e = store.entry(key).unwrap();
    let path = &store.files()[e.file_id as usize].path;
    let mut f = File::open(path).unwrap();
    f.seek(SeekFrom::Start(e.byte_offset)).unwrap();
    let mut buf = vec![0u8; e.length as usize];
    f.read_exact(&mut buf).unwrap();
    buf
}

#[test]
fn empty_request_yields_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_with_files(dir.path(), &[3], 4, 1);
    assert!(store.fetch_all(&[], FetchOptions::default()).unwrap().is_empty());
}

#[test]
fn one_thread_groups_by_file() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_with_files(dir.path(), &[5, 5], 4, 2);
    let keys = [7, 0, 9, 3, 5, 1];
    let before = store.file_open_count();
    let buffers = store.fetch_all(&keys, FetchOptions { threads: 1, buffer_bytes: 1 << 20 }).unwrap();
    assert_eq!(buffers.len(), 1);
    assert_eq!(buffers[0].samples.len(), 6);
    assert_eq!(store.file_open_count() - before, 2);
    let order: Vec<u64> = buffers[0].samples.iter().map(|s| s.key).collect();
    assert_eq!(order, vec![0, 1, 3, 5, 7, 9]);
}

#[test]
fn buffers_split_at_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_with_files(dir.path(), &[10], 4, 3);
    let keys: Vec<u64> = (0..10).collect();
    let buffers = store.fetch_all(&keys, FetchOptions { threads: 1, buffer_bytes: 12 }).unwrap();
    let sizes: Vec<usize> = buffers.iter().map(|b| b.samples.len()).collect();
    assert_eq!(sizes, vec![3, 3, 3, 1]);
}

#[test]
fn unknown_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_with_files(dir.path(), &[3], 4, 4);
    let err = store.fetch_all(&[0, 99], FetchOptions::default()).unwrap_err();
    assert!(err.to_string().contains("99"));
}

#[test]
fn thousand_keys_four_threads_match_direct_reads() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_with_files(dir.path(), &[400, 300, 500], 24, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut keys: Vec<u64> = (0..1200).collect();
    rand::seq::SliceRandom::shuffle(keys.as_mut_slice(), &mut rng);
    keys.truncate(1000);
    let buffers = store.fetch_all(&keys, FetchOptions { threads: 4, buffer_bytes: 2048 }).unwrap();
    let mut got: Vec<u64> = Vec::new();
    for b in &buffers {
        for s in &b.samples {
            assert_eq!(s.payload, direct_read(&store, s.key), "key {}", s.key);
            assert_eq!(s.label, store.entry(s.key).unwrap().label);
            got.push(s.key);
        }
    }
    got.sort_unstable();
    let mut want = keys.clone();
    want.sort_unstable();
    assert_eq!(got, want);
    assert_eq!(store.fetch_ordered(&keys, FetchOptions { threads: 3, buffer_bytes: 100 }).unwrap().iter().map(|s| s.key).collect::<Vec<_>>(), keys);
}

#[test]
fn thread_counts_yield_same_multiset() {
    let dir = tempfile::tempdir().unwrap();
    let store = store_with_files(dir.path(), &[50, 70], 8, 7);
    let keys: Vec<u64> = (0..120).rev().chain(0..10).collect();
    let mut reference: Option<HashMap<u64, (usize, Vec<u8>)>> = None;
    for threads in [1, 2, 4, 8] {
        let mut seen: HashMap<u64, (usize, Vec<u8>)> = HashMap::new();
        store
            .get_samples_by_keys(&keys, FetchOptions { threads, buffer_bytes: 64 }, |b| {
                for s in b.samples {
                    let slot = seen.entry(s.key).or_insert((0, s.payload.clone()));
                    slot.0 += 1;
                }
            })
            .unwrap();
        match &reference {
            None => reference = Some(seen),
            Some(r) => assert_eq!(r, &seen, "threads={threads}"),
        }
    }
}

#[test]
fn replay_sizes_and_tie_break() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.mdsf");
    write_mdsf(&p, 9, (0..5).map(|i| (i, &[0u8][..]))).unwrap();
    let mut store = SampleStore::new();
    store.register_file(&p, FileRecordSpec::BinaryFixedRecord { record_bytes: 9 }, 0, Some(&[5, 1, 1, 0, 1])).unwrap();
    let batches = store.replay(2).unwrap();
    let sizes: Vec<usize> = batches.iter().map(|b| b.items.len()).collect();
    assert_eq!(sizes, vec![2, 2, 1]);
    let order: Vec<u64> = batches.iter().flat_map(|b| b.items.iter().map(|i| i.key)).collect();
    assert_eq!(order, vec![3, 1, 2, 4, 0]);
    assert_eq!(batches[0].watermark, 1);
    assert_eq!(batches[2].watermark, 5);
    assert!(SampleStore::new().replay(2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn replay_is_a_stable_timestamp_sort(seed in any::<u64>(), sizes in prop::collection::vec(1usize..40, 1..4), batch in 1usize..17) {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_files(dir.path(), &sizes, 2, seed);
        let replayed: Vec<(i64, u64)> = store.replay(batch).unwrap().iter().flat_map(|b| {
            assert!(b.items.len() <= batch);
            assert!(b.items.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
            b.items.iter().map(|i| (i.timestamp, i.key)).collect::<Vec<_>>()
        }).collect();
        // brute-force oracle: full sort of (timestamp, key)
        let mut oracle: Vec<(i64, u64)> = store.entries().iter().map(|e| (e.timestamp, e.key)).collect();
        oracle.sort();
        prop_assert_eq!(replayed, oracle);
    }
}

#[test]
fn every_kth_takes_every_second() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.mdsf");
    write_mdsf(&p, 9, (0..10).map(|i| (i, &[0u8][..]))).unwrap();
    let mut store = SampleStore::new();
    let offsets: Vec<i64> = (0..10).rev().collect();
    store.register_file(&p, FileRecordSpec::BinaryFixedRecord { record_bytes: 9 }, 0, Some(&offsets)).unwrap();
    let (train, eval) = store.split_stream(0.5, SplitScheme::EveryKth, 0).unwrap();
    assert_eq!(eval.len(), 5);
    // timestamp order is key 9,8,...,0; every second one is evaluation data
    assert_eq!(eval, vec![0, 2, 4, 6, 8]);
    assert_eq!(train, vec![1, 3, 5, 7, 9]);
    assert!(store.split_stream(1.0, SplitScheme::EveryKth, 0).is_err());
    assert!(store.split_stream(0.0, SplitScheme::HashModulo, 0).is_err());
}

#[test]
fn hash_split_is_deterministic_and_within_binomial_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.mdsf");
    write_mdsf(&p, 9, (0..10_000).map(|i| (i, &[0u8][..]))).unwrap();
    let mut store = SampleStore::new();
    store.register_file(&p, FileRecordSpec::BinaryFixedRecord { record_bytes: 9 }, 0, None).unwrap();
    let a = store.split_stream(0.25, SplitScheme::HashModulo, 11).unwrap();
    let b = store.split_stream(0.25, SplitScheme::HashModulo, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0.len() + a.1.len(), 10_000);
    // Binomial(10000, 0.25): sd = 43.3, so [2300, 2700] is a ±4.6σ band.
    let sd = (10_000.0f64 * 0.25 * 0.75).sqrt();
    assert!(200.0 / sd > 4.5);
    assert!((2300..=2700).contains(&a.1.len()), "{}", a.1.len());
    let c = store.split_stream(0.25, SplitScheme::HashModulo, 12).unwrap();
    assert_ne!(a.1, c.1);
}

#[test]
fn every_kth_share_is_exact_within_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.mdsf");
    write_mdsf(&p, 9, (0..997).map(|i| (i, &[0u8][..]))).unwrap();
    let mut store = SampleStore::new();
    store.register_file(&p, FileRecordSpec::BinaryFixedRecord { record_bytes: 9 }, 0, None).unwrap();
    for f in [0.1, 0.2, 0.33, 0.5, 0.9] {
        let (train, eval) = store.split_stream(f, SplitScheme::EveryKth, 0).unwrap();
        assert!((eval.len() as f64 - f * 997.0).abs() <= 1.0);
        assert_eq!(train.len() + eval.len(), 997);
    }
}
