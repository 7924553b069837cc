use std::fs;

use cotrain::model_store::{
    decode_mdmw, encode_mdmw, make_delta, ArtifactKind, DeltaOperator, ModelStore, ModelStoreError, StoragePolicy, Weights,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Arbitrary bit patterns, including NaNs, infinities and signed zeros.
fn weights_strategy() -> impl Strategy<Value = Weights> {
    prop::collection::vec(1u32..5, 1..4).prop_flat_map(|shape| {
        let n: u32 = shape.iter().product();
        prop::collection::vec(any::<u64>().prop_map(f64::from_bits), n as usize)
            .prop_map(move |data| Weights { shape: shape.clone(), data })
    })
}

/// A random walk of models: each step perturbs a few entries.
fn walk(len: usize, seed: u64) -> Vec<Weights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = Weights { shape: vec![4, 9], data: (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut out = vec![cur.clone()];
    for _ in 1..len {
        for v in &mut cur.data {
            if rng.gen_bool(0.5) {
                *v += rng.gen_range(-1e-3..1e-3) * 10f64.powi(rng.gen_range(-8..8));
            }
        }
        if rng.gen_bool(0.2) {
            cur.data[0] = f64::from_bits(rng.gen());
        }
        out.push(cur.clone());
    }
    out
}

proptest! {
    #[test]
    fn mdmw_roundtrip_is_byte_exact(w in weights_strategy()) {
        let bytes = encode_mdmw(&w);
        let back = decode_mdmw(&bytes).unwrap();
        prop_assert!(back.bit_eq(&w));
        prop_assert_eq!(encode_mdmw(&back), bytes);
    }

    #[test]
    fn chains_reconstruct_bit_exactly(len in 1usize..=8, seed in any::<u64>(), subtract in any::<bool>(), full_every in 1u32..=8) {
        let op = if subtract { DeltaOperator::Subtract } else { DeltaOperator::Xor };
        let dir = tempfile::tempdir().unwrap();
        let mut store = ModelStore::open(dir.path(), StoragePolicy { full_every, operator: op }).unwrap();
        let models = walk(len, seed);
        for m in &models {
            store.store(m).unwrap();
        }
        for (i, m) in models.iter().enumerate() {
            prop_assert!(store.load(i as u64).unwrap().bit_eq(m));
        }
        let reopened = ModelStore::open(dir.path(), StoragePolicy { full_every, operator: op }).unwrap();
        prop_assert!(reopened.load(len as u64 - 1).unwrap().bit_eq(&models[len - 1]));
    }
}

#[test]
fn full_every_one_stores_only_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ModelStore::open(dir.path(), StoragePolicy::default()).unwrap();
    for m in walk(4, 1) {
        assert_eq!(store.store(&m).unwrap().kind, ArtifactKind::Full);
    }
}

#[test]
fn delta_chain_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ModelStore::open(dir.path(), StoragePolicy { full_every: 3, operator: DeltaOperator::Xor }).unwrap();
    for m in walk(7, 2) {
        store.store(&m).unwrap();
    }
    let kinds: Vec<_> = store.artifacts().iter().map(|a| (a.kind, a.base)).collect();
    use ArtifactKind::*;
    assert_eq!(
        kinds,
        vec![(Full, None), (Delta, Some(0)), (Delta, Some(1)), (Full, None), (Delta, Some(3)), (Delta, Some(4)), (Full, None)]
    );
}

#[test]
fn identical_models_give_zero_xor_words() {
    let w = walk(1, 3).remove(0);
    let big = Weights { shape: vec![100, 100], data: (0..10_000).map(|i| f64::from(i) * 0.37).collect() };
    for m in [w, big] {
        let d = make_delta(&m, &m, DeltaOperator::Xor).unwrap();
        let words = decode_mdmw(&d).unwrap().data;
        let zeros = words.iter().filter(|v| v.to_bits() == 0).count();
        assert!(zeros as f64 >= 0.99 * words.len() as f64);
    }
}

#[test]
fn corrupted_artifact_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ModelStore::open(dir.path(), StoragePolicy { full_every: 4, operator: DeltaOperator::Subtract }).unwrap();
    for m in walk(3, 4) {
        store.store(&m).unwrap();
    }
    let p = dir.path().join(&store.artifacts()[1].file);
    let mut bytes = fs::read(&p).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    fs::write(&p, bytes).unwrap();
    assert!(store.load(0).is_ok());
    assert!(matches!(store.load(1), Err(ModelStoreError::Checksum { id: 1, .. })));
    assert!(matches!(store.load(2), Err(ModelStoreError::Checksum { id: 1, .. })));
    assert!(matches!(store.load(9), Err(ModelStoreError::UnknownModel(9))));
}

#[test]
fn missing_file_breaks_the_chain() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ModelStore::open(dir.path(), StoragePolicy { full_every: 8, operator: DeltaOperator::Xor }).unwrap();
    for m in walk(3, 5) {
        store.store(&m).unwrap();
    }
    fs::remove_file(dir.path().join("model_0.mdmw")).unwrap();
    assert!(matches!(store.load(2), Err(ModelStoreError::Io { .. })));
}

#[test]
fn shape_change_against_base_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ModelStore::open(dir.path(), StoragePolicy { full_every: 2, operator: DeltaOperator::Xor }).unwrap();
    store.store(&Weights { shape: vec![2], data: vec![1.0, 2.0] }).unwrap();
    let err = store.store(&Weights { shape: vec![3], data: vec![1.0, 2.0, 3.0] });
    assert!(matches!(err, Err(ModelStoreError::ShapeMismatch { .. })));
}

#[test]
fn truncated_mdmw_reports_offset() {
    let bytes = encode_mdmw(&Weights { shape: vec![3], data: vec![1.0, 2.0, 3.0] });
    assert!(matches!(decode_mdmw(&bytes[..20]), Err(ModelStoreError::Format { .. })));
    assert!(matches!(decode_mdmw(b"MDSF\x01\0\0\0"), Err(ModelStoreError::Format { offset: 0, .. })));
}
