use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use cotrain::matrix::Matrix;
use cotrain::selector::{write_trigger_set, TriggerSetHandle, WeightedKey};
use cotrain::storage::{write_mdsf, FileRecordSpec, SampleStore};
use cotrain::trainer::{
    batch_gradient, compute_scores, downsample_bts, downsample_stb, train_on_trigger, DownsamplingConfig,
    DownsamplingMode, DownsamplingPolicy, F32LeParser, Loader, LoaderConfig, ReferenceLearner, ScoreKind,
    StbSelector, TrainError, TrainingConfig,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 3;
const CLASSES: usize = 3;

/// `n` samples with f32 features around a class-dependent mean; sample `i`
/// has timestamp `i`.
fn fixture(dir: &Path, n: usize, seed: u64) -> Arc<SampleStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records: Vec<(i64, Vec<u8>)> = (0..n)
        .map(|_| {
            let y = rng.gen_range(0..CLASSES as i64);
            let bytes = (0..DIM)
                .flat_map(|d| {
                    let v = if d == y as usize { 1.5f32 } else { 0.0 } + rng.gen_range(-1.0f32..1.0);
                    v.to_le_bytes()
                })
                .collect();
            (y, bytes)
        })
        .collect();
    let path = dir.join("data.mdsf");
    write_mdsf(&path, (8 + 4 * DIM) as u32, records.iter().map(|(l, p)| (*l, p.as_slice()))).unwrap();
    let offsets: Vec<i64> = (0..n as i64).collect();
    let mut store = SampleStore::new();
    store
        .register_file(&path, FileRecordSpec::BinaryFixedRecord { record_bytes: (8 + 4 * DIM) as u32 }, 0, Some(&offsets))
        .unwrap();
    Arc::new(store)
}

fn tts(dir: &Path, entries: &[WeightedKey], partition_size: usize) -> TriggerSetHandle {
    write_trigger_set(&dir.join("tts"), 0, entries, partition_size, 2).unwrap()
}

fn unit_entries(n: usize) -> Vec<WeightedKey> {
    (0..n as u64).map(|k| (k, 1.0)).collect()
}

fn parser() -> Arc<F32LeParser> {
    Arc::new(F32LeParser { dim: DIM })
}

fn random_learner(rng: &mut ChaCha8Rng) -> ReferenceLearner {
    let w = (0..CLASSES * DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = (0..CLASSES).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ReferenceLearner::from_parts(CLASSES, DIM, w, b)
}

fn loss_of(m: &ReferenceLearner, x: &[f64], y: i64) -> f64 {
    compute_scores(m, &Matrix::from_vec(1, DIM, x.to_vec()), &[y], ScoreKind::Loss).unwrap()[0]
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps = 1e-6;
    for _ in 0..5 {
        let m = random_learner(&mut rng);
        let x: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y = rng.gen_range(0..CLASSES as i64);
        let g = batch_gradient(&m, &Matrix::from_vec(1, DIM, x.clone()), &[y], &[1.0]).unwrap();
        let analytic: Vec<f64> = g.grad_w.iter().chain(&g.grad_b).copied().collect();
        let mut numeric = Vec::new();
        for i in 0..CLASSES * DIM + CLASSES {
            let mut plus = m.clone();
            let mut minus = m.clone();
            if i < CLASSES * DIM {
                plus.weights_mut()[i] += eps;
                minus.weights_mut()[i] -= eps;
            } else {
                plus.bias_mut()[i - CLASSES * DIM] += eps;
                minus.bias_mut()[i - CLASSES * DIM] -= eps;
            }
            numeric.push((loss_of(&plus, &x, y) - loss_of(&minus, &x, y)) / (2.0 * eps));
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-5 * norm(&numeric), "gradient off by {}", norm(&diff));
        let gn = compute_scores(&m, &Matrix::from_vec(1, DIM, x.clone()), &[y], ScoreKind::GradNorm).unwrap()[0];
        assert!((gn - norm(&numeric)).abs() <= 1e-5 * norm(&numeric));
    }
}

#[test]
fn weight_two_equals_duplicated_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_learner(&mut rng);
    let a: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weighted = batch_gradient(&m, &Matrix::from_rows(&[a.clone(), b.clone()]), &[0, 2], &[2.0, 1.0]).unwrap();
    let dup = batch_gradient(&m, &Matrix::from_rows(&[a.clone(), a, b]), &[0, 0, 2], &[1.0; 3]).unwrap();
    for (x, y) in weighted.grad_w.iter().chain(&weighted.grad_b).zip(dup.grad_w.iter().chain(&dup.grad_b)) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn weighted_training_equals_duplicated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 40, 1);
    // the duplicated set repeats keys 0..10; the weighted one gives them weight 2
    let weighted: Vec<WeightedKey> = (0..40).map(|k| (k, if k < 10 { 2.0 } else { 1.0 })).collect();
    let duplicated: Vec<WeightedKey> = (0..40).chain(0..10).map(|k| (k, 1.0)).collect();
    let cfg = TrainingConfig { batch_size: 64, epochs_per_trigger: 5, learning_rate: 0.5, ..Default::default() };
    let ds = DownsamplingConfig::default();
    let run = |entries: &[WeightedKey], sub: &str| {
        let h = write_trigger_set(&dir.path().join(sub), 0, entries, 100, 1).unwrap();
        train_on_trigger(Arc::clone(&store), &h, &cfg, &ds, parser(), ReferenceLearner::zeros(CLASSES, DIM), 3).unwrap()
    };
    let a = run(&weighted, "w");
    let b = run(&duplicated, "d");
    for (x, y) in a.learner.weights().iter().chain(a.learner.bias()).zip(b.learner.weights().iter().chain(b.learner.bias())) {
        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 30, 2);
    let h = tts(dir.path(), &unit_entries(30), 10);
    let init = random_learner(&mut ChaCha8Rng::seed_from_u64(9));
    let cfg = TrainingConfig { learning_rate: 0.0, batch_size: 7, ..Default::default() };
    let out = train_on_trigger(store, &h, &cfg, &DownsamplingConfig::default(), parser(), init.clone(), 0).unwrap();
    assert_eq!(out.learner, init);
    assert_eq!(out.samples_trained, 30);
    assert_eq!((out.t_start, out.t_end), (0, 29));
}

#[test]
fn worked_budget_example() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 1000, 3);
    let h = tts(dir.path(), &unit_entries(1000), 250);
    let cfg = TrainingConfig { epochs_per_trigger: 10, batch_size: 32, ..Default::default() };
    for (policy, mode) in [
        (DownsamplingPolicy::Loss, DownsamplingMode::StB),
        (DownsamplingPolicy::Loss, DownsamplingMode::BtS),
        (DownsamplingPolicy::Rs2WithoutReplacement, DownsamplingMode::StB),
    ] {
        let ds = DownsamplingConfig { policy, ratio: 0.1, mode, stb_refresh_every_epochs: 1, seed: 4 };
        let out = train_on_trigger(Arc::clone(&store), &h, &cfg, &ds, parser(), ReferenceLearner::zeros(CLASSES, DIM), 0)
            .unwrap();
        assert_eq!(out.samples_trained, 1000, "{policy:?} {mode:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_epoch_trains_exactly_the_budget(
        n in 1usize..120,
        ratio in 0.01f64..=1.0,
        epochs in 1u32..4,
        batch in 1usize..40,
        policy_idx in 0usize..8,
        bts in any::<bool>(),
        workers in 1usize..4,
    ) {
        let policies = [
            DownsamplingPolicy::None, DownsamplingPolicy::Loss, DownsamplingPolicy::GradNorm, DownsamplingPolicy::Margin,
            DownsamplingPolicy::LeastConfidence, DownsamplingPolicy::Entropy,
            DownsamplingPolicy::Rs2WithReplacement, DownsamplingPolicy::Rs2WithoutReplacement,
        ];
        let policy = policies[policy_idx];
        let mode = if bts && !policy.is_rs2() { DownsamplingMode::BtS } else { DownsamplingMode::StB };
        let dir = tempfile::tempdir().unwrap();
        let store = fixture(dir.path(), n, n as u64);
        let h = tts(dir.path(), &unit_entries(n), 17);
        let cfg = TrainingConfig {
            epochs_per_trigger: epochs,
            batch_size: batch,
            loader: LoaderConfig { num_workers: workers, ..Default::default() },
            ..Default::default()
        };
        let ds = DownsamplingConfig { policy, ratio, mode, stb_refresh_every_epochs: 2, seed: 1 };
        let out = train_on_trigger(store, &h, &cfg, &ds, parser(), ReferenceLearner::zeros(CLASSES, DIM), 0).unwrap();
        let per_epoch = if policy == DownsamplingPolicy::None { n } else { (ratio * n as f64).floor() as usize };
        prop_assert_eq!(out.samples_trained, u64::from(epochs) * per_epoch as u64);
    }

    #[test]
    fn loader_yields_every_key_once(
        n in 0usize..300,
        partition_size in 1usize..80,
        workers in 1usize..5,
        prefetch in 0usize..4,
        parallel in 1usize..4,
        threads in 1usize..4,
        batch in 1usize..50,
        shuffle in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let store = fixture(dir.path(), n.max(1), 7);
        let entries: Vec<WeightedKey> = (0..n as u64).rev().map(|k| (k, 1.0)).collect();
        let h = tts(dir.path(), &entries, partition_size);
        let cfg = LoaderConfig {
            num_workers: workers,
            prefetch_buffer_partitions: prefetch,
            parallel_prefetch_requests: parallel,
            storage_threads: threads,
            buffer_bytes: 64,
        };
        let loader = Loader::new(store, h, cfg, batch, parser(), shuffle.then_some(3)).unwrap();
        let mut keys: Vec<u64> = Vec::new();
        for b in loader.epoch(0) {
            let b = b.unwrap();
            prop_assert!(b.len() <= batch);
            keys.extend(b.keys);
        }
        keys.sort_unstable();
        prop_assert_eq!(keys, (0..n as u64).collect::<Vec<_>>());
    }
}

#[test]
fn single_worker_without_prefetch_follows_partition_order() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 200, 8);
    let mut entries = unit_entries(200);
    entries.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let h = tts(dir.path(), &entries, 30);
    let cfg = LoaderConfig { prefetch_buffer_partitions: 0, ..Default::default() };
    let loader = Loader::new(store, h.clone(), cfg, 16, parser(), None).unwrap();
    let got: Vec<u64> = loader.epoch(0).flat_map(|b| b.unwrap().keys).collect();
    let direct: Vec<u64> = h.read_all().unwrap().into_iter().map(|e| e.0).collect();
    assert_eq!(got, direct);
}

#[test]
fn four_workers_round_robin() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 1000, 9);
    let h = tts(dir.path(), &unit_entries(1000), 100);
    let cfg = LoaderConfig { num_workers: 4, prefetch_buffer_partitions: 2, parallel_prefetch_requests: 2, ..Default::default() };
    let loader = Loader::new(store, h, cfg, 25, parser(), None).unwrap();
    let batches: Vec<_> = loader.epoch(0).map(Result::unwrap).collect();
    let mut per_worker: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, b) in batches.iter().enumerate() {
        assert_eq!(b.worker, i % 4);
        *per_worker.entry(b.worker).or_default() += b.len();
    }
    assert_eq!(per_worker.values().copied().collect::<Vec<_>>(), vec![250; 4]);
}

#[test]
fn shuffle_is_reproducible_and_a_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 500, 10);
    let h = tts(dir.path(), &unit_entries(500), 60);
    let cfg = LoaderConfig { num_workers: 2, prefetch_buffer_partitions: 3, parallel_prefetch_requests: 2, ..Default::default() };
    let run = |seed: Option<u64>, epoch: u32| -> Vec<u64> {
        let l = Loader::new(Arc::clone(&store), h.clone(), cfg.clone(), 32, parser(), seed).unwrap();
        l.epoch(epoch).flat_map(|b| b.unwrap().keys).collect()
    };
    let a = run(Some(42), 0);
    assert_eq!(a, run(Some(42), 0));
    let plain = run(None, 0);
    assert_ne!(a, plain);
    assert_ne!(a, run(Some(42), 1));
    let (mut s1, mut s2) = (a.clone(), plain);
    s1.sort_unstable();
    s2.sort_unstable();
    assert_eq!(s1, s2);
}

#[test]
fn training_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 400, 12);
    let h = tts(dir.path(), &unit_entries(400), 50);
    let cfg = TrainingConfig {
        epochs_per_trigger: 3,
        batch_size: 20,
        shuffle: true,
        loader: LoaderConfig { num_workers: 3, prefetch_buffer_partitions: 2, parallel_prefetch_requests: 2, storage_threads: 2, buffer_bytes: 100 },
        ..Default::default()
    };
    let ds = DownsamplingConfig { policy: DownsamplingPolicy::GradNorm, ratio: 0.3, mode: DownsamplingMode::BtS, stb_refresh_every_epochs: 1, seed: 5 };
    let run = || train_on_trigger(Arc::clone(&store), &h, &cfg, &ds, parser(), ReferenceLearner::zeros(CLASSES, DIM), 8).unwrap();
    let (a, b) = (run(), run());
    let bits = |m: &ReferenceLearner| m.weights().iter().chain(m.bias()).map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.learner), bits(&b.learner));
}

#[test]
fn loss_proportional_draw_frequency() {
    let hits = (0..100_000u64).filter(|&s| downsample_bts(&[3.0, 1.0], ScoreKind::Loss, 0.5, s).unwrap()[0].0 == 0).count();
    let freq = hits as f64 / 1e5;
    assert!((freq - 0.75).abs() <= 0.01, "frequency {freq}");
}

#[test]
fn importance_weights_are_inverse_probabilities() {
    let picked = downsample_bts(&[3.0, 1.0], ScoreKind::Loss, 0.5, 1).unwrap();
    let expected = if picked[0].0 == 0 { 4.0 / 6.0 } else { 2.0 };
    assert!((picked[0].1 - expected).abs() < 1e-15);
}

#[test]
fn margin_takes_lowest_scores() {
    let picked: Vec<usize> = downsample_bts(&[0.8, 0.1, 0.5], ScoreKind::Margin, 2.0 / 3.0, 0).unwrap().into_iter().map(|p| p.0).collect();
    assert_eq!(picked, vec![1, 2]);
}

#[test]
fn entropy_matches_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scores: Vec<f64> = (0..500).map(|_| rng.gen()).collect();
    let got: Vec<usize> = downsample_stb(&scores, DownsamplingPolicy::Entropy, 0.2, 0).unwrap().into_iter().map(|p| p.0).collect();
    let mut idx: Vec<usize> = (0..500).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut want = idx[..100].to_vec();
    want.sort_unstable();
    assert_eq!(got, want);
}

#[test]
fn rs2_without_replacement_cycles() {
    let mut sel = StbSelector::new(DownsamplingPolicy::Rs2WithoutReplacement, 10, 0.5, 2).unwrap();
    let a: Vec<usize> = sel.next_epoch(None).unwrap().into_iter().map(|p| p.0).collect();
    let b: Vec<usize> = sel.next_epoch(None).unwrap().into_iter().map(|p| p.0).collect();
    assert_eq!(a.len(), 5);
    assert!(a.iter().all(|i| !b.contains(i)));

    // 7 keys, 3 per epoch: every key appears before any repeats
    let mut sel = StbSelector::new(DownsamplingPolicy::Rs2WithoutReplacement, 7, 3.0 / 7.0, 2).unwrap();
    let mut seen: Vec<usize> = Vec::new();
    for _ in 0..2 {
        seen.extend(sel.next_epoch(None).unwrap().into_iter().map(|p| p.0));
    }
    let third: Vec<usize> = sel.next_epoch(None).unwrap().into_iter().map(|p| p.0).collect();
    let missing: Vec<usize> = (0..7).filter(|i| !seen.contains(i)).collect();
    assert_eq!(missing.len(), 1);
    assert!(third.contains(&missing[0]));
}

#[test]
fn rs2_with_replacement_rejects_bts() {
    let ds = DownsamplingConfig { policy: DownsamplingPolicy::Rs2WithReplacement, ratio: 0.5, mode: DownsamplingMode::BtS, ..Default::default() };
    assert!(matches!(ds.validate(), Err(TrainError::InvalidConfig(_))));
}

#[test]
fn empty_set_and_divergence_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let store = fixture(dir.path(), 20, 13);
    let empty = write_trigger_set(&dir.path().join("e"), 4, &[], 10, 1).unwrap();
    let cfg = TrainingConfig::default();
    let ds = DownsamplingConfig::default();
    let err = train_on_trigger(Arc::clone(&store), &empty, &cfg, &ds, parser(), ReferenceLearner::zeros(CLASSES, DIM), 0);
    assert!(matches!(err, Err(TrainError::EmptySet(4))));

    let h = tts(dir.path(), &unit_entries(20), 10);
    // one class dominates by ~1e4 logits, so the true class has probability 0
    let mut w = vec![0.0; CLASSES * DIM];
    w[0] = 1e4;
    w[1] = 1e4;
    w[2] = 1e4;
    let mut b = vec![0.0; CLASSES];
    b[0] = 1e4;
    let init = ReferenceLearner::from_parts(CLASSES, DIM, w, b);
    let err = train_on_trigger(store, &h, &cfg, &ds, parser(), init, 0);
    assert!(matches!(err, Err(TrainError::Diverged(_))), "{err:?}");
}
