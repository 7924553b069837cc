use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::downsample::{budget, select_indices, DownsamplingConfig, DownsamplingMode, StbSelector};
use super::learner::{softmax, ReferenceLearner};
use super::loader::{BytesParser, Loader, LoaderConfig, TrainingBatch};
use super::scores::{check_label, compute_scores, cross_entropy};
use super::TrainError;
use crate::matrix::Matrix;
use crate::selector::TriggerSetHandle;
use crate::seed;
use crate::storage::{Key, SampleStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs_per_trigger: u32,
    pub learning_rate: f64,
    pub use_previous_model: bool,
    pub shuffle: bool,
    pub loader: LoaderConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs_per_trigger: 1,
            learning_rate: 0.1,
            use_previous_model: true,
            shuffle: false,
            loader: LoaderConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.epochs_per_trigger == 0 {
            return Err(TrainError::InvalidConfig("batch_size and epochs_per_trigger must be positive".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::InvalidConfig(format!("learning_rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.loader.num_workers == 0 {
            return Err(TrainError::InvalidConfig("loader.num_workers must be positive".into()));
        }
        Ok(())
    }
}

/// Result of training on one trigger.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trigger_id: u32,
    pub learner: ReferenceLearner,
    /// Earliest and latest timestamp among the keys that contributed a
    /// gradient.
    pub t_start: i64,
    pub t_end: i64,
    /// Gradient-contributing sample visits over all epochs.
    pub samples_trained: u64,
    pub num_keys: usize,
    pub final_loss: f64,
}

/// Weighted mean gradient of the cross-entropy over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
    /// Weighted mean loss.
    pub loss: f64,
}

/// `Σ w_i ∇ℓ_i / Σ w_i`, with `∇ℓ_i = (p_i − e_{y_i}) ⊗ [x_i; 1]`.
pub fn batch_gradient(
    learner: &ReferenceLearner,
    features: &Matrix,
    labels: &[i64],
    weights: &[f64],
) -> Result<BatchGradient, TrainError> {
    let (c, f) = (learner.num_classes(), learner.feature_dim());
    if features.cols() != f {
        return Err(TrainError::Dimension { expected: f, got: features.cols() });
    }
    if labels.len() != features.rows() || weights.len() != features.rows() {
        return Err(TrainError::Dimension { expected: features.rows(), got: labels.len().min(weights.len()) });
    }
    let mut grad_w = vec![0.0; c * f];
    let mut grad_b = vec![0.0; c];
    let mut loss = 0.0;
    let mut total = 0.0;
    for ((x, &label), &w) in features.iter_rows().zip(labels).zip(weights) {
        let y = check_label(label, c)?;
        let mut p = softmax(&learner.logits(x));
        let l = cross_entropy(&p, y);
        if !l.is_finite() {
            return Err(TrainError::Diverged(format!("non-finite loss {l}")));
        }
        loss += w * l;
        total += w;
        p[y] -= 1.0;
        for (k, r) in p.iter().enumerate() {
            let wr = w * r;
            for (g, xv) in grad_w[k * f..(k + 1) * f].iter_mut().zip(x) {
                *g += wr * xv;
            }
            grad_b[k] += wr;
        }
    }
    if total > 0.0 {
        for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
            *g /= total;
        }
        loss /= total;
    }
    Ok(BatchGradient { grad_w, grad_b, loss })
}

struct Session<'a> {
    learner: ReferenceLearner,
    lr: f64,
    store: &'a SampleStore,
    samples_trained: u64,
    t_start: i64,
    t_end: i64,
    last_loss: f64,
}

impl Session<'_> {
    fn step(&mut self, keys: &[Key], features: &Matrix, labels: &[i64], weights: &[f64]) -> Result<(), TrainError> {
        if keys.is_empty() {
            return Ok(());
        }
        let g = batch_gradient(&self.learner, features, labels, weights)?;
        self.learner.apply_step(&g.grad_w, &g.grad_b, -self.lr);
        if !self.learner.is_finite() {
            return Err(TrainError::Diverged("parameters became non-finite".into()));
        }
        self.last_loss = g.loss;
        self.samples_trained += keys.len() as u64;
        for &k in keys {
            let ts = self.store.entry(k)?.timestamp;
            self.t_start = self.t_start.min(ts);
            self.t_end = self.t_end.max(ts);
        }
        Ok(())
    }
}

/// Rows of a batch-like collection, used to assemble training batches.
#[derive(Default)]
struct Rows {
    keys: Vec<Key>,
    features: Vec<f64>,
    labels: Vec<i64>,
    weights: Vec<f64>,
}

impl Rows {
    fn push(&mut self, key: Key, x: &[f64], label: i64, weight: f64) {
        self.keys.push(key);
        self.features.extend_from_slice(x);
        self.labels.push(label);
        self.weights.push(weight);
    }

    fn len(&self) -> usize {
        self.keys.len()
    }

    fn drain_front(&mut self, n: usize, dim: usize) -> (Vec<Key>, Matrix, Vec<i64>, Vec<f64>) {
        let keys: Vec<Key> = self.keys.drain(..n).collect();
        let feats: Vec<f64> = self.features.drain(..n * dim).collect();
        let labels = self.labels.drain(..n).collect();
        let weights = self.weights.drain(..n).collect();
        (keys, Matrix::from_vec(n, dim, feats), labels, weights)
    }
}

/// Trains `init` on the trigger training set behind `tts`.
///
/// Every epoch touches exactly `floor(ratio·N)` samples. In BtS mode each
/// loader batch contributes `floor(ratio·seen_after) − floor(ratio·seen_before)`
/// samples, so the per-batch counts add up to the epoch budget; selected
/// samples are accumulated into full batches. In StB mode the whole set is
/// loaded once and re-scored every `stb_refresh_every_epochs` epochs.
#[allow(clippy::too_many_arguments)]
pub fn train_on_trigger(
    store: Arc<SampleStore>,
    tts: &TriggerSetHandle,
    config: &TrainingConfig,
    downsampling: &DownsamplingConfig,
    parser: Arc<dyn BytesParser>,
    init: ReferenceLearner,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    downsampling.validate()?;
    if tts.is_empty() {
        return Err(TrainError::EmptySet(tts.trigger_id));
    }
    if parser.feature_dim() != init.feature_dim() {
        return Err(TrainError::Dimension { expected: init.feature_dim(), got: parser.feature_dim() });
    }
    let shuffle_seed = config.shuffle.then(|| seed::sub_seed(seed, "shuffle"));
    let loader = Loader::new(Arc::clone(&store), tts.clone(), config.loader.clone(), config.batch_size, parser, shuffle_seed)?;
    let mut session = Session {
        learner: init,
        lr: config.learning_rate,
        store: &store,
        samples_trained: 0,
        t_start: i64::MAX,
        t_end: i64::MIN,
        last_loss: f64::NAN,
    };

    if !downsampling.is_active() {
        for epoch in 0..config.epochs_per_trigger {
            for batch in loader.epoch(epoch) {
                let b = batch?;
                session.step(&b.keys, &b.features, &b.labels, &b.weights)?;
            }
        }
    } else if downsampling.mode == DownsamplingMode::BtS {
        train_bts(&mut session, &loader, config, downsampling, tts.total_count)?;
    } else {
        train_stb(&mut session, &loader, config, downsampling, seed)?;
    }

    Ok(TrainOutcome {
        trigger_id: tts.trigger_id,
        learner: session.learner,
        t_start: session.t_start,
        t_end: session.t_end,
        samples_trained: session.samples_trained,
        num_keys: tts.total_count,
        final_loss: session.last_loss,
    })
}

fn train_bts(
    session: &mut Session<'_>,
    loader: &Loader,
    config: &TrainingConfig,
    ds: &DownsamplingConfig,
    n: usize,
) -> Result<(), TrainError> {
    let kind = ds.policy.score_kind().expect("BtS runs score-based policies only");
    let dim = session.learner.feature_dim();
    for epoch in 0..config.epochs_per_trigger {
        let mut acc = Rows::default();
        let mut seen = 0usize;
        for (bi, batch) in loader.epoch(epoch).enumerate() {
            let b: TrainingBatch = batch?;
            let before = budget(ds.ratio, seen);
            seen += b.len();
            let k = budget(ds.ratio, seen.min(n)) - before;
            let scores = compute_scores(&session.learner, &b.features, &b.labels, kind)?;
            let mut rng = seed::rng(seed::mix(ds.seed, &[u64::from(epoch), bi as u64]));
            for (i, w) in select_indices(&scores, kind, k, &mut rng) {
                acc.push(b.keys[i], b.features.row(i), b.labels[i], b.weights[i] * w);
            }
            while acc.len() >= config.batch_size {
                let (keys, x, y, w) = acc.drain_front(config.batch_size, dim);
                session.step(&keys, &x, &y, &w)?;
            }
        }
        let rest = acc.len();
        let (keys, x, y, w) = acc.drain_front(rest, dim);
        session.step(&keys, &x, &y, &w)?;
    }
    Ok(())
}

fn train_stb(
    session: &mut Session<'_>,
    loader: &Loader,
    config: &TrainingConfig,
    ds: &DownsamplingConfig,
    seed: u64,
) -> Result<(), TrainError> {
    let dim = session.learner.feature_dim();
    // one pass to materialize the set; later scoring passes reuse it
    let mut pool = Rows::default();
    for batch in loader.epoch(0) {
        let b = batch?;
        for i in 0..b.len() {
            pool.push(b.keys[i], b.features.row(i), b.labels[i], b.weights[i]);
        }
    }
    let n = pool.len();
    let features = Matrix::from_vec(n, dim, std::mem::take(&mut pool.features));
    let mut selector = StbSelector::new(ds.policy, n, ds.ratio, ds.seed)?;
    let mut selection: Vec<(usize, f64)> = Vec::new();
    for epoch in 0..config.epochs_per_trigger {
        let refresh = epoch % ds.stb_refresh_every_epochs == 0;
        if ds.policy.is_rs2() {
            selection = selector.next_epoch(None)?;
        } else if refresh {
            let kind = ds.policy.score_kind().expect("score-based policy");
            let scores = compute_scores(&session.learner, &features, &pool.labels, kind)?;
            selection = selector.next_epoch(Some(&scores))?;
        }
        let mut order = selection.clone();
        if config.shuffle {
            order.shuffle(&mut seed::rng(seed::mix(seed::sub_seed(seed, "stb-order"), &[u64::from(epoch)])));
        }
        for chunk in order.chunks(config.batch_size) {
            let mut rows = Rows::default();
            for &(i, w) in chunk {
                rows.push(pool.keys[i], features.row(i), pool.labels[i], pool.weights[i] * w);
            }
            let len = rows.len();
            let (keys, x, y, w) = rows.drain_front(len, dim);
            session.step(&keys, &x, &y, &w)?;
        }
    }
    Ok(())
}
