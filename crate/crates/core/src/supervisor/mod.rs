//! Pipeline execution: replays the training split, applies the trigger
//! policy per sample and, on every trigger, selects, trains, stores and
//! finally evaluates all models.

mod policy;

pub use policy::{PolicyState, TriggerCause, TriggerPolicy};

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, PipelineConfig};
use crate::drift::DriftError;
use crate::evaluator::{
    build_matrix, composite_mapping, composite_series, generate_intervals, pipeline_score, CompositeVariant, EvalError,
    EvalSet, EvaluationInterval, EvaluationMatrix, IntervalSpec, SkipPolicy,
};
use crate::matrix::Matrix;
use crate::model_store::{crc64, ArtifactKind, ModelStore, ModelStoreError, Weights};
use crate::selector::{partition_file_name, PoolEntry, SelectionConfig, SelectorError, SelectorState};
use crate::seed;
use crate::storage::{FetchOptions, Key, SampleStore, StorageError, StreamBatch};
use crate::trainer::{
    train_on_trigger, BytesParser, DownsamplingConfig, F32LeParser, ReferenceLearner, TrainError,
};

#[derive(Debug, Error)]
pub enum SupervisorError {
    #[error("invalid pipeline: {0}")]
    Config(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error("trigger {trigger}: training failed: {source}")]
    Train { trigger: u32, source: TrainError },
    #[error(transparent)]
    ModelStore(#[from] ModelStoreError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NoTriggers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerOutcome {
    Trained,
    /// The pool since the last trigger was empty (several time boundaries
    /// crossed at one sample).
    SkippedEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerLogEntry {
    /// Running index over all fired triggers, trained or not.
    pub index: usize,
    pub cause: TriggerCause,
    /// 1-based position of the triggering sample in the replayed stream.
    pub sample_index: u64,
    pub timestamp: i64,
    pub outcome: TriggerOutcome,
    pub model_id: Option<u64>,
    pub samples_trained: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub id: u64,
    pub trigger_id: u32,
    /// Earliest timestamp in the trigger's selection window.
    pub t_start: i64,
    /// Timestamp of the triggering sample.
    pub t_end: i64,
    pub num_keys: usize,
    pub samples_trained: u64,
    pub final_loss: f64,
    pub kind: ArtifactKind,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub num_triggers: u64,
    pub samples_trained: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    NumTriggers,
    SamplesTrained,
    WallClockSeconds,
}

impl Costs {
    pub fn get(&self, kind: CostKind) -> f64 {
        match kind {
            CostKind::NumTriggers => self.num_triggers as f64,
            CostKind::SamplesTrained => self.samples_trained as f64,
            CostKind::WallClockSeconds => self.wall_clock_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub pipeline: String,
    pub status: RunStatus,
    /// Normalized configuration document.
    pub config: serde_yaml::Value,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub models: Vec<ModelRecord>,
    pub triggers: Vec<TriggerLogEntry>,
    pub costs: Costs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeResult {
    pub metric: String,
    pub variant: CompositeVariant,
    pub mapping: Vec<Option<usize>>,
    pub series: Vec<Option<f64>>,
    /// `None` when every interval was skipped or a gap was not allowed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub intervals_spec: IntervalSpec,
    pub intervals: Vec<EvaluationInterval>,
    pub matrices: Vec<EvaluationMatrix>,
    pub composites: Vec<CompositeResult>,
    /// Hash of the dataset id and the evaluation split (keys, timestamps,
    /// labels); runs are only comparable when these agree.
    pub eval_fingerprint: String,
}

impl EvaluationReport {
    pub fn composite(&self, metric: &str, variant: CompositeVariant) -> Option<&CompositeResult> {
        self.composites.iter().find(|c| c.metric == metric && c.variant == variant)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run: PipelineRun,
    pub models: Vec<ReferenceLearner>,
    pub eval: Option<EvaluationReport>,
}

pub fn make_parser(cfg: &PipelineConfig) -> Arc<dyn BytesParser> {
    Arc::new(F32LeParser { dim: cfg.model.feature_dim })
}

fn parse_rows(
    store: &SampleStore,
    keys: &[Key],
    parser: &dyn BytesParser,
    threads: usize,
) -> Result<Vec<Vec<f64>>, SupervisorError> {
    let fetched = store.fetch_ordered(keys, FetchOptions { threads, ..FetchOptions::default() })?;
    fetched
        .iter()
        .map(|s| parser.parse(&s.payload).map_err(|e| SupervisorError::Config(format!("key {}: {e}", s.key))))
        .collect()
}

/// Runs a pipeline in experiment mode. Trigger sets and models live under
/// `work_dir`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    store: Arc<SampleStore>,
    work_dir: &Path,
) -> Result<PipelineOutcome, SupervisorError> {
    let started = Instant::now();
    let parser = make_parser(cfg);
    let threads = cfg.training.loader.storage_threads;
    let (train_keys, eval_keys) =
        store.split_stream(cfg.data.split.eval_fraction, cfg.data.split.scheme, seed::sub_seed(cfg.seed, "split"))?;
    if train_keys.is_empty() {
        return Err(SupervisorError::Config("training split is empty".into()));
    }
    let batches = store.replay_keys(&train_keys, cfg.data.replay_batch_size)?;

    let mut runner = Runner::new(cfg, Arc::clone(&store), Arc::clone(&parser), work_dir)?;
    for batch in &batches {
        let features = if cfg.trigger.needs_features() {
            let keys: Vec<Key> = batch.items.iter().map(|i| i.key).collect();
            Some(parse_rows(&store, &keys, parser.as_ref(), threads)?)
        } else {
            None
        };
        runner.consume(batch, features.as_deref())?;
    }
    runner.flush()?;

    let Runner { models, records, log, .. } = runner;
    let status = if models.is_empty() { RunStatus::NoTriggers } else { RunStatus::Ok };
    let eval = if models.is_empty() {
        None
    } else {
        let model_store = ModelStore::open(&work_dir.join("models"), cfg.storage)?;
        let restored = (0..models.len() as u64)
            .map(|id| {
                let w = model_store.load(id)?;
                ReferenceLearner::from_tensor(&w.shape, &w.data)
                    .ok_or_else(|| SupervisorError::Config(format!("model {id} has an unexpected shape")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        debug_assert_eq!(restored, models);
        let ends: Vec<i64> = records.iter().map(|r| r.t_end).collect();
        Some(evaluate(cfg, &store, &eval_keys, &restored, &ends, parser.as_ref())?)
    };
    let samples_trained = records.iter().map(|r| r.samples_trained).sum();
    let run = PipelineRun {
        pipeline: cfg.name.clone(),
        status,
        config: config::to_value(cfg),
        train_samples: train_keys.len(),
        eval_samples: eval_keys.len(),
        costs: Costs {
            num_triggers: records.len() as u64,
            samples_trained,
            wall_clock_s: started.elapsed().as_secs_f64(),
        },
        models: records,
        triggers: log,
    };
    Ok(PipelineOutcome { run, models, eval })
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    store: Arc<SampleStore>,
    parser: Arc<dyn BytesParser>,
    policy: PolicyState,
    selector: SelectorState,
    selection: SelectionConfig,
    model_store: ModelStore,
    /// Stream samples not yet handed to the selector.
    pending: Vec<PoolEntry>,
    seen: u64,
    models: Vec<ReferenceLearner>,
    records: Vec<ModelRecord>,
    log: Vec<TriggerLogEntry>,
}

impl<'a> Runner<'a> {
    fn new(
        cfg: &'a PipelineConfig,
        store: Arc<SampleStore>,
        parser: Arc<dyn BytesParser>,
        work_dir: &Path,
    ) -> Result<Self, SupervisorError> {
        let tss = work_dir.join("tss");
        std::fs::create_dir_all(&tss).map_err(|source| SupervisorError::Io { path: tss.clone(), source })?;
        let selection = SelectionConfig { seed: seed::sub_seed(cfg.seed, "selector"), ..cfg.selection.clone() };
        selection.validate()?;
        let model_store = ModelStore::open(&work_dir.join("models"), cfg.storage)?;
        if !model_store.is_empty() {
            return Err(SupervisorError::Config(format!("{} already holds models", work_dir.display())));
        }
        cfg.training.validate().map_err(|e| SupervisorError::Config(e.to_string()))?;
        cfg.downsampling.validate().map_err(|e| SupervisorError::Config(e.to_string()))?;
        Ok(Self {
            cfg,
            store,
            parser,
            policy: PolicyState::new(cfg.trigger.clone())?,
            selector: SelectorState::in_memory(tss),
            selection,
            model_store,
            pending: Vec::new(),
            seen: 0,
            models: Vec::new(),
            records: Vec::new(),
            log: Vec::new(),
        })
    }

    fn flush(&mut self) -> Result<(), SupervisorError> {
        if !self.pending.is_empty() {
            self.selector.inform_samples(&self.pending)?;
            self.pending.clear();
        }
        Ok(())
    }

    fn consume(&mut self, batch: &StreamBatch, features: Option<&[Vec<f64>]>) -> Result<(), SupervisorError> {
        for (i, item) in batch.items.iter().enumerate() {
            self.seen += 1;
            self.pending.push(*item);
            let x = features.map(|f| f[i].as_slice());
            let causes = self.policy.observe(item, x, self.models.last())?;
            for cause in causes {
                self.policy.on_trigger();
                self.flush()?;
                self.fire(cause, item.timestamp)?;
            }
        }
        self.flush()
    }

    fn fire(&mut self, cause: TriggerCause, timestamp: i64) -> Result<(), SupervisorError> {
        let started = Instant::now();
        let window = self.selector.window(&self.selection)?;
        let handle = match self.selector.inform_trigger(&self.selection) {
            Ok(h) => h,
            Err(SelectorError::EmptyTrigger(_)) => {
                self.log.push(TriggerLogEntry {
                    index: self.log.len(),
                    cause,
                    sample_index: self.seen,
                    timestamp,
                    outcome: TriggerOutcome::SkippedEmpty,
                    model_id: None,
                    samples_trained: 0,
                    wall_time_s: started.elapsed().as_secs_f64(),
                });
                return Ok(());
            }
            Err(e) => return Err(e.into()),
        };
        let r = handle.trigger_id;
        let t_start = window
            .iter()
            .map(|c| self.store.entry(c.key).map(|e| e.timestamp))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .min()
            .unwrap_or(timestamp);
        let init = match self.models.last() {
            Some(m) if self.cfg.training.use_previous_model => m.clone(),
            _ => ReferenceLearner::zeros(self.cfg.model.num_classes, self.cfg.model.feature_dim),
        };
        let downsampling = DownsamplingConfig {
            seed: seed::mix(seed::sub_seed(self.cfg.seed, "downsampling"), &[u64::from(r)]),
            ..self.cfg.downsampling.clone()
        };
        let outcome = train_on_trigger(
            Arc::clone(&self.store),
            &handle,
            &self.cfg.training,
            &downsampling,
            Arc::clone(&self.parser),
            init,
            seed::mix(seed::sub_seed(self.cfg.seed, "trainer"), &[u64::from(r)]),
        )
        .map_err(|source| SupervisorError::Train { trigger: r, source })?;

        let (shape, data) = outcome.learner.to_tensor();
        let artifact = self.model_store.store(&Weights::new(shape, data)?)?;
        for (p, &files) in handle.files_per_partition.iter().enumerate() {
            for t in 0..files {
                let path = handle.dir.join(partition_file_name(r, p, t));
                std::fs::remove_file(&path).map_err(|source| SupervisorError::Io { path, source })?;
            }
        }
        self.records.push(ModelRecord {
            id: artifact.id,
            trigger_id: r,
            t_start,
            t_end: timestamp,
            num_keys: outcome.num_keys,
            samples_trained: outcome.samples_trained,
            final_loss: outcome.final_loss,
            kind: artifact.kind,
            checksum: format!("{:016x}", artifact.checksum),
        });
        self.log.push(TriggerLogEntry {
            index: self.log.len(),
            cause,
            sample_index: self.seen,
            timestamp,
            outcome: TriggerOutcome::Trained,
            model_id: Some(artifact.id),
            samples_trained: outcome.samples_trained,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        self.models.push(outcome.learner);
        Ok(())
    }
}

/// Loads the evaluation split into memory, ordered by timestamp.
pub fn load_eval_set(
    store: &SampleStore,
    eval_keys: &[Key],
    parser: &dyn BytesParser,
    threads: usize,
) -> Result<EvalSet, SupervisorError> {
    let rows = parse_rows(store, eval_keys, parser, threads)?;
    let mut ts = Vec::with_capacity(eval_keys.len());
    let mut labels = Vec::with_capacity(eval_keys.len());
    for &k in eval_keys {
        let e = store.entry(k)?;
        ts.push(e.timestamp);
        labels.push(e.label);
    }
    let features = if rows.is_empty() { Matrix::zeros(0, parser.feature_dim()) } else { Matrix::from_rows(&rows) };
    Ok(EvalSet::new(ts, features, labels)?)
}

pub fn eval_fingerprint(dataset_id: &str, store: &SampleStore, eval_keys: &[Key]) -> Result<String, SupervisorError> {
    let mut bytes = dataset_id.as_bytes().to_vec();
    for &k in eval_keys {
        let e = store.entry(k)?;
        bytes.extend_from_slice(&k.to_le_bytes());
        bytes.extend_from_slice(&e.timestamp.to_le_bytes());
        bytes.extend_from_slice(&e.label.to_le_bytes());
    }
    Ok(format!("{:016x}", crc64(&bytes)))
}

fn evaluate(
    cfg: &PipelineConfig,
    store: &SampleStore,
    eval_keys: &[Key],
    models: &[ReferenceLearner],
    model_ends: &[i64],
    parser: &dyn BytesParser,
) -> Result<EvaluationReport, SupervisorError> {
    let data = load_eval_set(store, eval_keys, parser, cfg.training.loader.storage_threads)?;
    let (t0, t1) = match (data.timestamps().first(), data.timestamps().last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(SupervisorError::Config("evaluation split is empty".into())),
    };
    let intervals = generate_intervals(&cfg.evaluation.intervals, t0, t1)?;
    let skip = SkipPolicy { skip_gaps: cfg.evaluation.skip_gaps, cutoff: None };
    let mut matrices = Vec::new();
    let mut composites = Vec::new();
    for &metric in &cfg.evaluation.metrics {
        let matrix = build_matrix(models, &intervals, &data, metric)?;
        for variant in [CompositeVariant::CurrentlyActive, CompositeVariant::CurrentlyTrained] {
            let mapping = composite_mapping(model_ends, &intervals, variant, cfg.evaluation.undefined_trained)?;
            let series = composite_series(&matrix, &mapping)?;
            let score = pipeline_score(&series, skip).ok();
            composites.push(CompositeResult { metric: metric.id(), variant, mapping, series, score });
        }
        matrices.push(matrix);
    }
    Ok(EvaluationReport {
        intervals_spec: cfg.evaluation.intervals.clone(),
        intervals,
        matrices,
        composites,
        eval_fingerprint: eval_fingerprint(&cfg.data.dataset_id, store, eval_keys)?,
    })
}
