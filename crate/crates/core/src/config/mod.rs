//! Pipeline configuration documents.
//!
//! A document is a YAML key/value tree. Parsing reports every problem at once,
//! each with the dotted path of the offending key, and fills in defaults.
//! [`dump`] writes the normalized form with every default spelled out; parsing
//! a dump gives back the same configuration.

mod duration;
mod walk;

pub use duration::{format_duration, parse_duration};

use serde::Serialize;
use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::drift::{Bandwidth, Decision, DriftConfig, WindowSpec};
use crate::evaluator::{Anchor, IntervalKind, IntervalSpec, Metric, UndefinedTrained};
use crate::model_store::{DeltaOperator, StoragePolicy};
use crate::selector::{Presampling, SelectionConfig};
use crate::storage::SplitScheme;
use crate::supervisor::TriggerPolicy;
use crate::trainer::{DownsamplingConfig, DownsamplingMode, DownsamplingPolicy, LoaderConfig, TrainingConfig};
use walk::Walker;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Error, PartialEq)]
#[error("{} configuration error(s): {}", .0.len(), .0.iter().map(|i| format!("{}: {}", i.path, i.message)).collect::<Vec<_>>().join("; "))]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub eval_fraction: f64,
    pub scheme: SplitScheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub dataset_id: String,
    /// Only `f32_le` exists: a little-endian f32 vector of `feature_dim`.
    pub bytes_parser: String,
    pub split: SplitSpec,
    pub replay_batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSpec {
    pub intervals: IntervalSpec,
    pub metrics: Vec<Metric>,
    pub undefined_trained: UndefinedTrained,
    pub skip_gaps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub name: String,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub trigger: TriggerPolicy,
    pub training: TrainingConfig,
    /// `seed` is ignored here; the pipeline seed is used instead.
    pub selection: SelectionConfig,
    pub downsampling: DownsamplingConfig,
    pub storage: StoragePolicy,
    pub evaluation: EvaluationSpec,
    pub seed: u64,
}

pub const MODEL_ID: &str = "LogisticRegression";
pub const BYTES_PARSER: &str = "f32_le";

const TRIGGER_IDS: [&str; 4] = ["DataAmountTrigger", "TimeTrigger", "PerformanceTrigger", "DataDriftTrigger"];

pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigErrors> {
    let doc: Value = serde_yaml::from_str(text)
        .map_err(|e| ConfigErrors(vec![ConfigIssue { path: "<document>".into(), message: e.to_string() }]))?;
    let mut w = Walker::default();
    let cfg = parse_root(&mut w, &doc);
    match (w.into_issues(), cfg) {
        (issues, Some(cfg)) if issues.is_empty() => Ok(cfg),
        (issues, _) => Err(ConfigErrors(issues)),
    }
}

fn parse_root(w: &mut Walker, doc: &Value) -> Option<PipelineConfig> {
    let root = w.mapping(Some(doc), "", &["pipeline", "model", "data", "trigger", "training", "model_storage", "evaluation", "seed"])?;
    let pipeline = w.mapping_or_empty(root.get("pipeline"), "pipeline", &["name"]);
    let name = w.string(pipeline, "pipeline", "name", Some("pipeline"));
    let seed = w.u64(Some(root), "", "seed", Some(0), 0, u64::MAX);

    let model = w.mapping(root.get("model"), "model", &["id", "config"]);
    let model_id = w.string(model, "model", "id", Some(MODEL_ID));
    if model_id.as_deref().is_some_and(|id| id != MODEL_ID) {
        w.issue("model.id", format!("unknown model {:?}; only {MODEL_ID} is available", model_id.unwrap()));
    }
    let mc = w.mapping(model.and_then(|m| m.get("config")), "model.config", &["num_classes", "feature_dim"]);
    let num_classes = w.u64(mc, "model.config", "num_classes", None, 2, u64::from(u32::MAX));
    let feature_dim = w.u64(mc, "model.config", "feature_dim", None, 1, u64::from(u32::MAX));

    let data = parse_data(w, root.get("data"));
    let trigger = parse_trigger(w, root.get("trigger"));
    let training = parse_training(w, root.get("training"));
    let storage = parse_storage(w, root.get("model_storage"));
    let evaluation = parse_evaluation(w, root.get("evaluation"), num_classes);

    let (training, selection, downsampling) = training?;
    Some(PipelineConfig {
        name: name?,
        model: ModelSpec { num_classes: num_classes? as usize, feature_dim: feature_dim? as usize },
        data: data?,
        trigger: trigger?,
        training,
        selection,
        downsampling,
        storage: storage?,
        evaluation: evaluation?,
        seed: seed?,
    })
}

fn parse_data(w: &mut Walker, v: Option<&Value>) -> Option<DataSpec> {
    let m = w.mapping_or_empty(v, "data", &["dataset_id", "bytes_parser_function", "split", "replay_batch_size"]);
    let dataset_id = w.string(m, "data", "dataset_id", Some("dataset"));
    let parser = w.string(m, "data", "bytes_parser_function", Some(BYTES_PARSER));
    if parser.as_deref().is_some_and(|p| p != BYTES_PARSER) {
        w.issue("data.bytes_parser_function", format!("unknown bytes parser; only {BYTES_PARSER} is available"));
    }
    let split = w.mapping_or_empty(m.and_then(|m| m.get("split")), "data.split", &["eval_fraction", "scheme"]);
    let frac = w.f64(split, "data.split", "eval_fraction", Some(0.2), |f| f > 0.0 && f < 1.0, "in (0,1)");
    let scheme = w.choice(split, "data.split", "scheme", Some("every_kth"), &["every_kth", "hash_modulo"]);
    let batch = w.u64(m, "data", "replay_batch_size", Some(256), 1, u64::from(u32::MAX));
    Some(DataSpec {
        dataset_id: dataset_id?,
        bytes_parser: parser?,
        split: SplitSpec {
            eval_fraction: frac?,
            scheme: if scheme? == "hash_modulo" { SplitScheme::HashModulo } else { SplitScheme::EveryKth },
        },
        replay_batch_size: batch? as usize,
    })
}

fn parse_trigger(w: &mut Walker, v: Option<&Value>) -> Option<TriggerPolicy> {
    let raw = w.mapping(v, "trigger", &[])?;
    let id = w.choice(Some(raw), "trigger", "id", None, &TRIGGER_IDS)?;
    let p = "trigger";
    match id.as_str() {
        "DataAmountTrigger" => {
            let m = w.mapping(v, p, &["id", "num_samples"]);
            Some(TriggerPolicy::Amount { n: w.u64(m, p, "num_samples", None, 1, u64::MAX)? })
        }
        "TimeTrigger" => {
            let m = w.mapping(v, p, &["id", "every"]);
            Some(TriggerPolicy::Time { interval: w.duration(m, p, "every", None)? })
        }
        "PerformanceTrigger" => {
            let m = w.mapping(v, p, &["id", "metric", "threshold", "window_size", "warmup_samples", "min_interval_samples"]);
            w.choice(m, p, "metric", Some("accuracy"), &["accuracy"]);
            let threshold = w.f64(m, p, "threshold", None, |t| t > 0.0 && t < 1.0, "in (0,1)");
            let window_size = w.u64(m, p, "window_size", Some(200), 1, u64::from(u32::MAX));
            let warmup = w.u64(m, p, "warmup_samples", Some(0), 0, u64::MAX);
            let min_interval = w.u64(m, p, "min_interval_samples", Some(0), 0, u64::MAX);
            Some(TriggerPolicy::Performance {
                threshold: threshold?,
                window_size: window_size? as usize,
                warmup_samples: warmup?,
                min_interval: min_interval?,
            })
        }
        _ => {
            let m = w.mapping(
                v,
                p,
                &[
                    "id",
                    "detection_interval",
                    "window_size",
                    "kernel_bandwidth",
                    "decision",
                    "use_pca",
                    "pca_dims",
                    "warmup_samples",
                    "min_interval_during_warmup",
                ],
            );
            let interval = w.u64(m, p, "detection_interval", Some(250), 1, u64::from(u32::MAX));
            let window = parse_window(w, m);
            let bandwidth = parse_bandwidth(w, m);
            let decision = parse_decision(w, m.and_then(|m| m.get("decision")));
            let use_pca = w.bool(m, p, "use_pca", Some(false));
            let pca_dims = w.u64(m, p, "pca_dims", Some(2), 1, u64::from(u32::MAX));
            let warmup = w.u64(m, p, "warmup_samples", Some(0), 0, u64::MAX);
            let cadence = w.duration(m, p, "min_interval_during_warmup", Some(1));
            Some(TriggerPolicy::Drift {
                config: DriftConfig {
                    detection_interval: interval? as usize,
                    window: window?,
                    bandwidth: bandwidth?,
                    decision: decision?,
                    use_pca: use_pca?,
                    pca_dims: pca_dims? as usize,
                },
                warmup_samples: warmup?,
                min_interval_during_warmup: cadence?,
            })
        }
    }
}

/// `window_size: 500` counts samples; `window_size: "5d"` is a time span.
fn parse_window(w: &mut Walker, m: Option<&Mapping>) -> Option<WindowSpec> {
    let path = "trigger.window_size";
    match m.and_then(|m| m.get("window_size")) {
        None => Some(WindowSpec::Samples(250)),
        Some(Value::Number(n)) => match n.as_u64() {
            Some(n) if n >= 2 => Some(WindowSpec::Samples(n as usize)),
            _ => {
                w.issue(path, "sample window must be an integer >= 2".into());
                None
            }
        },
        Some(Value::String(s)) => match parse_duration(s) {
            Ok(d) if d > 0 => Some(WindowSpec::TimeSpan(d)),
            Ok(_) => {
                w.issue(path, "time window must be positive".into());
                None
            }
            Err(e) => {
                w.issue(path, e);
                None
            }
        },
        Some(_) => {
            w.issue(path, "expected a sample count or a duration string".into());
            None
        }
    }
}

fn parse_bandwidth(w: &mut Walker, m: Option<&Mapping>) -> Option<Bandwidth> {
    let path = "trigger.kernel_bandwidth";
    match m.and_then(|m| m.get("kernel_bandwidth")) {
        None => Some(Bandwidth::MedianHeuristic),
        Some(Value::String(s)) if s == "median_heuristic" => Some(Bandwidth::MedianHeuristic),
        Some(Value::Number(n)) => match n.as_f64() {
            Some(h) if h > 0.0 && h.is_finite() => Some(Bandwidth::Fixed(h)),
            _ => {
                w.issue(path, "bandwidth must be positive".into());
                None
            }
        },
        Some(_) => {
            w.issue(path, "expected a positive number or \"median_heuristic\"".into());
            None
        }
    }
}

fn parse_decision(w: &mut Walker, v: Option<&Value>) -> Option<Decision> {
    let p = "trigger.decision";
    let raw = w.mapping(v, p, &[])?;
    let id = w.choice(Some(raw), p, "id", None, &["ThresholdDecision", "PercentileDecision"])?;
    if id == "ThresholdDecision" {
        let m = w.mapping(v, p, &["id", "threshold"]);
        let t = w.f64(m, p, "threshold", None, f64::is_finite, "finite");
        Some(Decision::Threshold { threshold: t? })
    } else {
        let m = w.mapping(v, p, &["id", "history_len", "percentile"]);
        let len = w.u64(m, p, "history_len", Some(15), 1, u64::from(u32::MAX));
        let pct = w.f64(m, p, "percentile", Some(0.05), |x| x > 0.0 && x < 1.0, "in (0,1)");
        Some(Decision::Percentile { history_len: len? as usize, percentile: pct? })
    }
}

fn parse_training(w: &mut Walker, v: Option<&Value>) -> Option<(TrainingConfig, SelectionConfig, DownsamplingConfig)> {
    let p = "training";
    let m = w.mapping_or_empty(
        v,
        p,
        &[
            "use_previous_model",
            "batch_size",
            "epochs_per_trigger",
            "learning_rate",
            "shuffle",
            "num_workers",
            "prefetch_buffer_partitions",
            "parallel_prefetch_requests",
            "storage_threads",
            "selection_strategy",
        ],
    );
    let use_prev = w.bool(m, p, "use_previous_model", Some(true));
    let batch = w.u64(m, p, "batch_size", Some(64), 1, u64::from(u32::MAX));
    let epochs = w.u64(m, p, "epochs_per_trigger", Some(1), 1, u64::from(u32::MAX));
    let lr = w.f64(m, p, "learning_rate", Some(0.1), |x| x >= 0.0 && x.is_finite(), ">= 0");
    let shuffle = w.bool(m, p, "shuffle", Some(false));
    let workers = w.u64(m, p, "num_workers", Some(1), 1, 1024);
    let prefetch = w.u64(m, p, "prefetch_buffer_partitions", Some(1), 0, 1024);
    let parallel = w.u64(m, p, "parallel_prefetch_requests", Some(1), 1, 1024);
    let storage_threads = w.u64(m, p, "storage_threads", Some(1), 1, 1024);

    let sp = "training.selection_strategy";
    let s = w.mapping_or_empty(
        m.and_then(|m| m.get("selection_strategy")),
        sp,
        &[
            "tail_triggers",
            "presampling",
            "presampling_ratio",
            "warmup_triggers",
            "partition_size",
            "writer_threads",
            "downsampling_config",
        ],
    );
    let tail = match s.and_then(|s| s.get("tail_triggers")) {
        None | Some(Value::Null) => Some(None),
        Some(_) => w.u64(s, sp, "tail_triggers", None, 0, u64::from(u32::MAX)).map(|t| Some(t as u32)),
    };
    let presampling = w.choice(s, sp, "presampling", Some("none"), &["none", "uniform", "class_balanced", "trigger_balanced"]);
    let ratio = w.f64(s, sp, "presampling_ratio", Some(1.0), |r| r > 0.0 && r <= 1.0, "in (0,1]");
    let warmup = w.u64(s, sp, "warmup_triggers", Some(0), 0, u64::from(u32::MAX));
    let partition = w.u64(s, sp, "partition_size", Some(10_000), 1, u64::from(u32::MAX));
    let writers = w.u64(s, sp, "writer_threads", Some(1), 1, 1024);

    let dp = "training.selection_strategy.downsampling_config";
    let d = w.mapping_or_empty(s.and_then(|s| s.get("downsampling_config")), dp, &["policy", "ratio", "mode", "stb_refresh_every_epochs"]);
    let policy = w.choice(
        d,
        dp,
        "policy",
        Some("none"),
        &["none", "loss", "grad_norm", "margin", "least_confidence", "entropy", "rs2_with_replacement", "rs2_without_replacement"],
    );
    let dratio = w.f64(d, dp, "ratio", Some(1.0), |r| r > 0.0 && r <= 1.0, "in (0,1]");
    let mode = w.choice(d, dp, "mode", Some("StB"), &["StB", "BtS"]);
    let refresh = w.u64(d, dp, "stb_refresh_every_epochs", Some(1), 1, u64::from(u32::MAX));
    let policy = policy.map(|p| match p.as_str() {
        "loss" => DownsamplingPolicy::Loss,
        "grad_norm" => DownsamplingPolicy::GradNorm,
        "margin" => DownsamplingPolicy::Margin,
        "least_confidence" => DownsamplingPolicy::LeastConfidence,
        "entropy" => DownsamplingPolicy::Entropy,
        "rs2_with_replacement" => DownsamplingPolicy::Rs2WithReplacement,
        "rs2_without_replacement" => DownsamplingPolicy::Rs2WithoutReplacement,
        _ => DownsamplingPolicy::None,
    });
    let mode = mode.map(|m| if m == "BtS" { DownsamplingMode::BtS } else { DownsamplingMode::StB });
    if let (Some(pol), Some(DownsamplingMode::BtS)) = (policy, mode) {
        if pol.is_rs2() {
            w.issue(&format!("{dp}.mode"), "rs2 policies require mode StB".into());
        }
    }

    let training = TrainingConfig {
        batch_size: batch? as usize,
        epochs_per_trigger: epochs? as u32,
        learning_rate: lr?,
        use_previous_model: use_prev?,
        shuffle: shuffle?,
        loader: LoaderConfig {
            num_workers: workers? as usize,
            prefetch_buffer_partitions: prefetch? as usize,
            parallel_prefetch_requests: parallel? as usize,
            storage_threads: storage_threads? as usize,
            ..LoaderConfig::default()
        },
    };
    let selection = SelectionConfig {
        tail_triggers: tail?,
        presampling: match presampling?.as_str() {
            "uniform" => Presampling::Uniform,
            "class_balanced" => Presampling::ClassBalanced,
            "trigger_balanced" => Presampling::TriggerBalanced,
            _ => Presampling::None,
        },
        presampling_ratio: ratio?,
        warmup_triggers: warmup? as u32,
        partition_size: partition? as usize,
        writer_threads: writers? as usize,
        seed: 0,
    };
    let downsampling = DownsamplingConfig {
        policy: policy?,
        ratio: dratio?,
        mode: mode?,
        stb_refresh_every_epochs: refresh? as u32,
        seed: 0,
    };
    Some((training, selection, downsampling))
}

fn parse_storage(w: &mut Walker, v: Option<&Value>) -> Option<StoragePolicy> {
    let p = "model_storage";
    let m = w.mapping_or_empty(v, p, &["full_model_strategy", "incremental_model_strategy"]);
    let fp = "model_storage.full_model_strategy";
    let full = w.mapping_or_empty(m.and_then(|m| m.get("full_model_strategy")), fp, &["name"]);
    w.choice(full, fp, "name", Some("BinaryFullModel"), &["BinaryFullModel"]);
    let ip = "model_storage.incremental_model_strategy";
    match m.and_then(|m| m.get("incremental_model_strategy")) {
        None | Some(Value::Null) => Some(StoragePolicy { full_every: 1, operator: DeltaOperator::Xor }),
        Some(inc) => {
            let inc = w.mapping(Some(inc), ip, &["name", "operator", "full_model_interval"]);
            w.choice(inc, ip, "name", Some("WeightsDifference"), &["WeightsDifference"]);
            let op = w.choice(inc, ip, "operator", Some("xor"), &["xor", "subtract"]);
            let every = w.u64(inc, ip, "full_model_interval", Some(10), 1, u64::from(u32::MAX));
            Some(StoragePolicy {
                full_every: every? as u32,
                operator: if op? == "subtract" { DeltaOperator::Subtract } else { DeltaOperator::Xor },
            })
        }
    }
}

fn parse_metric(w: &mut Walker, v: &Value, path: &str) -> Option<Metric> {
    match v {
        Value::String(s) if s == "accuracy" => Some(Metric::Accuracy),
        Value::String(s) if s == "weighted_f1" => Some(Metric::WeightedF1),
        Value::Mapping(_) => {
            let m = w.mapping(Some(v), path, &["name", "k"]);
            w.choice(m, path, "name", None, &["top_k_accuracy"])?;
            let k = w.u64(m, path, "k", None, 1, u64::from(u32::MAX))?;
            Some(Metric::TopKAccuracy { k: k as usize })
        }
        _ => {
            w.issue(path, "expected accuracy, weighted_f1 or {name: top_k_accuracy, k: <n>}".into());
            None
        }
    }
}

fn parse_evaluation(w: &mut Walker, v: Option<&Value>, num_classes: Option<u64>) -> Option<EvaluationSpec> {
    let p = "evaluation";
    let m = w.mapping_or_empty(v, p, &["intervals", "metrics", "undefined_trained", "skip_gaps"]);
    let ip = "evaluation.intervals";
    let iv = w.mapping_or_empty(m.and_then(|m| m.get("intervals")), ip, &["kind", "length", "stride", "anchor"]);
    let kind = w.choice(iv, ip, "kind", Some("tumbling"), &["tumbling", "sliding"]);
    let length = w.duration(iv, ip, "length", Some(86_400));
    let stride = match iv.and_then(|m| m.get("stride")) {
        None | Some(Value::Null) => Some(None),
        Some(_) => w.duration(iv, ip, "stride", None).map(Some),
    };
    let anchor = w.choice(iv, ip, "anchor", Some("start"), &["start", "center"]);
    let kind = kind.map(|k| if k == "sliding" { IntervalKind::Sliding } else { IntervalKind::Tumbling });
    if kind == Some(IntervalKind::Sliding) && stride == Some(None) {
        w.issue(&format!("{ip}.stride"), "sliding windows need a stride".into());
    }
    let metrics = match m.and_then(|m| m.get("metrics")) {
        None => Some(vec![Metric::Accuracy]),
        Some(Value::Sequence(items)) if !items.is_empty() => {
            let parsed: Vec<Option<Metric>> =
                items.iter().enumerate().map(|(i, it)| parse_metric(w, it, &format!("{p}.metrics[{i}]"))).collect();
            parsed.into_iter().collect::<Option<Vec<_>>>()
        }
        Some(_) => {
            w.issue(&format!("{p}.metrics"), "expected a non-empty list".into());
            None
        }
    };
    if let (Some(ms), Some(c)) = (&metrics, num_classes) {
        for (i, metric) in ms.iter().enumerate() {
            if let Err(e) = metric.validate(c as usize) {
                w.issue(&format!("{p}.metrics[{i}]"), e.to_string());
            }
        }
    }
    let undefined = w.choice(m, p, "undefined_trained", Some("first"), &["first", "last"]);
    let skip = w.bool(m, p, "skip_gaps", Some(true));
    Some(EvaluationSpec {
        intervals: IntervalSpec {
            kind: kind?,
            length: length?,
            stride: stride?,
            anchor: if anchor? == "center" { Anchor::Center } else { Anchor::Start },
        },
        metrics: metrics?,
        undefined_trained: if undefined? == "last" { UndefinedTrained::Last } else { UndefinedTrained::First },
        skip_gaps: skip?,
    })
}

fn map(entries: Vec<(&str, Value)>) -> Value {
    let mut m = Mapping::new();
    for (k, v) in entries {
        m.insert(Value::from(k), v);
    }
    Value::Mapping(m)
}

fn f(v: f64) -> Value {
    Value::from(v)
}

fn u(v: impl Into<u64>) -> Value {
    Value::from(v.into())
}

fn s(v: &str) -> Value {
    Value::from(v)
}

/// Normalized document with every default materialized.
pub fn to_value(c: &PipelineConfig) -> Value {
    let trigger = match &c.trigger {
        TriggerPolicy::Amount { n } => map(vec![("id", s("DataAmountTrigger")), ("num_samples", u(*n))]),
        TriggerPolicy::Time { interval } => map(vec![("id", s("TimeTrigger")), ("every", s(&format_duration(*interval)))]),
        TriggerPolicy::Performance { threshold, window_size, warmup_samples, min_interval } => map(vec![
            ("id", s("PerformanceTrigger")),
            ("metric", s("accuracy")),
            ("threshold", f(*threshold)),
            ("window_size", u(*window_size as u64)),
            ("warmup_samples", u(*warmup_samples)),
            ("min_interval_samples", u(*min_interval)),
        ]),
        TriggerPolicy::Drift { config, warmup_samples, min_interval_during_warmup } => {
            let window = match config.window {
                WindowSpec::Samples(n) => u(n as u64),
                WindowSpec::TimeSpan(d) => s(&format_duration(d)),
            };
            let bandwidth = match config.bandwidth {
                Bandwidth::MedianHeuristic => s("median_heuristic"),
                Bandwidth::Fixed(h) => f(h),
            };
            let decision = match config.decision {
                Decision::Threshold { threshold } => map(vec![("id", s("ThresholdDecision")), ("threshold", f(threshold))]),
                Decision::Percentile { history_len, percentile } => map(vec![
                    ("id", s("PercentileDecision")),
                    ("history_len", u(history_len as u64)),
                    ("percentile", f(percentile)),
                ]),
            };
            map(vec![
                ("id", s("DataDriftTrigger")),
                ("detection_interval", u(config.detection_interval as u64)),
                ("window_size", window),
                ("kernel_bandwidth", bandwidth),
                ("decision", decision),
                ("use_pca", Value::from(config.use_pca)),
                ("pca_dims", u(config.pca_dims as u64)),
                ("warmup_samples", u(*warmup_samples)),
                ("min_interval_during_warmup", s(&format_duration(*min_interval_during_warmup))),
            ])
        }
    };
    let t = &c.training;
    let sel = &c.selection;
    let ds = &c.downsampling;
    let presampling = match sel.presampling {
        Presampling::None => "none",
        Presampling::Uniform => "uniform",
        Presampling::ClassBalanced => "class_balanced",
        Presampling::TriggerBalanced => "trigger_balanced",
    };
    let policy = serde_yaml::to_value(ds.policy).expect("policy serializes");
    let mode = if ds.mode == DownsamplingMode::BtS { "BtS" } else { "StB" };
    let metrics: Vec<Value> = c
        .evaluation
        .metrics
        .iter()
        .map(|m| match m {
            Metric::Accuracy => s("accuracy"),
            Metric::WeightedF1 => s("weighted_f1"),
            Metric::TopKAccuracy { k } => map(vec![("name", s("top_k_accuracy")), ("k", u(*k as u64))]),
        })
        .collect();
    let iv = &c.evaluation.intervals;
    let storage = if c.storage.full_every == 1 && c.storage.operator == DeltaOperator::Xor {
        map(vec![("full_model_strategy", map(vec![("name", s("BinaryFullModel"))])), ("incremental_model_strategy", Value::Null)])
    } else {
        map(vec![
            ("full_model_strategy", map(vec![("name", s("BinaryFullModel"))])),
            (
                "incremental_model_strategy",
                map(vec![
                    ("name", s("WeightsDifference")),
                    ("operator", s(if c.storage.operator == DeltaOperator::Subtract { "subtract" } else { "xor" })),
                    ("full_model_interval", u(c.storage.full_every)),
                ]),
            ),
        ])
    };
    map(vec![
        ("pipeline", map(vec![("name", s(&c.name))])),
        (
            "model",
            map(vec![
                ("id", s(MODEL_ID)),
                (
                    "config",
                    map(vec![("num_classes", u(c.model.num_classes as u64)), ("feature_dim", u(c.model.feature_dim as u64))]),
                ),
            ]),
        ),
        (
            "data",
            map(vec![
                ("dataset_id", s(&c.data.dataset_id)),
                ("bytes_parser_function", s(&c.data.bytes_parser)),
                (
                    "split",
                    map(vec![
                        ("eval_fraction", f(c.data.split.eval_fraction)),
                        ("scheme", s(if c.data.split.scheme == SplitScheme::HashModulo { "hash_modulo" } else { "every_kth" })),
                    ]),
                ),
                ("replay_batch_size", u(c.data.replay_batch_size as u64)),
            ]),
        ),
        ("trigger", trigger),
        (
            "training",
            map(vec![
                ("use_previous_model", Value::from(t.use_previous_model)),
                ("batch_size", u(t.batch_size as u64)),
                ("epochs_per_trigger", u(t.epochs_per_trigger)),
                ("learning_rate", f(t.learning_rate)),
                ("shuffle", Value::from(t.shuffle)),
                ("num_workers", u(t.loader.num_workers as u64)),
                ("prefetch_buffer_partitions", u(t.loader.prefetch_buffer_partitions as u64)),
                ("parallel_prefetch_requests", u(t.loader.parallel_prefetch_requests as u64)),
                ("storage_threads", u(t.loader.storage_threads as u64)),
                (
                    "selection_strategy",
                    map(vec![
                        ("tail_triggers", sel.tail_triggers.map_or(Value::Null, u)),
                        ("presampling", s(presampling)),
                        ("presampling_ratio", f(sel.presampling_ratio)),
                        ("warmup_triggers", u(sel.warmup_triggers)),
                        ("partition_size", u(sel.partition_size as u64)),
                        ("writer_threads", u(sel.writer_threads as u64)),
                        (
                            "downsampling_config",
                            map(vec![
                                ("policy", policy),
                                ("ratio", f(ds.ratio)),
                                ("mode", s(mode)),
                                ("stb_refresh_every_epochs", u(ds.stb_refresh_every_epochs)),
                            ]),
                        ),
                    ]),
                ),
            ]),
        ),
        ("model_storage", storage),
        (
            "evaluation",
            map(vec![
                (
                    "intervals",
                    map(vec![
                        ("kind", s(if iv.kind == IntervalKind::Sliding { "sliding" } else { "tumbling" })),
                        ("length", s(&format_duration(iv.length))),
                        ("stride", iv.stride.map_or(Value::Null, |d| s(&format_duration(d)))),
                        ("anchor", s(if iv.anchor == Anchor::Center { "center" } else { "start" })),
                    ]),
                ),
                ("metrics", Value::Sequence(metrics)),
                ("undefined_trained", s(if c.evaluation.undefined_trained == UndefinedTrained::Last { "last" } else { "first" })),
                ("skip_gaps", Value::from(c.evaluation.skip_gaps)),
            ]),
        ),
        ("seed", u(c.seed)),
    ])
}

pub fn dump(c: &PipelineConfig) -> String {
    serde_yaml::to_string(&to_value(c)).expect("config serializes")
}
