use cotrain::config::{dump, parse_config, parse_duration};
use cotrain::drift::{Bandwidth, Decision, WindowSpec};
use cotrain::evaluator::Metric;
use cotrain::model_store::DeltaOperator;
use cotrain::selector::Presampling;
use cotrain::supervisor::TriggerPolicy;
use proptest::prelude::*;

const MINIMAL: &str = "
model:
  config: {num_classes: 42, feature_dim: 16}
trigger:
  id: DataAmountTrigger
  num_samples: 100
";

#[test]
fn listing_values() {
    let doc = "
model:
  id: LogisticRegression
  config:
    num_classes: 42
    feature_dim: 16
data:
  dataset_id: mnist
  bytes_parser_function: f32_le
trigger:
  id: DataAmountTrigger
  num_samples: 100
training:
  use_previous_model: True
  batch_size: 1234
  selection_strategy:
    tail_triggers: 0
model_storage:
  full_model_strategy:
    name: BinaryFullModel
  incremental_model_strategy:
    name: WeightsDifference
";
    let cfg = parse_config(doc).unwrap();
    assert_eq!(cfg.trigger, TriggerPolicy::Amount { n: 100 });
    assert_eq!(cfg.model.num_classes, 42);
    assert_eq!(cfg.training.batch_size, 1234);
    assert!(cfg.training.use_previous_model);
    assert_eq!(cfg.selection.tail_triggers, Some(0));
    assert_eq!(cfg.storage.operator, DeltaOperator::Xor);
    assert_eq!(cfg.storage.full_every, 10);
    assert_eq!(cfg.data.dataset_id, "mnist");
}

#[test]
fn minimal_document_materializes_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    let out = dump(&cfg);
    for key in [
        "replay_batch_size",
        "eval_fraction",
        "epochs_per_trigger",
        "prefetch_buffer_partitions",
        "presampling_ratio",
        "stb_refresh_every_epochs",
        "full_model_strategy",
        "undefined_trained",
        "skip_gaps",
        "seed",
    ] {
        assert!(out.contains(key), "{key} missing from dump:\n{out}");
    }
    assert_eq!(cfg.selection.tail_triggers, None);
    assert_eq!(cfg.storage.full_every, 1);
    assert_eq!(cfg.evaluation.metrics, vec![Metric::Accuracy]);
    let again = parse_config(&out).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(dump(&again), out);
}

#[test]
fn range_error_names_the_path() {
    let doc = format!("{MINIMAL}training:\n  selection_strategy:\n    presampling_ratio: 1.5\n");
    let err = parse_config(&doc).unwrap_err();
    assert_eq!(err.0.len(), 1);
    assert_eq!(err.0[0].path, "training.selection_strategy.presampling_ratio");
}

#[test]
fn all_violations_are_listed() {
    let doc = "
model:
  config: {num_classes: 1, feature_dim: 0, colour: red}
trigger: {id: DataAmountTrigger, num_samples: 0}
training:
  batch_size: -3
  learning_rate: fast
  selection_strategy: {presampling: sometimes}
evaluation:
  metrics: [accuracy, {name: top_k_accuracy, k: 5}]
bogus: 1
";
    let err = parse_config(doc).unwrap_err();
    let paths: Vec<&str> = err.0.iter().map(|i| i.path.as_str()).collect();
    for p in [
        "bogus",
        "model.config.colour",
        "model.config.num_classes",
        "model.config.feature_dim",
        "trigger.num_samples",
        "training.batch_size",
        "training.learning_rate",
        "training.selection_strategy.presampling",
    ] {
        assert!(paths.contains(&p), "{p} not reported: {paths:?}");
    }
}

#[test]
fn top_k_is_checked_against_classes() {
    let doc = "
model:
  config: {num_classes: 3, feature_dim: 2}
trigger: {id: DataAmountTrigger, num_samples: 5}
evaluation:
  metrics: [{name: top_k_accuracy, k: 5}]
";
    let err = parse_config(doc).unwrap_err();
    assert_eq!(err.0[0].path, "evaluation.metrics[0]");
}

#[test]
fn drift_trigger_document() {
    let doc = "
model:
  config: {num_classes: 2, feature_dim: 8}
trigger:
  id: DataDriftTrigger
  detection_interval: 250
  window_size: 250
  decision: {id: PercentileDecision, history_len: 15, percentile: 0.05}
  warmup_samples: 1000
  min_interval_during_warmup: 3y
";
    let cfg = parse_config(doc).unwrap();
    let TriggerPolicy::Drift { config, warmup_samples, min_interval_during_warmup } = &cfg.trigger else {
        panic!("not a drift trigger")
    };
    assert_eq!(config.window, WindowSpec::Samples(250));
    assert_eq!(config.bandwidth, Bandwidth::MedianHeuristic);
    assert_eq!(config.decision, Decision::Percentile { history_len: 15, percentile: 0.05 });
    assert_eq!(*warmup_samples, 1000);
    assert_eq!(*min_interval_during_warmup, 3 * 365 * 86_400);
    assert_eq!(parse_config(&dump(&cfg)).unwrap(), cfg);
}

#[test]
fn rs2_with_batch_mode_is_rejected() {
    let doc = format!(
        "{MINIMAL}training:\n  selection_strategy:\n    downsampling_config: {{policy: rs2_with_replacement, ratio: 0.5, mode: BtS}}\n"
    );
    let err = parse_config(&doc).unwrap_err();
    assert_eq!(err.0[0].path, "training.selection_strategy.downsampling_config.mode");
}

#[test]
fn durations() {
    assert_eq!(parse_duration("1y"), Ok(31_536_000));
    assert_eq!(parse_duration("36h"), Ok(129_600));
    assert!(parse_duration("y").is_err());
}

fn trigger_doc() -> impl Strategy<Value = String> {
    prop_oneof![
        (1u64..10_000).prop_map(|n| format!("{{id: DataAmountTrigger, num_samples: {n}}}")),
        (1i64..1000, prop::sample::select(vec!["s", "m", "h", "d", "w", "y"]))
            .prop_map(|(n, u)| format!("{{id: TimeTrigger, every: {n}{u}}}")),
        (0.01f64..0.99, 1usize..500, 0u64..100, 0u64..100).prop_map(|(t, w, wu, mi)| format!(
            "{{id: PerformanceTrigger, threshold: {t}, window_size: {w}, warmup_samples: {wu}, min_interval_samples: {mi}}}"
        )),
        (1usize..500, 2usize..500, prop::bool::ANY, 0.1f64..5.0, 1usize..20, 0.01f64..0.99).prop_map(
            |(i, w, median, h, len, p)| {
                let bw = if median { "median_heuristic".to_string() } else { format!("{h}") };
                format!(
                    "{{id: DataDriftTrigger, detection_interval: {i}, window_size: {w}, kernel_bandwidth: {bw}, \
                     decision: {{id: PercentileDecision, history_len: {len}, percentile: {p}}}, use_pca: true, pca_dims: 2}}"
                )
            }
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_dump_parse_is_a_fixed_point(
        trigger in trigger_doc(),
        tail in prop::option::of(0u32..5),
        presampling in prop::sample::select(vec!["none", "uniform", "class_balanced", "trigger_balanced"]),
        ratio in 0.05f64..1.0,
        policy in prop::sample::select(vec!["none", "loss", "margin", "entropy", "rs2_without_replacement"]),
        every in 1u32..6,
        subtract in prop::bool::ANY,
        sliding in prop::bool::ANY,
        seed in 0u64..u64::MAX,
    ) {
        let tail = tail.map_or("null".to_string(), |t| t.to_string());
        let op = if subtract { "subtract" } else { "xor" };
        let intervals = if sliding { "{kind: sliding, length: 2d, stride: 12h, anchor: center}" } else { "{length: 1w}" };
        let doc = format!(
            "model:\n  config: {{num_classes: 4, feature_dim: 3}}\ntrigger: {trigger}\ntraining:\n  selection_strategy:\n    \
             tail_triggers: {tail}\n    presampling: {presampling}\n    presampling_ratio: {ratio}\n    \
             downsampling_config: {{policy: {policy}, ratio: {ratio}}}\nmodel_storage:\n  incremental_model_strategy:\n    \
             operator: {op}\n    full_model_interval: {every}\nevaluation:\n  intervals: {intervals}\n  \
             metrics: [accuracy, weighted_f1, {{name: top_k_accuracy, k: 2}}]\nseed: {seed}\n"
        );
        let first = parse_config(&doc).unwrap();
        let text = dump(&first);
        let second = parse_config(&text).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(dump(&second), text);
        if presampling == "uniform" {
            prop_assert_eq!(first.selection.presampling, Presampling::Uniform);
        }
    }
}
