use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SupervisorError;
use crate::drift::{DriftConfig, DriftDetector};
use crate::storage::{StreamBatch, StreamItem};
use crate::trainer::ReferenceLearner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerPolicy {
    Amount { n: u64 },
    Time { interval: i64 },
    Performance {
        /// Rolling accuracy below this fires.
        threshold: f64,
        window_size: usize,
        warmup_samples: u64,
        /// Samples that must pass after a trigger before the next one.
        min_interval: u64,
    },
    Drift {
        config: DriftConfig,
        warmup_samples: u64,
        /// Time cadence of the triggers fired during warmup.
        min_interval_during_warmup: i64,
    },
}

impl TriggerPolicy {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Amount { n } if *n == 0 => Err("num_samples must be >= 1".into()),
            Self::Time { interval } if *interval <= 0 => Err("interval must be positive".into()),
            Self::Performance { threshold, window_size, .. } => {
                if !(*threshold > 0.0 && *threshold < 1.0) {
                    Err(format!("threshold {threshold} must lie in (0,1)"))
                } else if *window_size == 0 {
                    Err("window_size must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            Self::Drift { config, min_interval_during_warmup, .. } => {
                config.validate().map_err(|e| e.to_string())?;
                if *min_interval_during_warmup <= 0 {
                    return Err("min_interval_during_warmup must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether the policy looks at sample features.
    pub fn needs_features(&self) -> bool {
        matches!(self, Self::Performance { .. } | Self::Drift { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCause {
    Amount,
    Time,
    Performance,
    Drift,
    DriftWarmup,
}

/// Per-sample evaluation state of a trigger policy.
#[derive(Debug, Clone)]
pub struct PolicyState {
    policy: TriggerPolicy,
    seen: u64,
    last_ts: Option<i64>,
    /// Next time boundary (time policy) or warmup cadence point (drift).
    next_boundary: Option<i64>,
    correct: VecDeque<bool>,
    last_trigger_at: Option<u64>,
    detector: Option<DriftDetector>,
}

impl PolicyState {
    pub fn new(policy: TriggerPolicy) -> Result<Self, SupervisorError> {
        policy.validate().map_err(SupervisorError::Config)?;
        let detector = match &policy {
            TriggerPolicy::Drift { config, .. } => Some(DriftDetector::new(config.clone())?),
            _ => None,
        };
        Ok(Self {
            policy,
            seen: 0,
            last_ts: None,
            next_boundary: None,
            correct: VecDeque::new(),
            last_trigger_at: None,
            detector,
        })
    }

    pub fn policy(&self) -> &TriggerPolicy {
        &self.policy
    }

    /// Number of samples observed so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Feeds one sample and returns the triggers it causes, in order. Time
    /// triggers repeat once per boundary crossed, so a long gap yields
    /// several triggers at the same sample.
    pub fn observe(
        &mut self,
        item: &StreamItem,
        features: Option<&[f64]>,
        model: Option<&ReferenceLearner>,
    ) -> Result<Vec<TriggerCause>, SupervisorError> {
        self.seen += 1;
        let seen = self.seen;
        if let Some(prev) = self.last_ts {
            if item.timestamp < prev {
                return Err(SupervisorError::Config(format!("stream not ordered at sample {seen}")));
            }
        }
        self.last_ts = Some(item.timestamp);
        let fired = match &self.policy {
            TriggerPolicy::Amount { n } => {
                if seen.is_multiple_of(*n) {
                    vec![TriggerCause::Amount]
                } else {
                    vec![]
                }
            }
            TriggerPolicy::Time { interval } => {
                let interval = *interval;
                let boundary = self.next_boundary.get_or_insert(item.timestamp + interval);
                let mut out = Vec::new();
                while item.timestamp >= *boundary {
                    out.push(TriggerCause::Time);
                    *boundary += interval;
                }
                out
            }
            TriggerPolicy::Performance { threshold, window_size, warmup_samples, min_interval } => {
                let x = need(features)?;
                let ok = model.is_some_and(|m| m.predict(x) as i64 == item.label);
                self.correct.push_back(ok);
                if self.correct.len() > *window_size {
                    self.correct.pop_front();
                }
                let full = self.correct.len() == *window_size;
                let accuracy = self.correct.iter().filter(|c| **c).count() as f64 / self.correct.len() as f64;
                let warm = seen > *warmup_samples;
                let spaced = self.last_trigger_at.is_none_or(|t| seen - t >= *min_interval);
                if full && warm && spaced && accuracy < *threshold {
                    vec![TriggerCause::Performance]
                } else {
                    vec![]
                }
            }
            TriggerPolicy::Drift { warmup_samples, min_interval_during_warmup, .. } => {
                let x = need(features)?;
                let detector = self.detector.as_mut().expect("drift detector");
                let eval = detector.observe(item.timestamp, x, model)?;
                if seen <= *warmup_samples {
                    let cadence = *min_interval_during_warmup;
                    let boundary = self.next_boundary.get_or_insert(item.timestamp + cadence);
                    if item.timestamp >= *boundary {
                        while item.timestamp >= *boundary {
                            *boundary += cadence;
                        }
                        vec![TriggerCause::DriftWarmup]
                    } else {
                        vec![]
                    }
                } else if eval.is_some_and(|e| e.fire) {
                    vec![TriggerCause::Drift]
                } else {
                    vec![]
                }
            }
        };
        Ok(fired)
    }

    /// Bookkeeping after a trigger fired at the current sample.
    pub fn on_trigger(&mut self) {
        self.last_trigger_at = Some(self.seen);
        match &self.policy {
            TriggerPolicy::Performance { .. } => self.correct.clear(),
            TriggerPolicy::Drift { .. } => {
                if let Some(d) = self.detector.as_mut() {
                    d.reset_reference();
                }
            }
            _ => {}
        }
    }

    /// Evaluates a whole batch with a fixed model; returns `(index in batch,
    /// cause)` for each trigger.
    pub fn evaluate_batch(
        &mut self,
        batch: &StreamBatch,
        features: Option<&[Vec<f64>]>,
        model: Option<&ReferenceLearner>,
    ) -> Result<Vec<(usize, TriggerCause)>, SupervisorError> {
        let mut out = Vec::new();
        for (i, item) in batch.items.iter().enumerate() {
            let x = features.map(|f| f[i].as_slice());
            for cause in self.observe(item, x, model)? {
                self.on_trigger();
                out.push((i, cause));
            }
        }
        Ok(out)
    }
}

fn need(features: Option<&[f64]>) -> Result<&[f64], SupervisorError> {
    features.ok_or_else(|| SupervisorError::Config("policy needs sample features".into()))
}
