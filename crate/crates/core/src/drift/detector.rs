use std::collections::VecDeque;

use super::{embed, mmd2, DecisionState, DriftConfig, DriftError, Pca, WindowSpec};
use crate::matrix::Matrix;
use crate::trainer::ReferenceLearner;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEvaluation {
    pub score: f64,
    pub fire: bool,
}

/// Sliding current window, reference window and decision history.
///
/// Windows hold raw features; both are embedded with the model passed to
/// [`DriftDetector::observe`] at evaluation time, so the two windows are
/// always compared in the same embedding space.
#[derive(Debug, Clone)]
pub struct DriftDetector {
    config: DriftConfig,
    current: VecDeque<(i64, Vec<f64>)>,
    reference: Option<Vec<Vec<f64>>>,
    decision: DecisionState,
    since_eval: usize,
}

impl DriftDetector {
    pub fn new(config: DriftConfig) -> Result<Self, DriftError> {
        config.validate()?;
        Ok(Self { config, current: VecDeque::new(), reference: None, decision: DecisionState::default(), since_eval: 0 })
    }

    pub fn config(&self) -> &DriftConfig {
        &self.config
    }

    pub fn history(&self) -> &VecDeque<f64> {
        &self.decision.history
    }

    pub fn has_reference(&self) -> bool {
        self.reference.is_some()
    }

    /// Adds one sample. Every `detection_interval` samples the windows are
    /// compared; the first comparison only installs the reference window.
    pub fn observe(
        &mut self,
        timestamp: i64,
        features: &[f64],
        model: Option<&ReferenceLearner>,
    ) -> Result<Option<DriftEvaluation>, DriftError> {
        self.current.push_back((timestamp, features.to_vec()));
        match self.config.window {
            WindowSpec::Samples(n) => {
                while self.current.len() > n {
                    self.current.pop_front();
                }
            }
            WindowSpec::TimeSpan(span) => {
                while self.current.front().is_some_and(|(t, _)| *t <= timestamp - span) {
                    self.current.pop_front();
                }
            }
        }
        self.since_eval += 1;
        if self.since_eval < self.config.detection_interval {
            return Ok(None);
        }
        self.since_eval = 0;
        if self.current.len() < 2 {
            return Ok(None);
        }
        let Some(reference) = &self.reference else {
            self.reset_reference();
            return Ok(None);
        };
        if reference.len() < 2 {
            self.reset_reference();
            return Ok(None);
        }
        let score = self.score(model)?;
        let fire = self.decision.decide(score, &self.config.decision);
        Ok(Some(DriftEvaluation { score, fire }))
    }

    /// Makes the current window the new reference; called on every trigger.
    pub fn reset_reference(&mut self) {
        self.reference = Some(self.current.iter().map(|(_, x)| x.clone()).collect());
    }

    fn score(&self, model: Option<&ReferenceLearner>) -> Result<f64, DriftError> {
        let reference = self.reference.as_ref().expect("reference installed");
        let x = embed(model, &Matrix::from_rows(reference))?;
        let cur: Vec<&[f64]> = self.current.iter().map(|(_, v)| v.as_slice()).collect();
        let y = embed(model, &Matrix::from_rows(&cur))?;
        let (x, y) = if self.config.use_pca {
            let pca = Pca::fit(&x.vstack(&y), self.config.pca_dims)?;
            (pca.project(&x)?, pca.project(&y)?)
        } else {
            (x, y)
        };
        mmd2(&x, &y, self.config.bandwidth)
    }
}
