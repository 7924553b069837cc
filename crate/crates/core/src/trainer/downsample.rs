//! Downsampling: selection driven by forward-pass scores, either per batch
//! (batch-then-sample) or over the whole trigger training set
//! (sample-then-batch).

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scores::ScoreKind;
use super::TrainError;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsamplingPolicy {
    #[default]
    None,
    Loss,
    GradNorm,
    Margin,
    LeastConfidence,
    Entropy,
    Rs2WithReplacement,
    Rs2WithoutReplacement,
}

impl DownsamplingPolicy {
    pub fn score_kind(self) -> Option<ScoreKind> {
        match self {
            Self::Loss => Some(ScoreKind::Loss),
            Self::GradNorm => Some(ScoreKind::GradNorm),
            Self::Margin => Some(ScoreKind::Margin),
            Self::LeastConfidence => Some(ScoreKind::LeastConfidence),
            Self::Entropy => Some(ScoreKind::Entropy),
            Self::None | Self::Rs2WithReplacement | Self::Rs2WithoutReplacement => None,
        }
    }

    pub fn is_rs2(self) -> bool {
        matches!(self, Self::Rs2WithReplacement | Self::Rs2WithoutReplacement)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DownsamplingMode {
    #[default]
    StB,
    BtS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownsamplingConfig {
    pub policy: DownsamplingPolicy,
    pub ratio: f64,
    pub mode: DownsamplingMode,
    pub stb_refresh_every_epochs: u32,
    pub seed: u64,
}

impl Default for DownsamplingConfig {
    fn default() -> Self {
        Self { policy: DownsamplingPolicy::None, ratio: 1.0, mode: DownsamplingMode::StB, stb_refresh_every_epochs: 1, seed: 0 }
    }
}

impl DownsamplingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        check_ratio(self.ratio)?;
        if self.policy.is_rs2() && self.mode == DownsamplingMode::BtS {
            return Err(TrainError::InvalidConfig("rs2 policies only run in StB mode".into()));
        }
        if self.stb_refresh_every_epochs == 0 {
            return Err(TrainError::InvalidConfig("stb_refresh_every_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Whether any downsampling happens at all.
    pub fn is_active(&self) -> bool {
        self.policy != DownsamplingPolicy::None
    }
}

fn check_ratio(ratio: f64) -> Result<(), TrainError> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(TrainError::InvalidConfig(format!("downsampling ratio {ratio} not in (0,1]")))
    }
}

pub(crate) fn budget(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).floor() as usize).min(n)
}

/// Selects `k` of the scored items. Returns `(index, weight)` in ascending
/// index order.
///
/// Loss and gradient-norm draw without replacement with probability
/// proportional to the score and weight each pick by `1/(N·p_i)`; the
/// uncertainty policies take the deterministic top-k.
pub fn select_indices(scores: &[f64], kind: ScoreKind, k: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let n = scores.len();
    let k = k.min(n);
    if k == n {
        return (0..n).map(|i| (i, 1.0)).collect();
    }
    let mut picked: Vec<(usize, f64)> = match kind {
        ScoreKind::Loss | ScoreKind::GradNorm => proportional_without_replacement(scores, k, rng),
        ScoreKind::Margin | ScoreKind::LeastConfidence => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            idx.into_iter().take(k).map(|i| (i, 1.0)).collect()
        }
        ScoreKind::Entropy => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            idx.into_iter().take(k).map(|i| (i, 1.0)).collect()
        }
    };
    picked.sort_unstable_by_key(|p| p.0);
    picked
}

/// Weighted sampling without replacement via exponential keys
/// (`ln(u)/s_i`, largest first), which is distributed like successive
/// proportional draws. Zero-score items come after every positive one, in
/// random order.
fn proportional_without_replacement(scores: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let n = scores.len();
    let total: f64 = scores.iter().map(|s| s.max(0.0)).sum();
    let mut keyed: Vec<(bool, f64, usize)> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            if s > 0.0 && total > 0.0 {
                (true, u.ln() / s, i)
            } else {
                (false, u, i)
            }
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    keyed
        .into_iter()
        .take(k)
        .map(|(positive, _, i)| {
            let w = if positive { total / (n as f64 * scores[i]) } else { 1.0 };
            (i, w)
        })
        .collect()
}

/// Batch-then-sample selection of `floor(ratio·|batch|)` items.
pub fn downsample_bts(
    scores: &[f64],
    kind: ScoreKind,
    ratio: f64,
    seed: u64,
) -> Result<Vec<(usize, f64)>, TrainError> {
    check_ratio(ratio)?;
    let mut rng = seed::rng(seed);
    Ok(select_indices(scores, kind, budget(ratio, scores.len()), &mut rng))
}

/// Sample-then-batch selector over a pool of `n` items. Score-based policies
/// select from scores supplied by the caller; the RS2 variants keep their own
/// state across epochs.
#[derive(Debug)]
pub struct StbSelector {
    policy: DownsamplingPolicy,
    n: usize,
    k: usize,
    rng: ChaCha8Rng,
    /// RS2 without replacement: current permutation and cursor.
    order: Vec<usize>,
    cursor: usize,
}

impl StbSelector {
    pub fn new(policy: DownsamplingPolicy, n: usize, ratio: f64, seed: u64) -> Result<Self, TrainError> {
        check_ratio(ratio)?;
        let mut rng = seed::rng(seed);
        let mut order: Vec<usize> = (0..n).collect();
        if policy == DownsamplingPolicy::Rs2WithoutReplacement {
            order.shuffle(&mut rng);
        }
        Ok(Self { policy, n, k: budget(ratio, n), rng, order, cursor: 0 })
    }

    pub fn budget(&self) -> usize {
        self.k
    }

    /// Selection for the next epoch. `scores` is required for score-based
    /// policies and ignored otherwise.
    pub fn next_epoch(&mut self, scores: Option<&[f64]>) -> Result<Vec<(usize, f64)>, TrainError> {
        match self.policy {
            DownsamplingPolicy::None => Ok((0..self.n).map(|i| (i, 1.0)).collect()),
            DownsamplingPolicy::Rs2WithReplacement => {
                let mut idx = index::sample(&mut self.rng, self.n, self.k).into_vec();
                idx.sort_unstable();
                Ok(idx.into_iter().map(|i| (i, 1.0)).collect())
            }
            DownsamplingPolicy::Rs2WithoutReplacement => Ok(self.next_rs2_chunk()),
            p => {
                let kind = p.score_kind().expect("score-based policy");
                let scores = scores.ok_or_else(|| TrainError::InvalidConfig("scores required for this policy".into()))?;
                if scores.len() != self.n {
                    return Err(TrainError::Dimension { expected: self.n, got: scores.len() });
                }
                Ok(select_indices(scores, kind, self.k, &mut self.rng))
            }
        }
    }

    fn next_rs2_chunk(&mut self) -> Vec<(usize, f64)> {
        let mut taken: Vec<usize> = Vec::with_capacity(self.k);
        let left = self.n - self.cursor;
        if left >= self.k {
            taken.extend_from_slice(&self.order[self.cursor..self.cursor + self.k]);
            self.cursor += self.k;
        } else {
            // finish this pass, then start a fresh permutation in which the
            // items just used come last
            taken.extend_from_slice(&self.order[self.cursor..]);
            let mut rest: Vec<usize> = self.order[..self.cursor].to_vec();
            rest.shuffle(&mut self.rng);
            let need = self.k - taken.len();
            let mut next = rest;
            next.extend_from_slice(&taken);
            taken.extend_from_slice(&next[..need]);
            self.order = next;
            self.cursor = need;
        }
        taken.sort_unstable();
        taken.into_iter().map(|i| (i, 1.0)).collect()
    }
}

/// Whole-pool selection for a single epoch.
pub fn downsample_stb(
    scores: &[f64],
    policy: DownsamplingPolicy,
    ratio: f64,
    seed: u64,
) -> Result<Vec<(usize, f64)>, TrainError> {
    let mut sel = StbSelector::new(policy, scores.len(), ratio, seed)?;
    sel.next_epoch(Some(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_ratio_keeps_everything() {
        let out = downsample_bts(&[0.3, 0.1, 0.2], ScoreKind::Loss, 1.0, 0).unwrap();
        assert_eq!(out, vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
    }

    #[test]
    fn margin_takes_lowest() {
        let out = downsample_bts(&[0.8, 0.1, 0.5], ScoreKind::Margin, 2.0 / 3.0, 0).unwrap();
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2]);
        let out = downsample_bts(&[0.8, 0.1, 0.5], ScoreKind::Entropy, 2.0 / 3.0, 0).unwrap();
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let out = downsample_bts(&[0.5, 0.5, 0.5, 0.1], ScoreKind::LeastConfidence, 0.5, 0).unwrap();
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 3]);
    }

    #[test]
    fn zero_scores_fall_back_to_uniform() {
        let mut hits = [0usize; 4];
        for s in 0..4000 {
            let out = downsample_bts(&[0.0; 4], ScoreKind::Loss, 0.25, s).unwrap();
            assert_eq!(out[0].1, 1.0);
            hits[out[0].0] += 1;
        }
        assert!(hits.iter().all(|&h| (800..1200).contains(&h)), "{hits:?}");
    }

    #[test]
    fn importance_weights() {
        // scores [3,1]: p = [0.75, 0.25]; weight = 1/(2·p)
        for s in 0..50 {
            let out = downsample_bts(&[3.0, 1.0], ScoreKind::Loss, 0.5, s).unwrap();
            let (i, w) = out[0];
            let expect = if i == 0 { 1.0 / 1.5 } else { 2.0 };
            assert!((w - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = DownsamplingConfig { policy: DownsamplingPolicy::Rs2WithReplacement, mode: DownsamplingMode::BtS, ..Default::default() };
        assert!(c.validate().is_err());
        c.mode = DownsamplingMode::StB;
        assert!(c.validate().is_ok());
        c.ratio = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rs2_without_replacement_cycles() {
        let mut sel = StbSelector::new(DownsamplingPolicy::Rs2WithoutReplacement, 10, 0.3, 4).unwrap();
        let mut seen = std::collections::HashSet::new();
        // three epochs of 3 cover 9 distinct keys
        for _ in 0..3 {
            for (i, _) in sel.next_epoch(None).unwrap() {
                assert!(seen.insert(i));
            }
        }
        // the fourth epoch finishes the pass with the last unseen key
        let fourth: Vec<usize> = sel.next_epoch(None).unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(fourth.len(), 3);
        assert_eq!(fourth.iter().filter(|i| !seen.contains(i)).count(), 1);
    }
}
