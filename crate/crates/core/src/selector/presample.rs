//! Presampling: selection that needs no model forward pass.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::SelectorError;
use crate::seed;
use crate::storage::Key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presampling {
    #[default]
    None,
    Uniform,
    ClassBalanced,
    TriggerBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub key: Key,
    pub label: i64,
    pub trigger_id: u32,
}

/// Splits `budget` over groups of the given sizes by water-filling: every
/// group gets the same quota unless it is smaller than that, in which case it
/// is taken whole and its unused quota goes to the rest. The integer remainder
/// goes one unit each to the largest uncapped groups (ties: earlier group).
///
/// Requires `budget <= sizes.sum()`.
pub fn balanced_quotas(sizes: &[usize], budget: usize) -> Vec<usize> {
    debug_assert!(budget <= sizes.iter().sum());
    let mut quotas = vec![0; sizes.len()];
    let mut ascending: Vec<usize> = (0..sizes.len()).collect();
    ascending.sort_by_key(|&g| (sizes[g], std::cmp::Reverse(g)));
    let mut remaining = budget;
    let mut open = sizes.len();
    let mut cut = 0;
    for &g in &ascending {
        if sizes[g] * open > remaining {
            break;
        }
        quotas[g] = sizes[g];
        remaining -= sizes[g];
        open -= 1;
        cut += 1;
    }
    if open == 0 {
        return quotas;
    }
    let base = remaining / open;
    let extra = remaining % open;
    // uncapped groups, largest first
    for (rank, &g) in ascending[cut..].iter().rev().enumerate() {
        quotas[g] = base + usize::from(rank < extra);
    }
    quotas
}

/// Applies a presampling policy. Output has exactly `floor(ratio·|pool|)`
/// entries, weight 1.0, in ascending key order.
pub fn presample(
    pool: &[Candidate],
    policy: Presampling,
    ratio: f64,
    seed: u64,
) -> Result<Vec<(Key, f64)>, SelectorError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SelectorError::InvalidConfig(format!("presampling ratio {ratio} not in (0,1]")));
    }
    let budget = ((ratio * pool.len() as f64).floor() as usize).min(pool.len());
    let mut keys: Vec<Key> = if policy == Presampling::None || budget == pool.len() {
        pool.iter().map(|c| c.key).collect()
    } else {
        let mut rng = seed::rng(seed);
        match policy {
            Presampling::None => unreachable!(),
            Presampling::Uniform => {
                let mut sorted: Vec<Key> = pool.iter().map(|c| c.key).collect();
                sorted.sort_unstable();
                index::sample(&mut rng, sorted.len(), budget).into_iter().map(|i| sorted[i]).collect()
            }
            Presampling::ClassBalanced | Presampling::TriggerBalanced => {
                let mut groups: BTreeMap<i64, Vec<Key>> = BTreeMap::new();
                for c in pool {
                    let g = if policy == Presampling::ClassBalanced { c.label } else { i64::from(c.trigger_id) };
                    groups.entry(g).or_default().push(c.key);
                }
                let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
                let quotas = balanced_quotas(&sizes, budget);
                let mut out = Vec::with_capacity(budget);
                for (members, q) in groups.into_values().zip(quotas) {
                    let mut members = members;
                    members.sort_unstable();
                    out.extend(index::sample(&mut rng, members.len(), q).into_iter().map(|i| members[i]));
                }
                out
            }
        }
    };
    keys.sort_unstable();
    Ok(keys.into_iter().map(|k| (k, 1.0)).collect())
}
