use std::collections::{BTreeSet, HashMap};

use cotrain::selector::{
    balanced_quotas, presample, write_trigger_set, Candidate, PoolEntry, Presampling, SelectionConfig, SelectorState,
};
use proptest::prelude::*;

/// Exhaustive oracle: among all feasible quota vectors with the given budget,
/// the most balanced one (least sum of squares); ties go to larger groups,
/// then to earlier groups.
fn quota_oracle(sizes: &[usize], budget: usize) -> Vec<usize> {
    fn rec(sizes: &[usize], left: usize, cur: &mut Vec<usize>, all: &mut Vec<Vec<usize>>) {
        if cur.len() == sizes.len() {
            if left == 0 {
                all.push(cur.clone());
            }
            return;
        }
        for q in 0..=sizes[cur.len()].min(left) {
            cur.push(q);
            rec(sizes, left - q, cur, all);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    rec(sizes, budget, &mut Vec::new(), &mut all);
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&g| (std::cmp::Reverse(sizes[g]), g));
    all.into_iter()
        .min_by(|a, b| {
            let sa: usize = a.iter().map(|q| q * q).sum();
            let sb: usize = b.iter().map(|q| q * q).sum();
            sa.cmp(&sb).then_with(|| {
                let ka: Vec<usize> = order.iter().map(|&g| a[g]).collect();
                let kb: Vec<usize> = order.iter().map(|&g| b[g]).collect();
                kb.cmp(&ka)
            })
        })
        .unwrap()
}

#[test]
fn worked_quota_example_matches_oracle() {
    assert_eq!(quota_oracle(&[6, 2], 6), vec![4, 2]);
    assert_eq!(balanced_quotas(&[6, 2], 6), vec![4, 2]);
    assert_eq!(quota_oracle(&[3, 1], 2), vec![1, 1]);
}

proptest! {
    #[test]
    fn quotas_match_exhaustive_oracle(sizes in prop::collection::vec(0usize..7, 1..5), frac in 0.0f64..=1.0) {
        let total: usize = sizes.iter().sum();
        let budget = (frac * total as f64).floor() as usize;
        prop_assert_eq!(balanced_quotas(&sizes, budget), quota_oracle(&sizes, budget));
    }

    #[test]
    fn budget_is_exact_for_every_policy(labels in prop::collection::vec(0i64..5, 1..200), ratio in 0.01f64..=1.0, seed in any::<u64>()) {
        let pool: Vec<Candidate> = labels.iter().enumerate()
            .map(|(i, &l)| Candidate { key: i as u64 * 7, label: l, trigger_id: (i % 3) as u32 }).collect();
        let want = (ratio * pool.len() as f64).floor() as usize;
        for policy in [Presampling::None, Presampling::Uniform, Presampling::ClassBalanced, Presampling::TriggerBalanced] {
            let out = presample(&pool, policy, ratio, seed).unwrap();
            let expect = if policy == Presampling::None { pool.len() } else { want };
            prop_assert_eq!(out.len(), expect);
            let distinct: BTreeSet<u64> = out.iter().map(|e| e.0).collect();
            prop_assert_eq!(distinct.len(), out.len());
            prop_assert!(out.iter().all(|e| e.1 == 1.0));
        }
    }

    #[test]
    fn balanced_classes_differ_by_at_most_one(classes in 1usize..6, budget in 1usize..60, extra in prop::collection::vec(0usize..10, 6), seed in any::<u64>()) {
        // every class has at least ceil(B/C) members
        let min_size = budget.div_ceil(classes);
        let mut pool = Vec::new();
        for (c, more) in extra.iter().take(classes).enumerate() {
            for _ in 0..min_size + more {
                pool.push(Candidate { key: pool.len() as u64, label: c as i64, trigger_id: 0 });
            }
        }
        prop_assume!(budget <= pool.len());
        let ratio = (budget as f64 + 0.5) / pool.len() as f64;
        prop_assume!(ratio <= 1.0);
        let out = presample(&pool, Presampling::ClassBalanced, ratio, seed).unwrap();
        prop_assert_eq!(out.len(), budget);
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for (k, _) in &out {
            *counts.entry(pool[*k as usize].label).or_default() += 1;
        }
        let per: Vec<usize> = (0..classes as i64).map(|c| counts.get(&c).copied().unwrap_or(0)).collect();
        prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1, "{:?}", per);
    }

    #[test]
    fn shares_reassemble_partitions(n in 1usize..400, size in 1usize..120, writers in 1usize..9, workers in 1usize..9) {
        let dir = tempfile::tempdir().unwrap();
        let entries: Vec<(u64, f64)> = (0..n).map(|i| ((i * 31 % 1000) as u64, 0.5 + i as f64)).collect();
        let h = write_trigger_set(dir.path(), 2, &entries, size, writers).unwrap();
        prop_assert_eq!(h.num_partitions(), n.div_ceil(size));
        for p in 0..h.num_partitions() {
            let expected = &entries[p * size..((p + 1) * size).min(n)];
            let mut joined = Vec::new();
            let mut lens = Vec::new();
            for w in 0..workers {
                let share = h.partition_share(p, w, workers).unwrap();
                lens.push(share.len());
                joined.extend(share);
            }
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            prop_assert_eq!(&joined[..], expected);
            if p + 1 < h.num_partitions() {
                prop_assert_eq!(expected.len(), size);
            }
        }
    }

    #[test]
    fn window_is_last_k_plus_one_pools(pools in prop::collection::vec(1usize..20, 1..8), tail in prop::option::of(0u32..5)) {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SelectorState::in_memory(dir.path());
        let cfg = SelectionConfig { tail_triggers: tail, ..Default::default() };
        let mut history: Vec<Vec<u64>> = Vec::new();
        let mut next = 0u64;
        for &len in &pools {
            let keys: Vec<u64> = (next..next + len as u64).collect();
            next += len as u64;
            s.inform_samples(&keys.iter().map(|&k| PoolEntry { key: k, timestamp: 0, label: 0 }).collect::<Vec<_>>()).unwrap();
            history.push(keys);
            let h = s.inform_trigger(&cfg).unwrap();
            // naive recomputation
            let r = history.len() - 1;
            let first = match tail { None => 0, Some(t) => r.saturating_sub(t as usize) };
            let want: BTreeSet<u64> = history[first..=r].iter().flatten().copied().collect();
            let got: BTreeSet<u64> = h.read_all().unwrap().into_iter().map(|e| e.0).collect();
            prop_assert_eq!(got, want);
        }
    }
}

#[test]
fn written_with_eight_threads_read_with_three_workers() {
    let dir = tempfile::tempdir().unwrap();
    let entries: Vec<(u64, f64)> = (0..1000).map(|i| (999 - i, 1.0 + (i % 7) as f64)).collect();
    let retained = entries.clone();
    let h = write_trigger_set(dir.path(), 0, &entries, 1000, 8).unwrap();
    assert_eq!(h.files_per_partition, vec![8]);
    let joined: Vec<(u64, f64)> = (0..3).flat_map(|w| h.partition_share(0, w, 3).unwrap()).collect();
    assert_eq!(joined.len(), retained.len());
    for (a, b) in joined.iter().zip(&retained) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}

#[test]
fn hundred_thousand_informs() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = SelectorState::in_memory(dir.path());
    for chunk in 0..100u64 {
        let batch: Vec<PoolEntry> = (chunk * 1000..(chunk + 1) * 1000)
            .map(|k| PoolEntry { key: k, timestamp: k as i64, label: (k % 10) as i64 })
            .collect();
        s.inform_samples(&batch).unwrap();
    }
    assert_eq!(s.informed(), 100_000);
    assert_eq!(s.class_count(3), 10_000);
}
