//! Property checks on the public API against small independent oracles.

use std::collections::BTreeSet;

use proptest::prelude::*;
use tourney_core::clustering::{cluster_by_behavior, Candidate, CandidateStatus};
use tourney_core::digest::Digest;
use tourney_core::metrics::score_at_k;
use tourney_core::submission::{PlanEntry, Planner, SubtaskQueue};

fn candidate(i: usize, outputs: &[u8], status: CandidateStatus) -> Candidate {
    Candidate {
        candidate_id: format!("c{i:03}"),
        subtask_id: "p-s1".into(),
        source: Some(String::new()),
        reasoning_tokens: (i * 37 % 11) as u64,
        status,
        outputs: if status == CandidateStatus::Ok {
            outputs.iter().map(|&o| Digest(o as u128 + 1)).collect()
        } else {
            Vec::new()
        },
    }
}

fn queue(index: u32, entries: usize) -> SubtaskQueue {
    let sid = format!("p-s{index}");
    SubtaskQueue {
        subtask_id: sid.clone(),
        index,
        max_score: 10.0,
        entries: (0..entries)
            .map(|e| PlanEntry {
                subtask_id: sid.clone(),
                cluster_id: None,
                candidate_id: format!("{sid}-c{e}"),
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn clusters_are_exactly_the_equal_output_classes(
        rows in prop::collection::vec((prop::collection::vec(0u8..3, 4), any::<bool>()), 0..40)
    ) {
        let cands: Vec<Candidate> = rows
            .iter()
            .enumerate()
            .map(|(i, (o, ok))| candidate(i, o, if *ok { CandidateStatus::Ok } else { CandidateStatus::CompileFailed }))
            .collect();
        let clusters = cluster_by_behavior(&cands).unwrap();

        // Oracle: two ok candidates share a class iff their raw rows are equal.
        let mut expected: BTreeSet<BTreeSet<String>> = BTreeSet::new();
        for (o, ok) in &rows {
            if !ok {
                continue;
            }
            let class = rows
                .iter()
                .enumerate()
                .filter(|(_, (p, pok))| *pok && p == o)
                .map(|(j, _)| format!("c{j:03}"))
                .collect();
            expected.insert(class);
        }
        let got: BTreeSet<BTreeSet<String>> =
            clusters.iter().map(|c| c.member_ids.iter().cloned().collect()).collect();
        prop_assert_eq!(got, expected);
        for c in &clusters {
            prop_assert_eq!(&c.representative_id, &c.member_ids[0]);
        }
    }

    #[test]
    fn score_at_k_is_bounded_and_exact_at_full_pools(
        pools in prop::collection::vec(prop::collection::vec(0u8..=100, 1..8), 1..5),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let pools: Vec<Vec<f64>> = pools.into_iter().map(|p| p.into_iter().map(f64::from).collect()).collect();
        let min_len = pools.iter().map(Vec::len).min().unwrap();
        let best: f64 = pools.iter().map(|p| p.iter().copied().fold(0.0, f64::max)).sum();
        if k > min_len {
            prop_assert!(score_at_k(&pools, k, 5, seed).is_err());
        } else {
            let est = score_at_k(&pools, k, 5, seed).unwrap();
            prop_assert!(est <= best + 1e-9);
            // No k-draw can do worse than the k-th smallest value.
            let floor: f64 = pools
                .iter()
                .map(|p| {
                    let mut s = p.clone();
                    s.sort_by(f64::total_cmp);
                    s[k - 1]
                })
                .sum();
            prop_assert!(est >= floor - 1e-9);
            prop_assert_eq!(est, score_at_k(&pools, k, 5, seed).unwrap());
        }
        let full: Vec<Vec<f64>> = pools.iter().map(|p| p[..min_len].to_vec()).collect();
        let exact: f64 = full.iter().map(|p| p.iter().copied().fold(0.0, f64::max)).sum();
        prop_assert_eq!(score_at_k(&full, min_len, 1, seed).unwrap(), exact);
    }

    #[test]
    fn planner_respects_cap_and_subtask_order(
        sizes in prop::collection::vec(0usize..6, 1..5),
        cap in 0u32..12,
        scores in prop::collection::vec(prop_oneof![Just(0.0), Just(5.0), Just(10.0)], 24),
    ) {
        let queues: Vec<SubtaskQueue> = sizes.iter().enumerate().map(|(i, &n)| queue(i as u32 + 1, n)).collect();
        let mut planner = Planner::new("p", queues, cap);
        let mut emitted = Vec::new();
        while let Some(e) = planner.next_entry() {
            let s = scores[emitted.len() % scores.len()];
            emitted.push((e, s));
            planner.feedback(s);
        }
        prop_assert!(emitted.len() as u32 <= cap);
        let total: usize = sizes.iter().sum();
        prop_assert!(emitted.len() == total.min(cap as usize) || emitted.iter().any(|(_, s)| *s == 10.0));
        // Subtask index never increases, and nothing follows a solve on the same subtask.
        for w in emitted.windows(2) {
            let (a, sa) = &w[0];
            let (b, _) = &w[1];
            prop_assert!(a.subtask_id >= b.subtask_id);
            if *sa == 10.0 {
                prop_assert_ne!(&a.subtask_id, &b.subtask_id);
            }
        }
    }
}
