//! Evaluation quantities: Score@K, cluster purity, top-K inclusion and
//! per-test-count cluster statistics.

use std::collections::HashMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_on_prefix, Candidate, Cluster, RaggedOutputs};
use crate::ranking::ClusterRanking;
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("k = {k} exceeds the pool of {pool} candidates for subtask #{subtask}")]
    KTooLarge { k: usize, pool: usize, subtask: usize },
    #[error("k and runs must be >= 1")]
    Zero,
    #[error(transparent)]
    Ragged(#[from] RaggedOutputs),
}

/// Mean over `runs` of the summed per-subtask best score when `k` candidates
/// are drawn without replacement from each subtask's pool. When `k` equals
/// every pool size the result is exact and `runs` is irrelevant.
pub fn score_at_k(pools: &[Vec<f64>], k: usize, runs: u32, seed: u64) -> Result<f64, MetricError> {
    if k == 0 || runs == 0 {
        return Err(MetricError::Zero);
    }
    for (i, p) in pools.iter().enumerate() {
        if k > p.len() {
            return Err(MetricError::KTooLarge { k, pool: p.len(), subtask: i });
        }
    }
    let best = |p: &[f64]| p.iter().copied().fold(0.0, f64::max);
    if pools.iter().all(|p| p.len() == k) {
        return Ok(pools.iter().map(|p| best(p)).sum());
    }
    let mut rng = seed::derived_rng(seed, &["score-at-k", &k.to_string()]);
    let mut total = 0.0;
    for _ in 0..runs {
        for p in pools {
            total += sample(&mut rng, p.len(), k).iter().map(|i| p[i]).fold(0.0, f64::max);
        }
    }
    Ok(total / runs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub avg_cluster_size: f64,
    pub num_clusters: usize,
}

/// Positive iff the candidate reaches the best score seen in its pool; a
/// pool where nobody scored has no positives.
pub fn max_achieved_labels(scores: &HashMap<String, f64>) -> HashMap<String, bool> {
    let max = scores.values().copied().fold(0.0, f64::max);
    scores
        .iter()
        .map(|(id, &s)| (id.clone(), max > 0.0 && s >= max - 1e-9))
        .collect()
}

/// Each cluster predicts its members' majority label (exactly half counts
/// as positive); members inherit the prediction.
pub fn purity_f1(clusters: &[Cluster], labels: &HashMap<String, bool>) -> PurityReport {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    let mut members = 0usize;
    for c in clusters {
        let pos = c.member_ids.iter().filter(|m| labels.get(*m).copied().unwrap_or(false)).count();
        let predict = 2 * pos >= c.size();
        members += c.size();
        if predict {
            tp += pos as u64;
            fp += (c.size() - pos) as u64;
        } else {
            fn_ += pos as u64;
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PurityReport {
        f1,
        precision,
        recall,
        avg_cluster_size: if clusters.is_empty() { 0.0 } else { members as f64 / clusters.len() as f64 },
        num_clusters: clusters.len(),
    }
}

/// Best rank among clusters holding a top-scoring candidate; `None` when
/// no clustered candidate scored above zero.
pub fn best_cluster_rank(ranking: &ClusterRanking, clusters: &[Cluster], scores: &HashMap<String, f64>) -> Option<usize> {
    let max = clusters
        .iter()
        .flat_map(|c| &c.member_ids)
        .filter_map(|m| scores.get(m).copied())
        .fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    clusters
        .iter()
        .filter(|c| c.member_ids.iter().any(|m| scores.get(m).is_some_and(|&s| s >= max - 1e-9)))
        .filter_map(|c| ranking.rank_of(&c.cluster_id))
        .min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub included: usize,
    pub total: usize,
    pub fraction: f64,
    pub flags: Vec<bool>,
}

/// `best_ranks[i]` is the 1-based rank of subtask i's best cluster.
pub fn top_k_inclusion(best_ranks: &[Option<usize>], k: usize) -> TopK {
    let flags: Vec<bool> = best_ranks.iter().map(|r| r.is_some_and(|r| r <= k)).collect();
    let included = flags.iter().filter(|f| **f).count();
    TopK {
        k,
        included,
        total: flags.len(),
        fraction: if flags.is_empty() { 0.0 } else { included as f64 / flags.len() as f64 },
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStatsRow {
    pub num_tests: usize,
    pub avg_size: f64,
    pub num_clusters: usize,
    pub f1: f64,
}

/// Re-clusters on each test-count prefix.
pub fn cluster_stats(
    candidates: &[Candidate],
    prefixes: &[usize],
    labels: &HashMap<String, bool>,
) -> Result<Vec<ClusterStatsRow>, MetricError> {
    prefixes
        .iter()
        .map(|&t| {
            let clusters = cluster_on_prefix(candidates, t)?;
            let p = purity_f1(&clusters, labels);
            Ok(ClusterStatsRow {
                num_tests: t,
                avg_size: p.avg_cluster_size,
                num_clusters: p.num_clusters,
                f1: p.f1,
            })
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::testutil::{candidate, partition_of};
    use crate::clustering::cluster_by_behavior;
    use crate::digest::Digest;
    use proptest::prelude::*;

    #[test]
    fn hypergeometric_example() {
        let pool = vec![0.0, 0.0, 100.0];
        let exact = oracle::expected_best(&pool, 2);
        assert!((exact - 200.0 / 3.0).abs() < 1e-9);
        let mc = score_at_k(&[pool], 2, 2000, 1).unwrap();
        assert!((mc - exact).abs() < 3.0, "{mc} vs {exact}");
    }

    #[test]
    fn full_pool_is_exact_max() {
        let pools = vec![vec![3.0, 9.0, 1.0], vec![0.0, 7.0, 2.0]];
        assert_eq!(score_at_k(&pools, 3, 1, 0).unwrap(), 16.0);
    }

    #[test]
    fn constant_pool() {
        let pools = vec![vec![4.0; 5]; 3];
        assert_eq!(score_at_k(&pools, 1, 20, 0).unwrap(), 12.0);
    }

    #[test]
    fn k_too_large_is_error() {
        assert!(matches!(score_at_k(&[vec![1.0]], 2, 1, 0), Err(MetricError::KTooLarge { .. })));
    }

    fn cl(members: &[&str]) -> Cluster {
        Cluster {
            cluster_id: members.join("+"),
            subtask_id: "s".into(),
            signature: Digest(0),
            member_ids: members.iter().map(|m| m.to_string()).collect(),
            representative_id: members[0].into(),
            wins: 0.0,
            games_played: 0,
        }
    }

    fn labels(pairs: &[(&str, bool)]) -> HashMap<String, bool> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn pure_clusters_have_f1_one() {
        let r = purity_f1(&[cl(&["a", "b"]), cl(&["c"])], &labels(&[("a", true), ("b", true), ("c", false)]));
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.num_clusters, 2);
        assert_eq!(r.avg_cluster_size, 1.5);
    }

    #[test]
    fn majority_cluster_false_positive() {
        // {good, good, bad} predicts good: TP 2, FP 1; {good} alone is TP.
        let r = purity_f1(
            &[cl(&["g1", "g2", "b1"]), cl(&["g3"])],
            &labels(&[("g1", true), ("g2", true), ("b1", false), ("g3", true)]),
        );
        assert!((r.precision - 0.75).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 * 0.75 / 1.75).abs() < 1e-12);
    }

    #[test]
    fn exact_half_predicts_positive() {
        let r = purity_f1(&[cl(&["g", "b"])], &labels(&[("g", true), ("b", false)]));
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
    }

    #[test]
    fn no_positives() {
        let r = purity_f1(&[cl(&["a"]), cl(&["b"])], &labels(&[("a", false), ("b", false)]));
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let scores: HashMap<String, f64> = [("a".to_string(), 0.0)].into();
        assert!(!max_achieved_labels(&scores)["a"]);
    }

    #[test]
    fn top_k_counts() {
        let t = top_k_inclusion(&[Some(2), Some(7), Some(60)], 50);
        assert_eq!((t.included, t.total), (2, 3));
        assert!((t.fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(top_k_inclusion(&[Some(1); 4], 1).fraction, 1.0);
    }

    #[test]
    fn stats_extremes() {
        let same: Vec<Candidate> = (0..6).map(|i| candidate(&format!("c{i}"), 1, &["x", "y"])).collect();
        let rows = cluster_stats(&same, &[1], &HashMap::new()).unwrap();
        assert_eq!((rows[0].num_clusters, rows[0].avg_size), (1, 6.0));
        let distinct: Vec<Candidate> = (0..6).map(|i| candidate(&format!("c{i}"), 1, &[&i.to_string()])).collect();
        let rows = cluster_stats(&distinct, &[1], &HashMap::new()).unwrap();
        assert_eq!((rows[0].num_clusters, rows[0].avg_size), (6, 1.0));
    }

    /// Every cluster of `fine` lies inside exactly one cluster of `coarse`.
    pub(crate) fn refines(fine: &[Vec<String>], coarse: &[Vec<String>]) -> bool {
        fine.iter().all(|f| coarse.iter().filter(|c| f.iter().all(|m| c.contains(m))).count() == 1)
    }

    proptest! {
        #[test]
        fn mc_close_to_closed_form(pool in proptest::collection::vec(0u8..=100, 1..=10), k_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let pool: Vec<f64> = pool.into_iter().map(f64::from).collect();
            let k = 1 + ((pool.len() - 1) as f64 * k_frac) as usize;
            let exact = oracle::expected_best(&pool, k);
            let mc = score_at_k(&[pool.clone()], k, 2000, seed).unwrap();
            prop_assert!((mc - exact).abs() <= 5.0, "{} vs {}", mc, exact);
            prop_assert!(oracle::expected_best(&pool, pool.len()) >= exact - 1e-9);
        }

        #[test]
        fn refinement(rows in proptest::collection::vec(proptest::collection::vec(1u8..4, 6), 1..60)) {
            let cands: Vec<Candidate> = rows.iter().enumerate().map(|(i, outs)| {
                let s: Vec<String> = outs.iter().map(|o| o.to_string()).collect();
                let r: Vec<&str> = s.iter().map(|x| x.as_str()).collect();
                candidate(&format!("c{i:02}"), 1, &r)
            }).collect();
            for t in 1..6 {
                let coarse = partition_of(&cluster_on_prefix(&cands, t).unwrap());
                let fine = partition_of(&cluster_on_prefix(&cands, t + 1).unwrap());
                prop_assert!(refines(&fine, &coarse));
            }
        }

        #[test]
        fn purity_permutation_invariant(rows in proptest::collection::vec((0u8..4, any::<bool>()), 1..40), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let cands: Vec<Candidate> = rows.iter().enumerate().map(|(i, (o, _))| candidate(&format!("c{i:02}"), 1, &[&o.to_string()])).collect();
            let lab: HashMap<String, bool> = rows.iter().enumerate().map(|(i, (_, l))| (format!("c{i:02}"), *l)).collect();
            let mut clusters = cluster_by_behavior(&cands).unwrap();
            let a = purity_f1(&clusters, &lab);
            let mut rng = crate::seed::rng(seed);
            clusters.shuffle(&mut rng);
            for c in clusters.iter_mut() { c.member_ids.shuffle(&mut rng); }
            prop_assert_eq!(a, purity_f1(&clusters, &lab));
        }
    }
}
