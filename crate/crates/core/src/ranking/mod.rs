//! Cluster ranking strategies.

mod strategy;
mod tournament;

use std::collections::{BTreeMap, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::clustering::{Candidate, Cluster};
use crate::digest::Digest;
use crate::llm::PresentedJudge;
use crate::par::WorkerPool;
use crate::seed;

pub use strategy::{Granularity, StrategyName, UnknownStrategy};
pub use tournament::{run_tournament, Entrant, GameRecord, Tally, TournamentResult};
#[cfg(test)]
pub(crate) use tournament::testutil;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRanking {
    pub subtask_id: String,
    pub strategy: StrategyName,
    pub ordered_cluster_ids: Vec<String>,
    pub per_cluster_wins: BTreeMap<String, f64>,
    pub per_cluster_avg_score: BTreeMap<String, f64>,
    /// Representative each cluster played with (tournament strategies only).
    pub representatives: BTreeMap<String, String>,
    pub games: Vec<GameRecord>,
}

impl ClusterRanking {
    /// 1-based rank of `cluster_id`.
    pub fn rank_of(&self, cluster_id: &str) -> Option<usize> {
        self.ordered_cluster_ids.iter().position(|c| c == cluster_id).map(|p| p + 1)
    }
}

pub struct RankInputs<'a> {
    pub subtask_id: &'a str,
    pub clusters: &'a [Cluster],
    /// All candidates of the subtask, including ones outside any cluster.
    pub candidates: &'a [Candidate],
    pub judge: &'a dyn PresentedJudge,
    pub g_n: u32,
    pub seed: u64,
    pub pool: &'a WorkerPool,
}

/// Majority weight: for each test, how many candidates produced each output;
/// a cluster scores the sum of those counts over its members' outputs.
pub fn majority_weights(clusters: &[Cluster], candidates: &[Candidate]) -> BTreeMap<String, u64> {
    let width = candidates.iter().filter(|c| c.is_ok()).map(|c| c.outputs.len()).max().unwrap_or(0);
    let mut counts: Vec<HashMap<Digest, u64>> = vec![HashMap::new(); width];
    for c in candidates.iter().filter(|c| c.is_ok()) {
        for (j, d) in c.outputs.iter().enumerate() {
            *counts[j].entry(*d).or_default() += 1;
        }
    }
    let by_id: HashMap<&str, &Candidate> = candidates.iter().map(|c| (c.candidate_id.as_str(), c)).collect();
    clusters
        .iter()
        .map(|cl| {
            let w = cl
                .member_ids
                .iter()
                .map(|m| {
                    by_id[m.as_str()]
                        .outputs
                        .iter()
                        .enumerate()
                        .map(|(j, d)| counts[j][d])
                        .sum::<u64>()
                })
                .sum();
            (cl.cluster_id.clone(), w)
        })
        .collect()
}

fn ordered_by<K: Ord>(clusters: &[Cluster], key: impl Fn(&Cluster) -> K) -> Vec<String> {
    let mut v: Vec<&Cluster> = clusters.iter().collect();
    v.sort_by(|a, b| key(a).cmp(&key(b)).then_with(|| a.cluster_id.cmp(&b.cluster_id)));
    v.into_iter().map(|c| c.cluster_id.clone()).collect()
}

fn cmp_f64_desc(a: f64, b: f64) -> std::cmp::Ordering {
    b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
}

/// Orders clusters for one subtask under `strategy`. Tournament ties fall
/// back to average judge score, then cluster size, then id.
pub fn rank_with_strategy(strategy: StrategyName, inputs: &RankInputs<'_>) -> ClusterRanking {
    let clusters = inputs.clusters;
    let mut ranking = ClusterRanking {
        subtask_id: inputs.subtask_id.to_string(),
        strategy,
        ordered_cluster_ids: Vec::new(),
        per_cluster_wins: BTreeMap::new(),
        per_cluster_avg_score: BTreeMap::new(),
        representatives: BTreeMap::new(),
        games: Vec::new(),
    };
    ranking.ordered_cluster_ids = match strategy {
        StrategyName::Random => {
            let mut ids = ordered_by(clusters, |_| ());
            ids.shuffle(&mut seed::derived_rng(inputs.seed, &["random", inputs.subtask_id]));
            ids
        }
        StrategyName::Longest => {
            let reasoning: HashMap<&str, u64> =
                inputs.candidates.iter().map(|c| (c.candidate_id.as_str(), c.reasoning_tokens)).collect();
            ordered_by(clusters, |c| {
                std::cmp::Reverse(c.member_ids.iter().map(|m| reasoning.get(m.as_str()).copied().unwrap_or(0)).max())
            })
        }
        StrategyName::ClusterSize => ordered_by(clusters, |c| std::cmp::Reverse(c.size())),
        StrategyName::ClusterMajority => {
            let w = majority_weights(clusters, inputs.candidates);
            ordered_by(clusters, |c| (std::cmp::Reverse(w[&c.cluster_id]), std::cmp::Reverse(c.size())))
        }
        StrategyName::GenCluster | StrategyName::GenClusterRandomRep | StrategyName::GenClusterScoreBased => {
            let mut rep_rng = seed::derived_rng(inputs.seed, &["representative", inputs.subtask_id]);
            let mut sorted: Vec<&Cluster> = clusters.iter().collect();
            sorted.sort_by(|a, b| a.cluster_id.cmp(&b.cluster_id));
            let reps: Vec<&str> = sorted
                .iter()
                .map(|c| match strategy {
                    StrategyName::GenClusterRandomRep => c.member_ids.choose(&mut rep_rng).expect("non-empty"),
                    _ => &c.representative_id,
                })
                .map(|s| s.as_str())
                .collect();
            let code: HashMap<&str, &str> = inputs
                .candidates
                .iter()
                .map(|c| (c.candidate_id.as_str(), c.source.as_deref().unwrap_or("")))
                .collect();
            let entrants: Vec<Entrant<'_>> = sorted
                .iter()
                .zip(&reps)
                .map(|(c, rep)| Entrant {
                    cluster_id: &c.cluster_id,
                    representative_id: rep,
                    code: code.get(rep).copied().unwrap_or(""),
                    size: c.size(),
                })
                .collect();
            let seed = seed::derive(inputs.seed, &["tournament", inputs.subtask_id]);
            let result = run_tournament(&entrants, inputs.judge, inputs.g_n, seed, inputs.pool);
            let tally = |id: &str| &result.tallies[id];
            let mut order: Vec<&Entrant<'_>> = entrants.iter().collect();
            order.sort_by(|a, b| {
                let (ta, tb) = (tally(a.cluster_id), tally(b.cluster_id));
                let primary = if strategy == StrategyName::GenClusterScoreBased {
                    cmp_f64_desc(ta.avg_score(), tb.avg_score()).then(cmp_f64_desc(ta.wins, tb.wins))
                } else {
                    cmp_f64_desc(ta.wins, tb.wins).then(cmp_f64_desc(ta.avg_score(), tb.avg_score()))
                };
                primary
                    .then(b.size.cmp(&a.size))
                    .then_with(|| a.cluster_id.cmp(b.cluster_id))
            });
            for e in &entrants {
                let t = tally(e.cluster_id);
                ranking.per_cluster_wins.insert(e.cluster_id.to_string(), t.wins);
                ranking.per_cluster_avg_score.insert(e.cluster_id.to_string(), t.avg_score());
                ranking.representatives.insert(e.cluster_id.to_string(), e.representative_id.to_string());
            }
            ranking.games = result.games;
            order.into_iter().map(|e| e.cluster_id.to_string()).collect()
        }
    };
    ranking
}
