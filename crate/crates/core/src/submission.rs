//! Budget-capped submission planning: final subtask first, round-robin over
//! ranked clusters, skip a subtask once it reaches full marks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{Candidate, Cluster};
use crate::problem::{ProblemPack, Subtask};
use crate::ranking::ClusterRanking;
use crate::sandbox::GradeResult;
use crate::seed;

const SOLVED_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub subtask_id: String,
    pub cluster_id: Option<String>,
    pub candidate_id: String,
}

/// Entries for one subtask in emission order, before any feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskQueue {
    pub subtask_id: String,
    pub index: u32,
    pub max_score: f64,
    pub entries: Vec<PlanEntry>,
}

/// Cycles across clusters in ranked order, taking each cluster's next
/// member (members are already in reasoning-length order).
pub fn round_robin_queue(subtask: &Subtask, ranking: &ClusterRanking, clusters: &[Cluster]) -> SubtaskQueue {
    let by_id: BTreeMap<&str, &Cluster> = clusters.iter().map(|c| (c.cluster_id.as_str(), c)).collect();
    let ranked: Vec<&Cluster> = ranking
        .ordered_cluster_ids
        .iter()
        .filter_map(|id| by_id.get(id.as_str()).copied())
        .collect();
    let depth = ranked.iter().map(|c| c.size()).max().unwrap_or(0);
    let mut entries = Vec::new();
    for round in 0..depth {
        for c in &ranked {
            if let Some(m) = c.member_ids.get(round) {
                entries.push(PlanEntry {
                    subtask_id: subtask.subtask_id.clone(),
                    cluster_id: Some(c.cluster_id.clone()),
                    candidate_id: m.clone(),
                });
            }
        }
    }
    SubtaskQueue {
        subtask_id: subtask.subtask_id.clone(),
        index: subtask.index,
        max_score: subtask.max_score,
        entries,
    }
}

pub fn flat_queue(subtask: &Subtask, ordered_candidate_ids: &[String]) -> SubtaskQueue {
    SubtaskQueue {
        subtask_id: subtask.subtask_id.clone(),
        index: subtask.index,
        max_score: subtask.max_score,
        entries: ordered_candidate_ids
            .iter()
            .map(|id| PlanEntry {
                subtask_id: subtask.subtask_id.clone(),
                cluster_id: None,
                candidate_id: id.clone(),
            })
            .collect(),
    }
}

/// Compiling candidates by reasoning length descending, ties by id.
pub fn longest_order(candidates: &[Candidate]) -> Vec<String> {
    let mut ok: Vec<&Candidate> = candidates.iter().filter(|c| c.is_ok()).collect();
    ok.sort_by(|a, b| {
        b.reasoning_tokens
            .cmp(&a.reasoning_tokens)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    });
    ok.into_iter().map(|c| c.candidate_id.clone()).collect()
}

/// Seeded uniform shuffle of the compiling candidates.
pub fn random_order(candidates: &[Candidate], seed: u64, subtask_id: &str) -> Vec<String> {
    let mut ids: Vec<String> = candidates.iter().filter(|c| c.is_ok()).map(|c| c.candidate_id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut seed::derived_rng(seed, &["random-candidates", subtask_id]));
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionPlan {
    pub problem_id: String,
    pub entries: Vec<PlanEntry>,
    pub cap: u32,
}

/// Lazy planner: the next entry depends on grading feedback.
#[derive(Debug, Clone)]
pub struct Planner {
    problem_id: String,
    /// Highest subtask index first.
    queues: Vec<SubtaskQueue>,
    cap: u32,
    current: usize,
    position: usize,
    emitted: u32,
}

impl Planner {
    pub fn new(problem_id: &str, mut queues: Vec<SubtaskQueue>, cap: u32) -> Self {
        queues.sort_by(|a, b| b.index.cmp(&a.index).then_with(|| a.subtask_id.cmp(&b.subtask_id)));
        Planner {
            problem_id: problem_id.to_string(),
            queues,
            cap,
            current: 0,
            position: 0,
            emitted: 0,
        }
    }

    pub fn next_entry(&mut self) -> Option<PlanEntry> {
        if self.emitted >= self.cap {
            return None;
        }
        while let Some(q) = self.queues.get(self.current) {
            if let Some(e) = q.entries.get(self.position) {
                self.position += 1;
                self.emitted += 1;
                return Some(e.clone());
            }
            self.advance();
        }
        None
    }

    /// Reports the score of the last emitted entry.
    pub fn feedback(&mut self, score: f64) {
        if let Some(q) = self.queues.get(self.current) {
            if score >= q.max_score - SOLVED_EPS {
                self.advance();
            }
        }
    }

    fn advance(&mut self) {
        self.current += 1;
        self.position = 0;
    }

    /// The plan as it would unfold if nothing were ever solved.
    pub fn preview(&self) -> SubmissionPlan {
        let mut p = self.clone();
        let mut entries = Vec::new();
        while let Some(e) = p.next_entry() {
            entries.push(e);
        }
        SubmissionPlan {
            problem_id: self.problem_id.clone(),
            entries,
            cap: self.cap,
        }
    }
}

pub fn plan_round_robin(
    problem: &ProblemPack,
    rankings: &BTreeMap<String, ClusterRanking>,
    clusters: &BTreeMap<String, Vec<Cluster>>,
    cap: u32,
) -> Planner {
    let queues = problem
        .subtasks
        .iter()
        .map(|s| match (rankings.get(&s.subtask_id), clusters.get(&s.subtask_id)) {
            (Some(r), Some(c)) => round_robin_queue(s, r, c),
            _ => flat_queue(s, &[]),
        })
        .collect();
    Planner::new(&problem.problem_id, queues, cap)
}

pub fn plan_flat(problem: &ProblemPack, ordered: &BTreeMap<String, Vec<String>>, cap: u32) -> Planner {
    let queues = problem
        .subtasks
        .iter()
        .map(|s| flat_queue(s, ordered.get(&s.subtask_id).map_or(&[][..], |v| v)))
        .collect();
    Planner::new(&problem.problem_id, queues, cap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub entry: PlanEntry,
    pub score: f64,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub problem_id: String,
    pub per_subtask_best: BTreeMap<String, f64>,
    pub total: f64,
    pub submissions_used: u32,
    pub log: Vec<SubmissionRecord>,
}

#[derive(Debug, thiserror::Error)]
#[error("grading failed after {} submissions: {error}", outcome.submissions_used)]
pub struct PartialOutcome<E: std::error::Error> {
    pub outcome: ProblemOutcome,
    pub error: E,
}

/// Grades entries one at a time, feeding each score back to the planner.
pub fn execute_plan<E: std::error::Error>(
    problem: &ProblemPack,
    mut planner: Planner,
    mut grade: impl FnMut(&PlanEntry) -> Result<GradeResult, E>,
) -> Result<ProblemOutcome, PartialOutcome<E>> {
    let mut outcome = ProblemOutcome {
        problem_id: problem.problem_id.clone(),
        per_subtask_best: problem.subtasks.iter().map(|s| (s.subtask_id.clone(), 0.0)).collect(),
        total: 0.0,
        submissions_used: 0,
        log: Vec::new(),
    };
    while let Some(entry) = planner.next_entry() {
        let result = match grade(&entry) {
            Ok(r) => r,
            Err(error) => return Err(PartialOutcome { outcome, error }),
        };
        outcome.submissions_used += 1;
        let best = outcome.per_subtask_best.entry(entry.subtask_id.clone()).or_insert(0.0);
        *best = best.max(result.score);
        outcome.total = outcome.per_subtask_best.values().sum();
        planner.feedback(result.score);
        outcome.log.push(SubmissionRecord {
            entry,
            score: result.score,
            verdict: result.verdict,
        });
    }
    Ok(outcome)
}
