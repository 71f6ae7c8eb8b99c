//! Parameter sweeps over an existing run: K subsamples the generated pool,
//! G_n re-ranks the same clusters, the test count re-clusters on output
//! prefixes. Nothing is regenerated or re-executed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stages::{load, rank, submit, ClusterArtifact, ClusterSubtask, SubmitArtifact};
use super::{Context, PipelineError, RunManifest, Stage, StageStatus};
use crate::clustering::cluster_by_behavior;
use crate::metrics::{max_achieved_labels, purity_f1, score_at_k};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    K,
    GN,
    NumTests,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::GN => "g_n",
            SweepParam::NumTests => "num_tests",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k" => Ok(SweepParam::K),
            "g_n" | "gn" => Ok(SweepParam::GN),
            "num_tests" => Ok(SweepParam::NumTests),
            _ => Err(format!("unknown sweep parameter {s:?} (expected k, g_n or num_tests)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: u32,
    /// Submitted total under the run's strategy.
    pub total: f64,
    /// Score@K with K = value (K sweeps only).
    pub score_at_k: Option<f64>,
    pub avg_clusters: f64,
    pub avg_f1: f64,
}

fn sweep_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Setup(format!("sweep: {}", msg.into()))
}

/// Emits one row per value and writes `sweep-<param>.tsv` into the run.
pub fn sweep(
    ctx: &Context<'_>,
    m: &RunManifest,
    param: SweepParam,
    values: &[u32],
) -> Result<Vec<SweepRow>, PipelineError> {
    for stage in [Stage::Cluster, Stage::Submit] {
        if m.status(stage) != StageStatus::Done {
            return Err(sweep_err(format!("stage {stage} must be done first")));
        }
    }
    let cl: ClusterArtifact = load(ctx, m, Stage::Cluster).map_err(sweep_err)?;
    let sb: SubmitArtifact = load(ctx, m, Stage::Submit).map_err(sweep_err)?;
    let cfg = &m.config;
    let pool_min = cl.subtasks.values().map(|s| s.candidates.len()).min().unwrap_or(0);
    let tests_min = cl
        .subtasks
        .values()
        .filter_map(|s| s.candidates.iter().find(|c| c.is_ok()).map(|c| c.outputs.len()))
        .min()
        .unwrap_or(0);

    let mut rows = Vec::new();
    for &value in values {
        let v = value as usize;
        if v == 0 {
            return Err(sweep_err("values must be >= 1"));
        }
        let (variant, g_n) = match param {
            SweepParam::K => {
                if v > pool_min {
                    return Err(sweep_err(format!("k = {v} exceeds the generated pool of {pool_min}")));
                }
                (recluster(&cl, |sub| sub.candidates.iter().take(v).cloned().collect())?, cfg.games_per_cluster)
            }
            SweepParam::NumTests => {
                if v > tests_min {
                    return Err(sweep_err(format!("num_tests = {v} exceeds the {tests_min} available tests")));
                }
                let variant = recluster(&cl, |sub| {
                    sub.candidates
                        .iter()
                        .cloned()
                        .map(|mut c| {
                            c.outputs.truncate(v);
                            c
                        })
                        .collect()
                })?;
                (variant, cfg.games_per_cluster)
            }
            SweepParam::GN => (cl.clone(), value),
        };
        let rk = rank(ctx, cfg, &variant, cfg.strategy, g_n);
        let result = submit(ctx.packs, cfg, &variant, &rk, sb.pool_grades.clone());

        let mut clusters_sum = 0.0;
        let mut f1_sum = 0.0;
        for (sid, sub) in &variant.subtasks {
            let scores: HashMap<String, f64> = sb
                .pool_grades
                .get(sid)
                .map(|g| g.iter().map(|(k, r)| (k.clone(), r.score)).collect())
                .unwrap_or_default();
            let p = purity_f1(&sub.clusters, &max_achieved_labels(&scores));
            clusters_sum += p.num_clusters as f64;
            f1_sum += p.f1;
        }
        let n = variant.subtasks.len().max(1) as f64;
        let score_at = match param {
            SweepParam::K => {
                let pools: Vec<Vec<f64>> = cl
                    .subtasks
                    .iter()
                    .map(|(sid, sub)| {
                        sub.candidates
                            .iter()
                            .map(|c| sb.pool_grades.get(sid).and_then(|g| g.get(&c.candidate_id)).map_or(0.0, |g| g.score))
                            .collect()
                    })
                    .collect();
                Some(score_at_k(&pools, v, cfg.score_at_k_runs, cfg.rng_seed).map_err(|e| sweep_err(e.to_string()))?)
            }
            _ => None,
        };
        rows.push(SweepRow {
            value,
            total: result.total,
            score_at_k: score_at,
            avg_clusters: clusters_sum / n,
            avg_f1: f1_sum / n,
        });
    }

    let mut body = format!("{param}\ttotal\tscore_at_k\tavg_clusters\tavg_f1\n");
    for r in &rows {
        body += &format!(
            "{}\t{:.4}\t{}\t{:.4}\t{:.4}\n",
            r.value,
            r.total,
            r.score_at_k.map_or("-".into(), |s| format!("{s:.4}")),
            r.avg_clusters,
            r.avg_f1
        );
    }
    let path = ctx.run_dir.join(format!("sweep-{param}.tsv"));
    fs::write(&path, body).map_err(|e| PipelineError::Store {
        path,
        reason: e.to_string(),
    })?;
    Ok(rows)
}

fn recluster(
    cl: &ClusterArtifact,
    select: impl Fn(&ClusterSubtask) -> Vec<crate::clustering::Candidate>,
) -> Result<ClusterArtifact, PipelineError> {
    let mut subtasks = BTreeMap::new();
    for (sid, sub) in &cl.subtasks {
        let candidates = select(sub);
        let clusters = cluster_by_behavior(&candidates).map_err(|e| sweep_err(e.to_string()))?;
        subtasks.insert(sid.clone(), ClusterSubtask { candidates, clusters });
    }
    Ok(ClusterArtifact { subtasks })
}
