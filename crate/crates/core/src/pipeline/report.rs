//! Final report: per-problem score table, medal line and metric tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;

use serde::{Deserialize, Serialize};

use super::stages::{ClusterArtifact, RankArtifact, SubmitArtifact};
use super::{Context, RunManifest};
use crate::config::MedalThreshold;
use crate::metrics::{
    best_cluster_rank, cluster_stats, max_achieved_labels, purity_f1, score_at_k, top_k_inclusion, ClusterStatsRow,
    PurityReport, TopK,
};
use crate::problem::ProblemPack;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub text: String,
    pub score_at_k: Vec<(usize, f64)>,
    pub purity: BTreeMap<String, PurityReport>,
    pub top_k: TopK,
    pub cluster_stats: Vec<AvgClusterStats>,
}

/// Cluster statistics averaged over subtasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvgClusterStats {
    pub num_tests: usize,
    pub avg_size: f64,
    pub avg_num_clusters: f64,
    pub f1: f64,
}

/// First threshold in listed order that `total` reaches.
pub fn medal_for(total: f64, thresholds: &[MedalThreshold]) -> Option<&MedalThreshold> {
    thresholds.iter().find(|m| total >= m.min_total - 1e-9)
}

fn fmt_score(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    if r.fract() == 0.0 {
        format!("{r:.0}")
    } else {
        format!("{r:.2}")
    }
}

/// Table with one column per problem plus the total, then the medal line.
pub fn render_report(m: &RunManifest, packs: &[ProblemPack], submit: &SubmitArtifact) -> String {
    let mut out = String::new();
    let cfg = &m.config;
    let _ = writeln!(out, "Run {}", m.run_id);
    let _ = writeln!(
        out,
        "strategy {}  seed {}  backend {}  K {}  G_n {}  tests {}",
        cfg.strategy, cfg.rng_seed, m.backend, cfg.k_generations, cfg.games_per_cluster, cfg.num_tests
    );
    out.push('\n');

    let mut header = vec!["".to_string()];
    let mut scores = vec!["Score".to_string()];
    let mut used = vec!["Submissions".to_string()];
    for (pack, o) in packs.iter().zip(&submit.outcomes) {
        header.push(pack.problem_id.clone());
        scores.push(fmt_score(o.total));
        used.push(o.submissions_used.to_string());
    }
    header.push("Total".into());
    scores.push(fmt_score(submit.total));
    used.push(submit.outcomes.iter().map(|o| o.submissions_used).sum::<u32>().to_string());
    let widths: Vec<usize> = (0..header.len())
        .map(|i| [&header, &scores, &used].iter().map(|r| r[i].len()).max().unwrap())
        .collect();
    let row = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    out += &row(&header);
    out += &format!("|{}|\n", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|"));
    out += &row(&scores);
    out += &row(&used);
    out.push('\n');

    match medal_for(submit.total, &cfg.medal_thresholds) {
        Some(medal) => {
            let _ = writeln!(out, "Medal: {} (threshold {})", medal.name, fmt_score(medal.min_total));
        }
        None if cfg.medal_thresholds.is_empty() => {
            let _ = writeln!(out, "Medal: n/a (no thresholds configured)");
        }
        None => {
            let _ = writeln!(out, "Medal: none");
        }
    }
    out.push('\n');

    let _ = writeln!(out, "Per subtask:");
    for (pack, o) in packs.iter().zip(&submit.outcomes) {
        for s in &pack.subtasks {
            let best = o.per_subtask_best.get(&s.subtask_id).copied().unwrap_or(0.0);
            let n = o.log.iter().filter(|r| r.entry.subtask_id == s.subtask_id).count();
            let _ = writeln!(
                out,
                "  {:<24} {:>7} / {:<7} submissions {n}",
                s.subtask_id,
                fmt_score(best),
                fmt_score(s.max_score)
            );
        }
    }
    out
}

fn tsv<R>(header: &str, rows: impl IntoIterator<Item = R>, line: impl Fn(R) -> String) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s += &line(r);
        s.push('\n');
    }
    s
}

fn test_prefixes(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000].into_iter().filter(|&t| t < n).collect();
    if n > 0 {
        v.push(n);
    }
    v
}

pub(super) fn write_report(
    ctx: &Context<'_>,
    m: &RunManifest,
    cl: &ClusterArtifact,
    rk: &RankArtifact,
    sb: &SubmitArtifact,
) -> Result<ReportArtifact, String> {
    let cfg = &m.config;
    let text = render_report(m, ctx.packs, sb);

    // Score@K over each subtask's full generated pool (failures score 0).
    let pools: Vec<Vec<f64>> = cl
        .subtasks
        .iter()
        .map(|(sid, sub)| {
            let grades = sb.pool_grades.get(sid);
            sub.candidates
                .iter()
                .map(|c| grades.and_then(|g| g.get(&c.candidate_id)).map_or(0.0, |g| g.score))
                .collect()
        })
        .collect();
    let k_max = pools.iter().map(|p| p.len()).min().unwrap_or(0);
    let mut ks: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2)).take_while(|&k| k < k_max).collect();
    if k_max > 0 {
        ks.push(k_max);
    }
    let score_rows = ks
        .iter()
        .map(|&k| score_at_k(&pools, k, cfg.score_at_k_runs, cfg.rng_seed).map(|s| (k, s)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;

    let mut purity = BTreeMap::new();
    let mut best_ranks = Vec::new();
    let mut stats: Vec<Vec<ClusterStatsRow>> = Vec::new();
    for (sid, sub) in &cl.subtasks {
        let scores: HashMap<String, f64> = sb
            .pool_grades
            .get(sid)
            .map(|g| g.iter().map(|(k, v)| (k.clone(), v.score)).collect())
            .unwrap_or_default();
        let labels = max_achieved_labels(&scores);
        purity.insert(sid.clone(), purity_f1(&sub.clusters, &labels));
        if let Some(r) = rk.rankings.get(sid) {
            best_ranks.push(best_cluster_rank(r, &sub.clusters, &scores));
        }
        let width = sub.candidates.iter().find(|c| c.is_ok()).map_or(0, |c| c.outputs.len());
        stats.push(cluster_stats(&sub.candidates, &test_prefixes(width), &labels).map_err(|e| e.to_string())?);
    }
    let top_k = top_k_inclusion(&best_ranks, cfg.top_k as usize);
    let n = stats.len().max(1) as f64;
    let cluster_stats: Vec<AvgClusterStats> = stats
        .first()
        .map(|first| {
            (0..first.len())
                .map(|i| {
                    let rows: Vec<&ClusterStatsRow> = stats.iter().filter_map(|s| s.get(i)).collect();
                    AvgClusterStats {
                        num_tests: first[i].num_tests,
                        avg_size: rows.iter().map(|r| r.avg_size).sum::<f64>() / n,
                        avg_num_clusters: rows.iter().map(|r| r.num_clusters).sum::<usize>() as f64 / n,
                        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
                    }
                })
                .collect()
        })
        .unwrap_or_default();

    let mut full = text.clone();
    let _ = writeln!(
        full,
        "\nBest cluster within top {}: {}/{} subtasks",
        top_k.k, top_k.included, top_k.total
    );

    let write = |name: &str, body: &str| {
        fs::write(ctx.run_dir.join(name), body).map_err(|e| format!("writing {name}: {e}"))
    };
    write("report.txt", &full)?;
    write(
        "score_at_k.tsv",
        &tsv("k\tscore", &score_rows, |(k, s)| format!("{k}\t{s:.4}")),
    )?;
    write(
        "purity.tsv",
        &tsv("subtask\tf1\tprecision\trecall\tavg_cluster_size\tnum_clusters", &purity, |(sid, p)| {
            format!(
                "{sid}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
                p.f1, p.precision, p.recall, p.avg_cluster_size, p.num_clusters
            )
        }),
    )?;
    write(
        "top_k.tsv",
        &tsv("subtask\tbest_rank\tincluded", rk.rankings.keys().zip(best_ranks.iter().zip(&top_k.flags)), |(sid, (r, f))| {
            format!("{sid}\t{}\t{f}", r.map_or("-".to_string(), |r| r.to_string()))
        }),
    )?;
    write(
        "cluster_stats.tsv",
        &tsv("num_tests\tavg_cluster_size\tavg_num_clusters\tf1", &cluster_stats, |r| {
            format!("{}\t{:.4}\t{:.4}\t{:.4}", r.num_tests, r.avg_size, r.avg_num_clusters, r.f1)
        }),
    )?;
    Ok(ReportArtifact {
        text: full,
        score_at_k: score_rows,
        purity,
        top_k,
        cluster_stats,
    })
}
