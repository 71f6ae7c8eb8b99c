use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{report, Context, RunManifest, Stage};
use crate::clustering::{cluster_by_behavior, execute_matrix, Candidate, CandidateStatus, Cluster};
use crate::config::RunConfig;
use crate::digest::Digest;
use crate::llm::{generate_candidates, LlmJudge};
use crate::problem::{ProblemPack, Subtask};
use crate::ranking::{rank_with_strategy, ClusterRanking, Granularity, RankInputs, StrategyName};
use crate::sandbox::{grade, CompiledProgram, GradeResult, Grader, Limits};
use crate::submission::{
    execute_plan, longest_order, plan_flat, plan_round_robin, random_order, Planner, ProblemOutcome,
};
use crate::testgen::{build_generators, build_validators, collect_tests, write_tests, CollectParams, TestCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateArtifact {
    pub subtasks: BTreeMap<String, Vec<Candidate>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTest {
    #[serde(flatten)]
    pub meta: TestCase,
    /// Object holding the raw input bytes.
    pub input: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestgenSubtask {
    pub generators: Vec<u64>,
    pub validators: Vec<u64>,
    pub attempts: u64,
    pub tests: Vec<StoredTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestgenArtifact {
    pub subtasks: BTreeMap<String, TestgenSubtask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSubtask {
    /// Candidates with output digests filled in.
    pub candidates: Vec<Candidate>,
    pub clusters: Vec<Cluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub subtasks: BTreeMap<String, ClusterSubtask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankArtifact {
    pub strategy: StrategyName,
    pub rankings: BTreeMap<String, ClusterRanking>,
    /// Clusters with their tournament tallies filled in.
    pub clusters: BTreeMap<String, Vec<Cluster>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitArtifact {
    /// Official-test grade of every compiling candidate, for metrics.
    pub pool_grades: BTreeMap<String, BTreeMap<String, GradeResult>>,
    pub outcomes: Vec<ProblemOutcome>,
    pub total: f64,
}

pub(super) fn load<T: DeserializeOwned>(ctx: &Context<'_>, m: &RunManifest, stage: Stage) -> Result<T, String> {
    let d = m
        .artifact(stage)
        .ok_or_else(|| format!("no artifact recorded for stage {stage}"))?;
    ctx.store().get_json(d).map_err(|e| e.to_string())
}

fn put_json<T: Serialize>(ctx: &Context<'_>, value: &T) -> Result<Digest, String> {
    ctx.store().put_json(value).map_err(|e| e.to_string())
}

pub(super) fn execute(ctx: &Context<'_>, m: &RunManifest, stage: Stage) -> Result<Digest, String> {
    let cfg = &m.config;
    match stage {
        Stage::Generate => put_json(ctx, &generate(ctx, cfg)?),
        Stage::Testgen => put_json(ctx, &testgen(ctx, cfg)?),
        Stage::Cluster => {
            let gen: GenerateArtifact = load(ctx, m, Stage::Generate)?;
            let tg: TestgenArtifact = load(ctx, m, Stage::Testgen)?;
            put_json(ctx, &cluster(ctx, &gen, &tg)?)
        }
        Stage::Rank => {
            let cl: ClusterArtifact = load(ctx, m, Stage::Cluster)?;
            put_json(ctx, &rank(ctx, cfg, &cl, cfg.strategy, cfg.games_per_cluster))
        }
        Stage::Submit => {
            let cl: ClusterArtifact = load(ctx, m, Stage::Cluster)?;
            let rk: RankArtifact = load(ctx, m, Stage::Rank)?;
            let pool_grades = grade_pool(ctx, &cl)?;
            put_json(ctx, &submit(ctx.packs, cfg, &cl, &rk, pool_grades))
        }
        Stage::Report => {
            let cl: ClusterArtifact = load(ctx, m, Stage::Cluster)?;
            let rk: RankArtifact = load(ctx, m, Stage::Rank)?;
            let sb: SubmitArtifact = load(ctx, m, Stage::Submit)?;
            put_json(ctx, &report::write_report(ctx, m, &cl, &rk, &sb)?)
        }
    }
}

fn subtasks<'a>(packs: &'a [ProblemPack]) -> impl Iterator<Item = (&'a ProblemPack, &'a Subtask)> {
    packs.iter().flat_map(|p| p.subtasks.iter().map(move |s| (p, s)))
}

fn compile_candidates(
    ctx: &Context<'_>,
    pack: &ProblemPack,
    candidates: &[Candidate],
) -> Result<Vec<Option<CompiledProgram>>, String> {
    let compiled = ctx.sandbox.par_map(candidates, |c| match (&c.source, c.status) {
        (Some(src), CandidateStatus::Ok | CandidateStatus::CompileFailed) => {
            ctx.sandbox.compile_solution(src, pack.harness.as_deref()).map(Some)
        }
        _ => Ok(None),
    });
    compiled.into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())
}

fn generate(ctx: &Context<'_>, cfg: &RunConfig) -> Result<GenerateArtifact, String> {
    let mut out = BTreeMap::new();
    for (pack, s) in subtasks(ctx.packs) {
        let mut cands = generate_candidates(ctx.backend, ctx.sandbox.pool(), s, cfg.k_generations, cfg, ctx.retry)
            .map_err(|e| e.to_string())?;
        let compiled = compile_candidates(ctx, pack, &cands)?;
        for (c, p) in cands.iter_mut().zip(compiled) {
            if matches!(p, Some(ref p) if !p.compile_ok) {
                c.status = CandidateStatus::CompileFailed;
            }
        }
        let ok = cands.iter().filter(|c| c.is_ok()).count();
        log::info!("{}: {ok}/{} candidates compile", s.subtask_id, cands.len());
        out.insert(s.subtask_id.clone(), cands);
    }
    Ok(GenerateArtifact { subtasks: out })
}

fn testgen(ctx: &Context<'_>, cfg: &RunConfig) -> Result<TestgenArtifact, String> {
    let store = ctx.store();
    let mut out = BTreeMap::new();
    for (_, s) in subtasks(ctx.packs) {
        let gens = build_generators(ctx.backend, ctx.sandbox, s, cfg.num_generators, cfg, ctx.retry)
            .map_err(|e| e.to_string())?;
        let vals = build_validators(ctx.backend, ctx.sandbox, s, cfg.num_validators, cfg, ctx.retry)
            .map_err(|e| e.to_string())?;
        let params = CollectParams {
            target: cfg.num_tests as usize,
            threshold: cfg.validator_threshold,
            attempt_factor: cfg.testgen_attempt_factor,
            seed: cfg.rng_seed,
            limits: Limits::new(cfg.tool_time_limit_ms, cfg.tool_memory_limit_mib),
        };
        let collection = collect_tests(ctx.sandbox, &s.subtask_id, &gens, &vals, &params).map_err(|e| e.to_string())?;
        write_tests(&ctx.run_dir.join("tests").join(&s.subtask_id), &collection.tests).map_err(|e| e.to_string())?;
        let tests = collection
            .tests
            .into_iter()
            .map(|t| {
                let input = store.put_bytes(&t.input).map_err(|e| e.to_string())?;
                Ok(StoredTest { meta: t, input })
            })
            .collect::<Result<Vec<_>, String>>()?;
        log::info!(
            "{}: {} tests from {} attempts ({} generators, {} validators)",
            s.subtask_id,
            tests.len(),
            collection.attempts,
            gens.len(),
            vals.len()
        );
        out.insert(
            s.subtask_id.clone(),
            TestgenSubtask {
                generators: gens.iter().map(|g| g.index).collect(),
                validators: vals.iter().map(|v| v.index).collect(),
                attempts: collection.attempts,
                tests,
            },
        );
    }
    Ok(TestgenArtifact { subtasks: out })
}

fn cluster(ctx: &Context<'_>, gen: &GenerateArtifact, tg: &TestgenArtifact) -> Result<ClusterArtifact, String> {
    let store = ctx.store();
    let mut out = BTreeMap::new();
    for (pack, s) in subtasks(ctx.packs) {
        let mut cands = gen.subtasks.get(&s.subtask_id).cloned().unwrap_or_default();
        let tests = tg
            .subtasks
            .get(&s.subtask_id)
            .ok_or_else(|| format!("no tests for {}", s.subtask_id))?
            .tests
            .iter()
            .map(|t| store.get_bytes(t.input).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let compiled = compile_candidates(ctx, pack, &cands)?;
        let mut programs = HashMap::new();
        for (c, p) in cands.iter_mut().zip(compiled) {
            match p {
                Some(p) if p.compile_ok && c.is_ok() => {
                    programs.insert(c.candidate_id.clone(), p);
                }
                _ if c.is_ok() => c.status = CandidateStatus::CompileFailed,
                _ => {}
            }
        }
        let limits = Limits {
            time: s.time_limit,
            memory_bytes: s.memory_limit_bytes(),
        };
        execute_matrix(ctx.sandbox, &mut cands, &programs, &tests, limits).map_err(|e| e.to_string())?;
        let clusters = cluster_by_behavior(&cands).map_err(|e| e.to_string())?;
        log::info!("{}: {} clusters", s.subtask_id, clusters.len());
        out.insert(s.subtask_id.clone(), ClusterSubtask { candidates: cands, clusters });
    }
    Ok(ClusterArtifact { subtasks: out })
}

pub(super) fn rank_one(
    ctx: &Context<'_>,
    cfg: &RunConfig,
    s: &Subtask,
    candidates: &[Candidate],
    clusters: &[Cluster],
    strategy: StrategyName,
    g_n: u32,
) -> (ClusterRanking, Vec<Cluster>) {
    let judge = LlmJudge {
        backend: ctx.backend,
        subtask_id: s.subtask_id.clone(),
        statement: s.statement.clone(),
        max_tokens: cfg.max_tokens,
        temperature: cfg.temperature,
        retry: ctx.retry,
    };
    let ranking = rank_with_strategy(
        strategy,
        &RankInputs {
            subtask_id: &s.subtask_id,
            clusters,
            candidates,
            judge: &judge,
            g_n,
            seed: cfg.rng_seed,
            pool: ctx.sandbox.pool(),
        },
    );
    let mut tallied = clusters.to_vec();
    for c in tallied.iter_mut() {
        c.wins = ranking.per_cluster_wins.get(&c.cluster_id).copied().unwrap_or(0.0);
        c.games_played = ranking
            .games
            .iter()
            .filter(|g| g.scheduler == c.cluster_id || g.opponent == c.cluster_id)
            .count() as u32;
    }
    (ranking, tallied)
}

pub(super) fn rank(ctx: &Context<'_>, cfg: &RunConfig, cl: &ClusterArtifact, strategy: StrategyName, g_n: u32) -> RankArtifact {
    let mut rankings = BTreeMap::new();
    let mut clusters = BTreeMap::new();
    for (_, s) in subtasks(ctx.packs) {
        let Some(sub) = cl.subtasks.get(&s.subtask_id) else { continue };
        let (r, c) = rank_one(ctx, cfg, s, &sub.candidates, &sub.clusters, strategy, g_n);
        rankings.insert(s.subtask_id.clone(), r);
        clusters.insert(s.subtask_id.clone(), c);
    }
    RankArtifact { strategy, rankings, clusters }
}

fn grade_pool(ctx: &Context<'_>, cl: &ClusterArtifact) -> Result<BTreeMap<String, BTreeMap<String, GradeResult>>, String> {
    let mut out = BTreeMap::new();
    for (pack, s) in subtasks(ctx.packs) {
        let Some(sub) = cl.subtasks.get(&s.subtask_id) else { continue };
        let grader = Grader::for_subtask(ctx.sandbox, s).map_err(|e| e.to_string())?;
        let ok: Vec<&Candidate> = sub.candidates.iter().filter(|c| c.is_ok()).collect();
        let results = ctx.sandbox.par_map(&ok, |c| {
            let p = ctx.sandbox.compile_solution(c.source.as_deref().unwrap_or(""), pack.harness.as_deref())?;
            grade(ctx.sandbox, &p, s, &grader, &s.official_tests)
        });
        let mut grades = BTreeMap::new();
        for (c, r) in ok.iter().zip(results) {
            grades.insert(c.candidate_id.clone(), r.map_err(|e| e.to_string())?);
        }
        out.insert(s.subtask_id.clone(), grades);
    }
    Ok(out)
}

pub(super) fn planner_for(
    cfg: &RunConfig,
    strategy: StrategyName,
    pack: &ProblemPack,
    cl: &ClusterArtifact,
    rk: &RankArtifact,
) -> Planner {
    let flat = |order: &dyn Fn(&[Candidate], &str) -> Vec<String>| {
        let ordered: BTreeMap<String, Vec<String>> = pack
            .subtasks
            .iter()
            .filter_map(|s| cl.subtasks.get(&s.subtask_id).map(|sub| (s.subtask_id.clone(), order(&sub.candidates, &s.subtask_id))))
            .collect();
        plan_flat(pack, &ordered, pack.submission_cap)
    };
    match (strategy, cfg.random_granularity) {
        (StrategyName::Random, Granularity::Candidate) => flat(&|c, sid| random_order(c, cfg.rng_seed, sid)),
        (StrategyName::Longest, Granularity::Candidate) => flat(&|c, _| longest_order(c)),
        _ => plan_round_robin(pack, &rk.rankings, &rk.clusters, pack.submission_cap),
    }
}

/// Replays the submission policy against precomputed pool grades.
pub(super) fn submit(
    packs: &[ProblemPack],
    cfg: &RunConfig,
    cl: &ClusterArtifact,
    rk: &RankArtifact,
    pool_grades: BTreeMap<String, BTreeMap<String, GradeResult>>,
) -> SubmitArtifact {
    let mut outcomes = Vec::new();
    for pack in packs {
        let planner = planner_for(cfg, rk.strategy, pack, cl, rk);
        let outcome = execute_plan(pack, planner, |e| {
            Ok::<_, Infallible>(
                pool_grades
                    .get(&e.subtask_id)
                    .and_then(|g| g.get(&e.candidate_id))
                    .cloned()
                    .unwrap_or(GradeResult {
                        subtask_id: e.subtask_id.clone(),
                        score: 0.0,
                        verdict: "not-graded".into(),
                    }),
            )
        })
        .unwrap_or_else(|e| match e.error {});
        outcomes.push(outcome);
    }
    let total = outcomes.iter().map(|o| o.total).sum();
    SubmitArtifact {
        pool_grades,
        outcomes,
        total,
    }
}
