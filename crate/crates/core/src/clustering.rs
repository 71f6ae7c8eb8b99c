//! Behavioral clustering: run every candidate on every test input and group
//! candidates whose output vectors are byte-identical.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::digest::{Digest, DigestBuilder};
use crate::sandbox::{CompiledProgram, Limits, Sandbox, SandboxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Ok,
    Unparsed,
    CompileFailed,
    GenerationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: String,
    pub subtask_id: String,
    pub source: Option<String>,
    pub reasoning_tokens: u64,
    pub status: CandidateStatus,
    /// One digest per test case, filled by [`execute_matrix`] for `Ok` candidates.
    #[serde(default)]
    pub outputs: Vec<Digest>,
}

impl Candidate {
    pub fn is_ok(&self) -> bool {
        self.status == CandidateStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: String,
    pub subtask_id: String,
    /// Digest of the whole output vector.
    pub signature: Digest,
    /// Ordered by reasoning length descending, then id ascending.
    pub member_ids: Vec<String>,
    pub representative_id: String,
    pub wins: f64,
    pub games_played: u32,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.member_ids.len()
    }
}

/// Digest of one run's stdout. Truncated outputs never collide with
/// untruncated ones of the same prefix.
pub fn output_digest(stdout: &[u8], truncated: bool) -> Digest {
    if truncated {
        DigestBuilder::new().part(b"truncated").part(stdout).finish()
    } else {
        Digest::of(stdout)
    }
}

/// Zero bytes, no trimming: whitespace-only output is not empty.
pub fn is_empty_output(d: Digest) -> bool {
    d == Digest::of(b"")
}

/// Fills `outputs` for every `Ok` candidate. `programs` maps candidate id to
/// its compiled binary; runs use the subtask limits and execute in parallel
/// over (candidate, test) pairs.
pub fn execute_matrix(
    sandbox: &Sandbox,
    candidates: &mut [Candidate],
    programs: &HashMap<String, CompiledProgram>,
    tests: &[Vec<u8>],
    limits: Limits,
) -> Result<(), SandboxError> {
    let mut pairs = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if c.is_ok() {
            let program = programs.get(&c.candidate_id).ok_or_else(|| {
                SandboxError::InvalidInput(format!("no compiled program for {}", c.candidate_id))
            })?;
            for j in 0..tests.len() {
                pairs.push((i, j, program));
            }
        }
    }
    let results = sandbox.par_map(&pairs, |&(_, j, program)| {
        sandbox
            .run(program, &[], &tests[j], limits)
            .map(|o| output_digest(&o.stdout, o.stdout_truncated))
    });
    for c in candidates.iter_mut().filter(|c| c.is_ok()) {
        c.outputs = Vec::with_capacity(tests.len());
    }
    for ((i, _, _), digest) in pairs.iter().zip(results) {
        candidates[*i].outputs.push(digest?);
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
#[error("candidate {candidate_id} has {found} outputs, expected {expected}")]
pub struct RaggedOutputs {
    pub candidate_id: String,
    pub found: usize,
    pub expected: usize,
}

/// Groups eligible candidates by identical output vectors, dropping every
/// group that produced an empty output on any test.
pub fn cluster_by_behavior(candidates: &[Candidate]) -> Result<Vec<Cluster>, RaggedOutputs> {
    let width = candidates.iter().find(|c| c.is_ok()).map_or(0, |c| c.outputs.len());
    cluster_on_prefix(candidates, width)
}

/// Clusters using only the first `tests` outputs of each candidate.
pub fn cluster_on_prefix(candidates: &[Candidate], tests: usize) -> Result<Vec<Cluster>, RaggedOutputs> {
    let eligible: Vec<&Candidate> = candidates.iter().filter(|c| c.is_ok()).collect();
    for c in &eligible {
        if c.outputs.len() < tests {
            return Err(RaggedOutputs {
                candidate_id: c.candidate_id.clone(),
                found: c.outputs.len(),
                expected: tests,
            });
        }
    }

    // Bucket by signature, then confirm full-vector equality inside a bucket.
    let mut buckets: HashMap<Digest, Vec<Vec<&Candidate>>> = HashMap::new();
    for c in eligible {
        let vector = &c.outputs[..tests];
        let mut b = DigestBuilder::new();
        for d in vector {
            b.digest(*d);
        }
        let groups = buckets.entry(b.finish()).or_default();
        match groups.iter_mut().find(|g| &g[0].outputs[..tests] == vector) {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }

    let mut groups: Vec<(Digest, Vec<&Candidate>)> = buckets
        .into_iter()
        .flat_map(|(sig, gs)| gs.into_iter().map(move |g| (sig, g)))
        .filter(|(_, g)| !g[0].outputs[..tests].iter().any(|d| is_empty_output(*d)))
        .collect();
    for (_, g) in groups.iter_mut() {
        g.sort_by(|a, b| {
            b.reasoning_tokens
                .cmp(&a.reasoning_tokens)
                .then_with(|| a.candidate_id.cmp(&b.candidate_id))
        });
    }
    groups.sort_by(|a, b| min_id(&a.1).cmp(min_id(&b.1)));

    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(pos, (signature, members))| {
            let subtask_id = members[0].subtask_id.clone();
            Cluster {
                cluster_id: format!("{subtask_id}-k{pos:04}"),
                subtask_id,
                signature,
                representative_id: members[0].candidate_id.clone(),
                member_ids: members.iter().map(|c| c.candidate_id.clone()).collect(),
                wins: 0.0,
                games_played: 0,
            }
        })
        .collect())
}

fn min_id<'a>(members: &[&'a Candidate]) -> &'a str {
    members
        .iter()
        .map(|c| c.candidate_id.as_str())
        .min()
        .expect("clusters are non-empty")
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Candidate whose outputs are the digests of the given strings.
    pub fn candidate(id: &str, reasoning: u64, outputs: &[&str]) -> Candidate {
        Candidate {
            candidate_id: id.into(),
            subtask_id: "s".into(),
            source: Some(format!("// {id}")),
            reasoning_tokens: reasoning,
            status: CandidateStatus::Ok,
            outputs: outputs.iter().map(|o| Digest::of(o.as_bytes())).collect(),
        }
    }

    /// O(n²) reference partition by pairwise output-vector equality, with
    /// empty-output groups removed. Returns sorted member-id sets.
    pub fn pairwise_partition(candidates: &[Candidate]) -> Vec<Vec<String>> {
        let eligible: Vec<&Candidate> = candidates.iter().filter(|c| c.is_ok()).collect();
        let mut assigned = vec![false; eligible.len()];
        let mut parts = Vec::new();
        for i in 0..eligible.len() {
            if assigned[i] {
                continue;
            }
            let mut part = Vec::new();
            for j in i..eligible.len() {
                if !assigned[j] && eligible[i].outputs == eligible[j].outputs {
                    assigned[j] = true;
                    part.push(eligible[j].candidate_id.clone());
                }
            }
            if !eligible[i].outputs.iter().any(|d| *d == Digest::of(b"")) {
                part.sort();
                parts.push(part);
            }
        }
        parts.sort();
        parts
    }

    pub fn partition_of(clusters: &[Cluster]) -> Vec<Vec<String>> {
        let mut parts: Vec<Vec<String>> = clusters
            .iter()
            .map(|c| {
                let mut m = c.member_ids.clone();
                m.sort();
                m
            })
            .collect();
        parts.sort();
        parts
    }
}
