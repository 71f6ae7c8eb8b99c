//! Pairwise tournament between cluster representatives.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::llm::{draw_presentation, FirstLabel, Judgment, PresentedJudge, Winner};
use crate::par::WorkerPool;
use crate::seed;

/// One cluster as it enters the tournament.
#[derive(Debug, Clone)]
pub struct Entrant<'a> {
    pub cluster_id: &'a str,
    pub representative_id: &'a str,
    pub code: &'a str,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub round: u32,
    /// Cluster whose schedule the game belongs to; it is solution 1.
    pub scheduler: String,
    pub opponent: String,
    pub first_label: FirstLabel,
    pub winner: Winner,
    pub score_scheduler: Option<u8>,
    pub score_opponent: Option<u8>,
    /// True when the verdict was reused from an identical earlier presentation.
    pub cached: bool,
    pub raw_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub wins: f64,
    pub games: u32,
    pub score_sum: f64,
    pub scored: u32,
}

impl Tally {
    pub fn avg_score(&self) -> f64 {
        if self.scored == 0 {
            0.0
        } else {
            self.score_sum / self.scored as f64
        }
    }

    fn record(&mut self, win: f64, score: Option<u8>) {
        self.wins += win;
        self.games += 1;
        if let Some(s) = score {
            self.score_sum += s as f64;
            self.scored += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TournamentResult {
    pub tallies: BTreeMap<String, Tally>,
    pub games: Vec<GameRecord>,
}

/// Opponent indices for entrant `i`: uniform without replacement from the
/// others, restarting with a fresh shuffle once every opponent has been used.
fn schedule(n: usize, i: usize, games: u32, seed: u64, cluster_id: &str) -> Vec<usize> {
    let mut rng = seed::derived_rng(seed, &["schedule", cluster_id]);
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut out = Vec::with_capacity(games as usize);
    while out.len() < games as usize {
        let mut pass = others.clone();
        pass.shuffle(&mut rng);
        out.extend(pass.into_iter().take(games as usize - out.len()));
    }
    out
}

/// Every entrant schedules `g_n` games. Both participants' tallies are
/// updated; draws give half a win each. Verdicts are cached by the
/// presented (A, B) pair.
pub fn run_tournament(
    entrants: &[Entrant<'_>],
    judge: &dyn PresentedJudge,
    g_n: u32,
    seed: u64,
    pool: &WorkerPool,
) -> TournamentResult {
    let mut tallies: BTreeMap<String, Tally> = entrants
        .iter()
        .map(|e| (e.cluster_id.to_string(), Tally::default()))
        .collect();
    let mut games = Vec::new();
    if entrants.len() < 2 {
        return TournamentResult { tallies, games };
    }
    let schedules: Vec<Vec<usize>> = entrants
        .iter()
        .enumerate()
        .map(|(i, e)| schedule(entrants.len(), i, g_n, seed, e.cluster_id))
        .collect();
    let mut order: Vec<usize> = (0..entrants.len()).collect();
    order.sort_by_key(|&i| entrants[i].cluster_id);

    let mut cache: HashMap<(&str, &str), crate::llm::PresentedVerdict> = HashMap::new();
    for round in 0..g_n {
        // Presentation order and judge seed are fixed before any judging.
        let planned: Vec<(usize, usize, FirstLabel, u64)> = order
            .iter()
            .map(|&i| {
                let j = schedules[i][round as usize];
                let mut rng = seed::derived_rng(seed, &["game", entrants[i].cluster_id, &round.to_string()]);
                let (label, judge_seed) = draw_presentation(&mut rng);
                (i, j, label, judge_seed)
            })
            .collect();
        let presented = |&(i, j, label, _): &(usize, usize, FirstLabel, u64)| match label {
            FirstLabel::AWasSolution1 => (i, j),
            FirstLabel::AWasSolution2 => (j, i),
        };
        let mut fresh: Vec<(usize, usize, u64)> = Vec::new();
        for p in &planned {
            let (a, b) = presented(p);
            let key = (entrants[a].representative_id, entrants[b].representative_id);
            if !cache.contains_key(&key) && !fresh.iter().any(|&(x, y, _)| (x, y) == (a, b)) {
                fresh.push((a, b, p.3));
            }
        }
        let verdicts = pool.map(&fresh, |&(a, b, s)| judge.judge_presented(entrants[a].code, entrants[b].code, s));
        let mut new_keys = std::collections::HashSet::new();
        for (&(a, b, _), v) in fresh.iter().zip(verdicts) {
            let key = (entrants[a].representative_id, entrants[b].representative_id);
            new_keys.insert(key);
            cache.insert(key, v);
        }
        let mut used_fresh = std::collections::HashSet::new();
        for p in &planned {
            let (a, b) = presented(p);
            let key = (entrants[a].representative_id, entrants[b].representative_id);
            let cached = !(new_keys.contains(&key) && used_fresh.insert(key));
            let j = Judgment::from_presented(p.2, cache[&key].clone());
            let (s1, s2) = j.input_scores();
            let (w1, w2) = match j.winner {
                Winner::FirstSolution => (1.0, 0.0),
                Winner::SecondSolution => (0.0, 1.0),
                Winner::Draw => (0.5, 0.5),
            };
            let (ci, cj) = (entrants[p.0].cluster_id, entrants[p.1].cluster_id);
            tallies.get_mut(ci).unwrap().record(w1, s1);
            tallies.get_mut(cj).unwrap().record(w2, s2);
            games.push(GameRecord {
                round,
                scheduler: ci.to_string(),
                opponent: cj.to_string(),
                first_label: j.first_label,
                winner: j.winner,
                score_scheduler: s1,
                score_opponent: s2,
                cached,
                raw_text: j.raw_text,
            });
        }
    }
    TournamentResult { tallies, games }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::llm::{PresentedVerdict, Side};
    use rand::Rng;

    /// Judge reading `q=<n>` quality tags; picks the better side with
    /// probability `accuracy` (equal qualities are a coin flip).
    pub struct QualityJudge {
        pub accuracy: f64,
    }

    pub fn quality(code: &str) -> i64 {
        code.trim_start_matches("q=").parse().unwrap()
    }

    impl PresentedJudge for QualityJudge {
        fn judge_presented(&self, a: &str, b: &str, seed: u64) -> PresentedVerdict {
            let mut rng = seed::rng(seed);
            let (qa, qb) = (quality(a), quality(b));
            let better = match qa.cmp(&qb) {
                std::cmp::Ordering::Greater => Side::A,
                std::cmp::Ordering::Less => Side::B,
                _ if rng.random_bool(0.5) => Side::A,
                _ => Side::B,
            };
            let pick = if rng.random_bool(self.accuracy) {
                better
            } else if better == Side::A {
                Side::B
            } else {
                Side::A
            };
            PresentedVerdict {
                score_a: Some(qa.clamp(0, 10) as u8),
                score_b: Some(qb.clamp(0, 10) as u8),
                pick: Some(pick),
                raw_text: String::new(),
            }
        }
    }

    pub struct DrawJudge;

    impl PresentedJudge for DrawJudge {
        fn judge_presented(&self, _: &str, _: &str, _: u64) -> PresentedVerdict {
            PresentedVerdict {
                score_a: None,
                score_b: None,
                pick: None,
                raw_text: String::new(),
            }
        }
    }

    /// Entrants `k000..` with codes `q=<quality>`.
    pub fn entrants(qualities: &[i64]) -> (Vec<String>, Vec<String>) {
        let ids = (0..qualities.len()).map(|i| format!("k{i:03}")).collect();
        let codes = qualities.iter().map(|q| format!("q={q}")).collect();
        (ids, codes)
    }

    pub fn as_entrants<'a>(ids: &'a [String], codes: &'a [String]) -> Vec<Entrant<'a>> {
        ids.iter()
            .zip(codes)
            .map(|(id, code)| Entrant {
                cluster_id: id,
                representative_id: id,
                code,
                size: 1,
            })
            .collect()
    }
}
