//! Pairwise judging with randomized presentation order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{complete_with_retry, selection_prompt, CompletionBackend, CompletionRequest, PromptKind, RequestKey, RetryPolicy};

/// Presentation slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// What the judge said about the solutions as presented.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentedVerdict {
    pub score_a: Option<u8>,
    pub score_b: Option<u8>,
    /// `None` when no parseable judgment was obtained.
    pub pick: Option<Side>,
    pub raw_text: String,
}

/// Anything that can compare two solutions shown as A and B.
pub trait PresentedJudge: Sync {
    fn judge_presented(&self, code_a: &str, code_b: &str, seed: u64) -> PresentedVerdict;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstLabel {
    AWasSolution1,
    AWasSolution2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    FirstSolution,
    SecondSolution,
    /// Recorded when the judge stayed unparseable after a re-ask.
    Draw,
}

/// A judgment mapped back to the caller's input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub first_label: FirstLabel,
    pub score_a: Option<u8>,
    pub score_b: Option<u8>,
    pub winner: Winner,
    pub raw_text: String,
}

impl Judgment {
    pub fn from_presented(first_label: FirstLabel, v: PresentedVerdict) -> Self {
        let winner = match (v.pick, first_label) {
            (None, _) => Winner::Draw,
            (Some(Side::A), FirstLabel::AWasSolution1) | (Some(Side::B), FirstLabel::AWasSolution2) => {
                Winner::FirstSolution
            }
            _ => Winner::SecondSolution,
        };
        Judgment {
            first_label,
            score_a: v.score_a,
            score_b: v.score_b,
            winner,
            raw_text: v.raw_text,
        }
    }

    /// Judge scores in input order: (first solution, second solution).
    pub fn input_scores(&self) -> (Option<u8>, Option<u8>) {
        match self.first_label {
            FirstLabel::AWasSolution1 => (self.score_a, self.score_b),
            FirstLabel::AWasSolution2 => (self.score_b, self.score_a),
        }
    }
}

/// Coin flip for presentation order plus a seed for the judge request.
pub fn draw_presentation(rng: &mut impl Rng) -> (FirstLabel, u64) {
    let label = if rng.random_bool(0.5) {
        FirstLabel::AWasSolution1
    } else {
        FirstLabel::AWasSolution2
    };
    (label, rng.random())
}

pub fn judge_pair(
    judge: &dyn PresentedJudge,
    sol_1: &str,
    sol_2: &str,
    rng: &mut impl Rng,
) -> Judgment {
    let (label, seed) = draw_presentation(rng);
    let (a, b) = match label {
        FirstLabel::AWasSolution1 => (sol_1, sol_2),
        FirstLabel::AWasSolution2 => (sol_2, sol_1),
    };
    Judgment::from_presented(label, judge.judge_presented(a, b, seed))
}

fn value_after<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let line = line.trim().trim_matches('*').trim();
    let head = line.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| line[prefix.len()..].trim_matches(|c: char| c == '*' || c.is_whitespace()))
}

fn parse_score(v: &str) -> Option<u8> {
    let digits: String = v
        .trim_start_matches(['<', '['])
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse::<u8>().ok().filter(|s| *s <= 10)
}

/// Parses the trailing `Score A`, `Score B` and `Judgment` lines. Returns
/// `None` if no judgment line names A or B; out-of-range scores become `None`.
pub fn parse_verdict(text: &str) -> Option<PresentedVerdict> {
    let mut score_a = None;
    let mut score_b = None;
    let mut pick = None;
    for line in text.lines() {
        if let Some(v) = value_after(line, "Score A:") {
            score_a = parse_score(v);
        } else if let Some(v) = value_after(line, "Score B:") {
            score_b = parse_score(v);
        } else if let Some(v) = value_after(line, "Judgment:") {
            let v = v.trim().trim_matches(['[', ']', ' ', '.']);
            pick = match v {
                "A" | "a" => Some(Side::A),
                "B" | "b" => Some(Side::B),
                _ => pick,
            };
        }
    }
    pick.map(|pick| PresentedVerdict {
        score_a,
        score_b,
        pick: Some(pick),
        raw_text: text.to_string(),
    })
}

/// Judge backed by a completion endpoint using the selection prompt.
pub struct LlmJudge<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub subtask_id: String,
    pub statement: String,
    pub max_tokens: u32,
    pub temperature: Option<f64>,
    pub retry: RetryPolicy,
}

impl PresentedJudge for LlmJudge<'_> {
    /// One re-ask on unparseable output; a second failure yields no pick.
    fn judge_presented(&self, code_a: &str, code_b: &str, seed: u64) -> PresentedVerdict {
        let prompt = selection_prompt(&self.statement, code_a, code_b);
        let mut raw = String::new();
        for attempt in 0..2u32 {
            let key = RequestKey {
                kind: PromptKind::Selection,
                subtask_id: self.subtask_id.clone(),
                index: seed,
                attempt,
            };
            let request = CompletionRequest {
                prompt: prompt.clone(),
                max_tokens: self.max_tokens,
                temperature: self.temperature,
                seed: Some(seed.wrapping_add(attempt as u64)),
            };
            match complete_with_retry(self.backend, &key, &request, self.retry) {
                Ok(result) => {
                    if let Some(v) = parse_verdict(&result.answer_text) {
                        return v;
                    }
                    raw = result.answer_text;
                }
                Err(e) => raw = e.to_string(),
            }
        }
        PresentedVerdict {
            score_a: None,
            score_b: None,
            pick: None,
            raw_text: raw,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    struct Constant(Option<Side>);

    impl PresentedJudge for Constant {
        fn judge_presented(&self, _: &str, _: &str, _: u64) -> PresentedVerdict {
            PresentedVerdict {
                score_a: Some(6),
                score_b: Some(4),
                pick: self.0,
                raw_text: String::new(),
            }
        }
    }

    #[test]
    fn winner_maps_back_through_presentation_order() {
        let v = |pick| PresentedVerdict { score_a: None, score_b: None, pick, raw_text: String::new() };
        // Enumerate both orderings and both picks.
        let cases = [
            (FirstLabel::AWasSolution1, Side::A, Winner::FirstSolution),
            (FirstLabel::AWasSolution1, Side::B, Winner::SecondSolution),
            (FirstLabel::AWasSolution2, Side::A, Winner::SecondSolution),
            (FirstLabel::AWasSolution2, Side::B, Winner::FirstSolution),
        ];
        for (label, pick, expected) in cases {
            assert_eq!(Judgment::from_presented(label, v(Some(pick))).winner, expected);
        }
        assert_eq!(Judgment::from_presented(FirstLabel::AWasSolution2, v(None)).winner, Winner::Draw);
    }

    #[test]
    fn constant_a_judge_with_forced_orderings() {
        let judge = Constant(Some(Side::A));
        // Find seeds whose first coin flip forces each ordering.
        let mut found = [false; 2];
        for s in 0..64 {
            let mut rng = seed::rng(s);
            let j = judge_pair(&judge, "x", "y", &mut rng);
            match j.first_label {
                FirstLabel::AWasSolution1 => {
                    assert_eq!(j.winner, Winner::FirstSolution);
                    found[0] = true;
                }
                FirstLabel::AWasSolution2 => {
                    assert_eq!(j.winner, Winner::SecondSolution);
                    assert_eq!(j.input_scores(), (Some(4), Some(6)));
                    found[1] = true;
                }
            }
        }
        assert_eq!(found, [true, true]);
    }

    #[test]
    fn parses_trailing_lines() {
        let v = parse_verdict("reasoning...\nScore A: 7\nScore B: 3\nJudgment: [A]").unwrap();
        assert_eq!((v.score_a, v.score_b, v.pick), (Some(7), Some(3), Some(Side::A)));
        let v = parse_verdict("**Score A:** 11\nScore B: <9>\n**Judgment:** [B]").unwrap();
        assert_eq!((v.score_a, v.score_b, v.pick), (None, Some(9), Some(Side::B)));
        assert!(parse_verdict("no idea").is_none());
        assert!(parse_verdict("Judgment: [C]").is_none());
    }

    #[test]
    fn ties_still_have_a_winner() {
        let v = parse_verdict("Score A: 5\nScore B: 5\nJudgment: [B]").unwrap();
        assert_eq!(v.pick, Some(Side::B));
    }
}
