use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScoreError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub problem: String,
    pub algorithm: String,
    pub raw_score: f64,
    pub llm_calls: u64,
    pub evaluations: u64,
}

/// Distance from the worst entry over the best-worst span, so the best
/// algorithm maps to 1 and the worst to 0. Repeated algorithms keep their
/// direction-best entry.
pub fn normalized_scores(entries: &[BenchmarkEntry], direction: Direction) -> Result<BTreeMap<String, f64>, ScoreError> {
    let mut per_algo: BTreeMap<String, f64> = BTreeMap::new();
    for e in entries {
        per_algo
            .entry(e.algorithm.clone())
            .and_modify(|s| {
                if direction.better(e.raw_score, *s) {
                    *s = e.raw_score
                }
            })
            .or_insert(e.raw_score);
    }
    if per_algo.len() < 2 {
        return Err(ScoreError::TooFewEntries(per_algo.len()));
    }
    let scores: Vec<f64> = per_algo.values().copied().collect();
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    let (best, worst) = match direction {
        Direction::Maximize => (hi, lo),
        Direction::Minimize => (lo, hi),
    };
    let span = (best - worst).abs();
    if span == 0.0 || !span.is_finite() {
        return Err(ScoreError::DegenerateRange);
    }
    Ok(per_algo
        .into_iter()
        .map(|(a, s)| (a, (s - worst).abs() / span))
        .collect())
}

/// Like [`normalized_scores`], but a degenerate range (or a lone algorithm)
/// maps every algorithm to 1.
pub fn normalized_scores_or_flat(entries: &[BenchmarkEntry], direction: Direction) -> Result<BTreeMap<String, f64>, ScoreError> {
    match normalized_scores(entries, direction) {
        Err(ScoreError::DegenerateRange | ScoreError::TooFewEntries(1)) => Ok(entries.iter().map(|e| (e.algorithm.clone(), 1.0)).collect()),
        other => other,
    }
}
