use std::path::Path;

use serde::Serialize;

use super::{normalized_scores_or_flat, BenchmarkEntry, Direction, ScoreError};
use crate::soldb::SolutionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetAxis {
    LlmCalls,
    Evaluations,
}

impl BudgetAxis {
    pub fn label(self) -> &'static str {
        match self {
            BudgetAxis::LlmCalls => "llm_calls",
            BudgetAxis::Evaluations => "evaluations",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub budget: u64,
    pub best: f64,
}

/// Best valid score seen by each budget level, one point per valid record.
/// Records are ordered by their budget stamp on `axis`, then by serial.
pub fn best_so_far_curve(records: &[SolutionRecord], axis: BudgetAxis, direction: Direction) -> Vec<CurvePoint> {
    let mut valid: Vec<&SolutionRecord> = records.iter().filter(|r| r.valid).collect();
    let at = |r: &SolutionRecord| match axis {
        BudgetAxis::LlmCalls => r.budget.llm_calls,
        BudgetAxis::Evaluations => r.budget.evaluations,
    };
    valid.sort_by_key(|r| (at(r), r.id.serial));
    let mut out: Vec<CurvePoint> = Vec::with_capacity(valid.len());
    for r in valid {
        let best = match out.last() {
            Some(p) if !direction.better(r.score, p.best) => p.best,
            _ => r.score,
        };
        match out.last_mut() {
            Some(p) if p.budget == at(r) => p.best = best,
            _ => out.push(CurvePoint { budget: at(r), best }),
        }
    }
    out
}

fn io(e: impl std::fmt::Display) -> ScoreError {
    ScoreError::Io(e.to_string())
}

pub fn write_curve_csv(path: &Path, axis: BudgetAxis, curve: &[CurvePoint]) -> Result<(), ScoreError> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([axis.label(), "best_score"]).map_err(io)?;
    for p in curve {
        w.write_record([p.budget.to_string(), p.best.to_string()]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One row per algorithm: raw score, normalized score and budgets used.
pub fn write_problem_table(path: &Path, entries: &[BenchmarkEntry], direction: Direction) -> Result<(), ScoreError> {
    let norm = normalized_scores_or_flat(entries, direction)?;
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["problem", "algorithm", "raw_score", "normalized", "llm_calls", "evaluations"])
        .map_err(io)?;
    for e in entries {
        w.write_record([
            e.problem.clone(),
            e.algorithm.clone(),
            e.raw_score.to_string(),
            format!("{:.3}", norm[&e.algorithm]),
            e.llm_calls.to_string(),
            e.evaluations.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
