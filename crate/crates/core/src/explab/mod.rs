//! Evaluation and the experiment loop.
//!
//! Evaluation is physical: a child process in a scratch directory, killed on
//! timeout, whose output ends in a machine-readable result block. Failures
//! are statuses, not errors. On top of that, [`run_experiments`] drives the
//! analyze–act–re-evaluate loop over one candidate and restores the
//! best-scoring snapshot at the end if the candidate regressed.

mod allocate;
mod callbacks;
mod experiment;
mod patch;
mod protocol;
mod sandbox;
mod truncate;

use std::time::Duration;

use serde::Serialize;

use crate::soldb::{FeatureSignature, MetricsRecord};

pub use allocate::{allocate_repeats, RepeatPolicy};
pub use callbacks::CallbacksFile;
pub use experiment::{
    parse_action, run_experiments, Attempt, ExperimentAction, ExperimentInput, ExperimentOutcome, ExperimentSetup,
    StopReason,
};
pub use patch::{apply_patch, parse_patch, PatchBlock, PatchError};
pub use protocol::{format_result_block, parse_result_block, BlockError, ResultBlock, BEGIN_MARKER, END_MARKER};
pub use sandbox::ProcessEvaluator;
pub use truncate::truncate_log;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    Timeout,
    NoEndMarker,
    NonzeroExit,
    ParseError,
}

impl EvalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Timeout => "timeout",
            EvalStatus::NoEndMarker => "no_end_marker",
            EvalStatus::NonzeroExit => "nonzero_exit",
            EvalStatus::ParseError => "parse_error",
        }
    }
}

/// Outcome of one evaluation. `metrics`, `features` and `score` are all set
/// exactly when the status is ok.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub status: EvalStatus,
    pub metrics: MetricsRecord,
    pub features: Option<FeatureSignature>,
    pub score: Option<f64>,
    #[serde(skip)]
    pub raw_log: String,
    #[serde(serialize_with = "secs")]
    pub duration: Duration,
    pub exit_code: Option<i32>,
    /// Why a block was rejected, when it was.
    pub detail: Option<String>,
}

fn secs<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl EvalResult {
    pub fn ok(metrics: MetricsRecord, features: FeatureSignature, score: f64, raw_log: impl Into<String>) -> Self {
        EvalResult {
            status: EvalStatus::Ok,
            metrics,
            features: Some(features),
            score: Some(score),
            raw_log: raw_log.into(),
            duration: Duration::ZERO,
            exit_code: Some(0),
            detail: None,
        }
    }

    pub fn failed(status: EvalStatus, raw_log: impl Into<String>, duration: Duration) -> Self {
        EvalResult {
            status,
            metrics: MetricsRecord::default(),
            features: None,
            score: None,
            raw_log: raw_log.into(),
            duration,
            exit_code: None,
            detail: None,
        }
    }

    fn parse_error(mut self, detail: String) -> Self {
        self.status = EvalStatus::ParseError;
        self.detail = Some(detail);
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }

    /// The score when ok.
    pub fn ok_score(&self) -> Option<f64> {
        self.score.filter(|_| self.is_ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Passed,
    Failed(String),
}

/// Something that can evaluate candidate code. The process sandbox is the
/// real implementation; tests substitute in-memory landscapes.
pub trait Evaluate: Send + Sync {
    fn evaluate(&self, code: &str, callbacks: Option<&str>) -> EvalResult;

    /// Syntax-only pre-check; must not execute candidate logic.
    fn check(&self, code: &str) -> CheckOutcome;
}
