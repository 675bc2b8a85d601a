//! The result block an evaluator prints after its free-form log:
//!
//! ```text
//! [[ORA_RESULT]]
//! {"metrics": {"name": 1.0}, "features": [0, 0, 3], "score": 13.109}
//! [[/ORA_RESULT]]
//! ```
//!
//! `features` and `score` may be omitted when the engine computes them.

use serde::Deserialize;

use crate::soldb::{FeatureSignature, MetricsRecord};

pub const BEGIN_MARKER: &str = "[[ORA_RESULT]]";
pub const END_MARKER: &str = "[[/ORA_RESULT]]";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultBlock {
    pub metrics: MetricsRecord,
    pub features: Option<FeatureSignature>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockError {
    /// No complete block in the output.
    Missing,
    /// A block is present but its body is unusable.
    Malformed(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    metrics: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    features: Option<Vec<u32>>,
    #[serde(default)]
    score: Option<f64>,
}

/// Parses the last complete block in `log`.
pub fn parse_result_block(log: &str) -> Result<ResultBlock, BlockError> {
    let end = log.rfind(END_MARKER).ok_or(BlockError::Missing)?;
    let begin = log[..end].rfind(BEGIN_MARKER).ok_or(BlockError::Missing)?;
    let body = log[begin + BEGIN_MARKER.len()..end].trim();
    if body.is_empty() {
        return Err(BlockError::Malformed("empty result block".into()));
    }
    if body.lines().count() != 1 {
        return Err(BlockError::Malformed("result block must hold exactly one line".into()));
    }
    let wire: Wire = serde_json::from_str(body).map_err(|e| BlockError::Malformed(e.to_string()))?;
    let metrics = MetricsRecord(wire.metrics);
    if !metrics.all_finite() {
        return Err(BlockError::Malformed("non-finite metric".into()));
    }
    if let Some(s) = wire.score {
        if !s.is_finite() {
            return Err(BlockError::Malformed("non-finite score".into()));
        }
    }
    Ok(ResultBlock {
        metrics,
        features: wire.features.map(FeatureSignature),
        score: wire.score,
    })
}

/// Formats a block; what evaluators are expected to print.
pub fn format_result_block(block: &ResultBlock) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("metrics".into(), serde_json::to_value(&block.metrics).expect("finite metrics"));
    if let Some(f) = &block.features {
        obj.insert("features".into(), serde_json::to_value(f).expect("ints"));
    }
    if let Some(s) = block.score {
        obj.insert("score".into(), serde_json::json!(s));
    }
    format!("{BEGIN_MARKER}\n{}\n{END_MARKER}\n", serde_json::Value::Object(obj))
}
