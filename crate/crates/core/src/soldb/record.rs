use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Identifier rendered as `lead{L}_round{R}_count{C}_id{S}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SolutionId {
    pub lead: u32,
    pub round: u32,
    pub count: u32,
    pub serial: u64,
}

impl fmt::Display for SolutionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lead{}_round{}_count{}_id{}",
            self.lead, self.round, self.count, self.serial
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed solution id `{0}`")]
pub struct ParseIdError(pub String);

impl FromStr for SolutionId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseIdError(s.to_string());
        let mut parts = s.split('_');
        let mut field = |prefix: &str| -> Result<u64, ParseIdError> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(prefix))
                .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|digits| digits.parse().ok())
                .ok_or_else(err)
        };
        let lead = field("lead")?;
        let round = field("round")?;
        let count = field("count")?;
        let serial = field("id")?;
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(SolutionId {
            lead: u32::try_from(lead).map_err(|_| err())?,
            round: u32::try_from(round).map_err(|_| err())?,
            count: u32::try_from(count).map_err(|_| err())?,
            serial,
        })
    }
}

impl Serialize for SolutionId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SolutionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Raw evaluator metrics, name to value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricsRecord(pub BTreeMap<String, f64>);

impl MetricsRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn all_finite(&self) -> bool {
        self.0.values().all(|v| v.is_finite())
    }
}

impl<K: Into<String>> FromIterator<(K, f64)> for MetricsRecord {
    fn from_iter<I: IntoIterator<Item = (K, f64)>>(iter: I) -> Self {
        MetricsRecord(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "'{k}': {v}")?;
        }
        f.write_str("}")
    }
}

/// Discretized behavioral coordinates; the diversity-cell key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSignature(pub Vec<u32>);

impl fmt::Display for FeatureSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Ledger totals at the moment a record was produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetStamp {
    pub llm_calls: u64,
    pub evaluations: u64,
}

/// Score of an invalid record; orders below every valid score.
pub const INVALID_SCORE: f64 = f64::NEG_INFINITY;

mod score_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(score: &f64, s: S) -> Result<S::Ok, S::Error> {
        if score.is_finite() {
            s.serialize_f64(*score)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(super::INVALID_SCORE))
    }
}

/// A complete research artifact: idea, code, experiment summary, evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub id: SolutionId,
    pub idea: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callbacks: Option<String>,
    pub experiment_summary: String,
    pub metrics: MetricsRecord,
    pub features: FeatureSignature,
    #[serde(with = "score_repr")]
    pub score: f64,
    pub parent_ids: Vec<SolutionId>,
    pub valid: bool,
    pub round: u32,
    pub lead: u32,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default)]
    pub budget: BudgetStamp,
}

impl SolutionRecord {
    /// Checks the per-record invariants that do not depend on the database.
    pub fn check(&self) -> Result<(), String> {
        if self.valid && !self.score.is_finite() {
            return Err(format!("valid record {} has non-finite score", self.id));
        }
        if !self.valid && self.score != INVALID_SCORE {
            return Err(format!("invalid record {} must carry the invalid score", self.id));
        }
        if !self.metrics.all_finite() {
            return Err(format!("record {} has non-finite metrics", self.id));
        }
        if self.id.lead != self.lead || self.id.round != self.round {
            return Err(format!("record {} lead/round disagree with its id", self.id));
        }
        Ok(())
    }
}
