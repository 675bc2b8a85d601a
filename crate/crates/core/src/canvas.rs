//! Problem specification (the research canvas) and run configuration.
//!
//! Both are TOML documents. The canvas names its sections as fields; the run
//! configuration is a flat table whose absent keys fall back to
//! [`RunConfig::default`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const CODE_PLACEHOLDER: &str = "{code}";
pub const CALLBACKS_PLACEHOLDER: &str = "{callbacks}";

#[derive(Debug, Error)]
pub enum CanvasError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing or empty field `{0}`")]
    MissingField(String),
    #[error("malformed placeholder: {0}")]
    MalformedPlaceholder(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
}

fn position(text: &str, err: &toml::de::Error) -> (usize, usize) {
    let Some(span) = err.span() else {
        return (0, 0);
    };
    let upto = &text[..span.start.min(text.len())];
    let line = upto.matches('\n').count() + 1;
    let column = upto.rfind('\n').map_or(upto.len(), |nl| upto.len() - nl - 1) + 1;
    (line, column)
}

/// How scores and signatures are obtained from evaluator output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// The evaluator prints `score` and `features` itself.
    #[default]
    Evaluator,
    /// Missing `score`/`features` are computed from driving metrics.
    Driving,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionSeed {
    pub idea: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: Option<String>,
    pub problem_description: String,
    pub function_description: String,
    pub evaluation_command: String,
    pub evaluation_description: String,
    pub callbacks_description: Option<String>,
    pub seed: Option<SolutionSeed>,
    pub scoring: ScoringMode,
    /// Highest level per signature coordinate; arity is the vector length.
    pub feature_levels: Option<Vec<u32>>,
    pub code_file: String,
    pub callbacks_file: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCanvas {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    problem_description: Option<String>,
    function_description: Option<String>,
    evaluation_command: Option<String>,
    evaluation_description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    callbacks_description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_idea: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_code: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scoring: Option<ScoringMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature_levels: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    code_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    callbacks_file: Option<String>,
}

fn required(value: Option<String>, field: &str) -> Result<String, CanvasError> {
    match value {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(CanvasError::MissingField(field.to_string())),
    }
}

fn non_blank(value: Option<String>) -> Option<String> {
    value.filter(|v| !v.trim().is_empty())
}

impl ProblemSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, CanvasError> {
        let raw: RawCanvas = toml::from_str(text).map_err(|e| {
            let (line, column) = position(text, &e);
            CanvasError::ParseError {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        let spec = ProblemSpec {
            name: non_blank(raw.name),
            problem_description: required(raw.problem_description, "problem_description")?,
            function_description: required(raw.function_description, "function_description")?,
            evaluation_command: required(raw.evaluation_command, "evaluation_command")?,
            evaluation_description: required(
                raw.evaluation_description,
                "evaluation_description",
            )?,
            callbacks_description: non_blank(raw.callbacks_description),
            seed: match (non_blank(raw.seed_idea), non_blank(raw.seed_code)) {
                (Some(idea), Some(code)) => Some(SolutionSeed { idea, code }),
                (None, None) => None,
                (Some(_), None) => return Err(CanvasError::MissingField("seed_code".into())),
                (None, Some(_)) => return Err(CanvasError::MissingField("seed_idea".into())),
            },
            scoring: raw.scoring.unwrap_or_default(),
            feature_levels: raw.feature_levels,
            code_file: non_blank(raw.code_file).unwrap_or_else(|| "candidate.py".into()),
            callbacks_file: non_blank(raw.callbacks_file).unwrap_or_else(|| "callbacks.py".into()),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CanvasError> {
        let code_count = self.evaluation_command.matches(CODE_PLACEHOLDER).count();
        if code_count != 1 {
            return Err(CanvasError::MalformedPlaceholder(format!(
                "evaluation_command must contain {CODE_PLACEHOLDER} exactly once, found {code_count}"
            )));
        }
        let cb_count = self.evaluation_command.matches(CALLBACKS_PLACEHOLDER).count();
        match (&self.callbacks_description, cb_count) {
            (Some(_), 1) | (None, 0) => {}
            (Some(_), n) => {
                return Err(CanvasError::MalformedPlaceholder(format!(
                    "callbacks_description is set, so evaluation_command must contain \
                     {CALLBACKS_PLACEHOLDER} exactly once, found {n}"
                )))
            }
            (None, n) => {
                return Err(CanvasError::MalformedPlaceholder(format!(
                    "{CALLBACKS_PLACEHOLDER} used {n} time(s) without a callbacks_description"
                )))
            }
        }
        if shlex::split(&self.evaluation_command).is_none() {
            return Err(CanvasError::MalformedPlaceholder(
                "evaluation_command has unbalanced quoting".into(),
            ));
        }
        if let Some(levels) = &self.feature_levels {
            if levels.is_empty() {
                return Err(CanvasError::InvalidValue {
                    field: "feature_levels".into(),
                    reason: "must declare at least one coordinate".into(),
                });
            }
        }
        for (field, value) in [("code_file", &self.code_file), ("callbacks_file", &self.callbacks_file)] {
            if value.contains('/') || value.contains('\\') || value == "." || value == ".." {
                return Err(CanvasError::InvalidValue {
                    field: field.into(),
                    reason: "must be a bare file name".into(),
                });
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawCanvas {
            name: self.name.clone(),
            problem_description: Some(self.problem_description.clone()),
            function_description: Some(self.function_description.clone()),
            evaluation_command: Some(self.evaluation_command.clone()),
            evaluation_description: Some(self.evaluation_description.clone()),
            callbacks_description: self.callbacks_description.clone(),
            seed_idea: self.seed.as_ref().map(|s| s.idea.clone()),
            seed_code: self.seed.as_ref().map(|s| s.code.clone()),
            scoring: Some(self.scoring),
            feature_levels: self.feature_levels.clone(),
            code_file: Some(self.code_file.clone()),
            callbacks_file: Some(self.callbacks_file.clone()),
        };
        toml::to_string(&raw).expect("canvas serializes")
    }
}

/// Loads and validates a canvas file.
pub fn load_problem_spec(path: impl AsRef<Path>) -> Result<ProblemSpec, CanvasError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CanvasError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ProblemSpec::from_toml_str(&text)
}

/// Parent-sampling temperature: a positive value or the uniform sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Uniform,
    Value(f64),
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Uniform => f.write_str("uniform"),
            Temperature::Value(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrWord {
    Int(i64),
    Float(f64),
    Word(String),
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Temperature::Uniform => s.serialize_str("uniform"),
            Temperature::Value(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(d)? {
            NumberOrWord::Int(v) => Ok(Temperature::Value(v as f64)),
            NumberOrWord::Float(v) => Ok(Temperature::Value(v)),
            NumberOrWord::Word(w) if w == "uniform" => Ok(Temperature::Uniform),
            NumberOrWord::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"uniform\", got \"{w}\""
            ))),
        }
    }
}

/// Word budget for long-term reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordBudget {
    Limited(usize),
    Unlimited,
}

impl Serialize for WordBudget {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            WordBudget::Unlimited => s.serialize_str("unlimited"),
            WordBudget::Limited(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for WordBudget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(d)? {
            NumberOrWord::Int(v) if v >= 0 => Ok(WordBudget::Limited(v as usize)),
            NumberOrWord::Word(w) if w == "unlimited" => Ok(WordBudget::Unlimited),
            _ => Err(serde::de::Error::custom(
                "expected a non-negative integer or \"unlimited\"",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextScope {
    ParentOnly,
    Ancestry,
    FullTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub max_children: u32,
    pub max_depth: u32,
    pub elite_extra_children: u32,
    pub improvement_grace_depth: u32,
    pub base_experiment_repeats: u32,
    pub budget_llm_calls: u64,
    pub budget_evaluations: u64,
    pub sampling_temperature: Temperature,
    pub context_scope: ContextScope,
    pub ltm_refresh_interval: u32,
    pub ltm_word_budget: WordBudget,
    pub ltm_persist_across_rounds: bool,
    pub summary_interval: u32,
    pub log_head_lines: u32,
    pub log_tail_lines: u32,
    /// Seconds.
    pub eval_timeout: f64,
    pub num_lead_agents: u32,

    pub crossover_probability: f64,
    /// Shallower tree for crossover rounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover_max_depth: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossover_experiment_repeats: Option<u32>,
    pub idea_temperature: f64,
    pub code_temperature: f64,
    pub max_output_tokens: u32,
    pub render_idea_width: usize,
    pub repeat_gain: f64,
    pub repeat_cut: f64,
    pub elite_repeat_bonus: u32,
    pub repeat_cap_factor: u32,
    pub stagnation_limit: u32,
    pub max_code_repairs: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_children: 3,
            max_depth: 4,
            elite_extra_children: 1,
            improvement_grace_depth: 1,
            base_experiment_repeats: 5,
            budget_llm_calls: 1000,
            budget_evaluations: 1000,
            sampling_temperature: Temperature::Value(1.0),
            context_scope: ContextScope::FullTree,
            ltm_refresh_interval: 3,
            ltm_word_budget: WordBudget::Unlimited,
            ltm_persist_across_rounds: true,
            summary_interval: 4,
            log_head_lines: 50,
            log_tail_lines: 50,
            eval_timeout: 300.0,
            num_lead_agents: 1,
            crossover_probability: 0.3,
            crossover_max_depth: None,
            crossover_experiment_repeats: None,
            idea_temperature: 0.7,
            code_temperature: 0.2,
            max_output_tokens: 4096,
            render_idea_width: 60,
            repeat_gain: 1.5,
            repeat_cut: 0.5,
            elite_repeat_bonus: 2,
            repeat_cap_factor: 3,
            stagnation_limit: 3,
            max_code_repairs: 2,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = position(text, &e);
            ConfigError::ParseError {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("max_children", self.max_children),
            ("max_depth", self.max_depth),
            ("base_experiment_repeats", self.base_experiment_repeats),
            ("ltm_refresh_interval", self.ltm_refresh_interval),
            ("summary_interval", self.summary_interval),
            ("log_head_lines", self.log_head_lines),
            ("log_tail_lines", self.log_tail_lines),
            ("num_lead_agents", self.num_lead_agents),
            ("max_output_tokens", self.max_output_tokens),
            ("repeat_cap_factor", self.repeat_cap_factor),
            ("stagnation_limit", self.stagnation_limit),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.budget_llm_calls == 0 {
            return Err(invalid("budget_llm_calls", "must be at least 1"));
        }
        if self.budget_evaluations == 0 {
            return Err(invalid("budget_evaluations", "must be at least 1"));
        }
        if self.improvement_grace_depth > self.max_depth {
            return Err(invalid(
                "improvement_grace_depth",
                format!("must not exceed max_depth ({})", self.max_depth),
            ));
        }
        if let Temperature::Value(t) = self.sampling_temperature {
            if !(t.is_finite() && t > 0.0) {
                return Err(invalid("sampling_temperature", "must be positive or \"uniform\""));
            }
        }
        if self.ltm_word_budget == WordBudget::Limited(0) {
            return Err(invalid("ltm_word_budget", "must be positive or \"unlimited\""));
        }
        if !(self.eval_timeout.is_finite() && self.eval_timeout > 0.0) {
            return Err(invalid("eval_timeout", "must be a positive number of seconds"));
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return Err(invalid("crossover_probability", "must lie in [0, 1]"));
        }
        if self.crossover_max_depth == Some(0) {
            return Err(invalid("crossover_max_depth", "must be at least 1"));
        }
        if self.crossover_experiment_repeats == Some(0) {
            return Err(invalid("crossover_experiment_repeats", "must be at least 1"));
        }
        for (field, t) in [
            ("idea_temperature", self.idea_temperature),
            ("code_temperature", self.code_temperature),
        ] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(invalid(field, "must be a non-negative number"));
            }
        }
        if self.render_idea_width < 4 {
            return Err(invalid("render_idea_width", "must be at least 4"));
        }
        if !(self.repeat_gain.is_finite() && self.repeat_gain >= 1.0) {
            return Err(invalid("repeat_gain", "must be at least 1"));
        }
        if !(self.repeat_cut.is_finite() && self.repeat_cut > 0.0 && self.repeat_cut <= 1.0) {
            return Err(invalid("repeat_cut", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Loads a run configuration; absent keys take their defaults.
pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_toml_str(&text)
}
