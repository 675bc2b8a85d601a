#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ora_core::canvas::ProblemSpec;
use ora_core::explab::ProcessEvaluator;
use ora_core::modelgate::{BudgetLedger, ChatBackend, ChatRequest, ChatResponse, ModelError, ModelGate, TokenUsage};

// Resolves from either crate of the workspace.
pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Canvas driving `eval_fixture.py`; `extra` is appended TOML.
pub fn fixture_spec(extra: &str) -> ProblemSpec {
    let text = format!(
        r#"
problem_description = "Toy landscape."
function_description = "def evaluate(callbacks) -> dict"
evaluation_command = "python3 eval_fixture.py --code {{code}} --callbacks {{callbacks}}"
evaluation_description = "Higher score is better."
callbacks_description = "Optional Callbacks class with on_step_end(**kwargs)."
{extra}
"#
    );
    ProblemSpec::from_toml_str(&text).expect("fixture canvas")
}

pub fn evaluator(spec: ProblemSpec, timeout: Duration) -> ProcessEvaluator {
    ProcessEvaluator::new(spec, fixtures(), timeout)
}

/// Candidate code reporting a fixed score and metrics.
pub fn candidate(score: f64, tag: &str) -> String {
    format!(
        "# {tag}\ndef evaluate(callbacks):\n    print(\"running {tag}\")\n    return {{\"metrics\": {{\"quality\": {score:?}}}, \"features\": [0], \"score\": {score:?}}}\n"
    )
}

/// Backend answering with a closure over (request, call index).
pub struct FnBackend<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest, usize) -> String + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnBackend { f, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest, usize) -> String + Send + Sync,
{
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(ChatResponse { text: (self.f)(request, n), usage: TokenUsage::default() })
    }

    fn name(&self) -> &str {
        "fn"
    }
}

pub fn gate(backend: Arc<dyn ChatBackend>, llm: u64, evals: u64) -> ModelGate {
    ModelGate::new(backend, Arc::new(BudgetLedger::new(llm, evals)))
}

use std::collections::HashMap;

use ora_core::explab::{CheckOutcome, EvalResult, EvalStatus, Evaluate};
use ora_core::{FeatureSignature, MetricsRecord};
use parking_lot::Mutex;

/// Code understood by [`LandscapeEval`].
pub fn scored_code(score: Option<f64>) -> String {
    match score {
        Some(s) => format!("SCORE = {s:?}\n"),
        None => "FAIL\n".to_string(),
    }
}

/// In-memory evaluator for [`scored_code`] candidates.
pub struct LandscapeEval;

impl Evaluate for LandscapeEval {
    fn evaluate(&self, code: &str, _: Option<&str>) -> EvalResult {
        match code.trim().strip_prefix("SCORE = ").and_then(|s| s.parse::<f64>().ok()) {
            Some(s) => EvalResult::ok(MetricsRecord::from_iter([("score", s)]), FeatureSignature(vec![0]), s, "ok\n"),
            None => EvalResult::failed(EvalStatus::NoEndMarker, "no result\n", Duration::ZERO),
        }
    }

    fn check(&self, _: &str) -> CheckOutcome {
        CheckOutcome::Passed
    }
}

/// Idea text of the focus node in an idea-generation prompt.
pub fn focus_idea(prompt: &str) -> String {
    let at = prompt.rfind("## Current node").expect("focus section");
    let rest = &prompt[at..];
    let idea = rest.split_once("Idea:\n").expect("idea line").1;
    idea.lines().next().unwrap_or("").to_string()
}

/// `n` in "Propose n new research ideas".
pub fn requested(prompt: &str) -> usize {
    let at = prompt.find("Propose ").expect("idea prompt") + 8;
    prompt[at..].split_whitespace().next().unwrap().parse().unwrap()
}

/// Idea named in a code-generation prompt.
pub fn idea_in_code_prompt(prompt: &str) -> String {
    prompt.split_once("# Idea\n").expect("code prompt").1.lines().next().unwrap().to_string()
}

/// A research landscape served as a chat backend.
///
/// Child ideas of a focus idea come from `children` when listed, otherwise
/// from `expand` (called once per focus; its answer is remembered). Every
/// idea's code scores `scores[idea]`; experiments terminate after one attempt.
pub struct Landscape {
    pub children: Mutex<HashMap<String, Vec<String>>>,
    pub scores: Mutex<HashMap<String, Option<f64>>>,
    expand: Box<dyn Fn(&str, usize) -> Vec<(String, Option<f64>)> + Send + Sync>,
    pub calls: Mutex<Vec<String>>,
}

impl Landscape {
    pub fn new(expand: impl Fn(&str, usize) -> Vec<(String, Option<f64>)> + Send + Sync + 'static) -> Self {
        Landscape {
            children: Mutex::new(HashMap::new()),
            scores: Mutex::new(HashMap::new()),
            expand: Box::new(expand),
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Fixed tree: `(parent, [(child, score)])`.
    pub fn fixed(edges: &[(&str, &[(&str, Option<f64>)])]) -> Self {
        let l = Landscape::new(|_, _| vec![]);
        for (parent, kids) in edges {
            l.children.lock().insert(parent.to_string(), kids.iter().map(|(k, _)| k.to_string()).collect());
            for (k, s) in kids.iter() {
                l.scores.lock().insert(k.to_string(), *s);
            }
        }
        l
    }

    fn ideas_for(&self, focus: &str, n: usize) -> Vec<String> {
        if let Some(kids) = self.children.lock().get(focus) {
            return kids.clone();
        }
        let fresh = (self.expand)(focus, n);
        let mut scores = self.scores.lock();
        for (k, s) in &fresh {
            scores.insert(k.clone(), *s);
        }
        let names: Vec<String> = fresh.into_iter().map(|(k, _)| k).collect();
        self.children.lock().insert(focus.to_string(), names.clone());
        names
    }
}

impl ChatBackend for Landscape {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let prompt = request.last_user();
        self.calls.lock().push(request.tag.clone());
        let text = match request.tag.as_str() {
            "idea_gen" => {
                let ideas = self.ideas_for(&focus_idea(prompt), requested(prompt));
                if ideas.is_empty() {
                    "I have no further ideas.".to_string()
                } else {
                    ideas.iter().enumerate().map(|(i, k)| format!("{}. {k}\n", i + 1)).collect()
                }
            }
            "code_gen" => {
                let idea = idea_in_code_prompt(prompt);
                let score = self.scores.lock().get(&idea).copied().flatten();
                format!("```python\n{}```\n", scored_code(score))
            }
            "experiment_step" => "<thinking>one run is enough</thinking>\nACTION: terminate\nlandscape is fixed".to_string(),
            other => format!("{other} text"),
        };
        Ok(ChatResponse { text, usage: TokenUsage::default() })
    }

    fn name(&self) -> &str {
        "landscape"
    }
}
