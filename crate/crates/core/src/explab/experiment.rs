use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::canvas::RunConfig;
use crate::modelgate::{CallParams, ChatRequest, ModelError, ModelGate, Role};
use crate::prompts::{extract_fenced, fill, Prompts};
use crate::reflect::{format_score, progressive_summary};
use crate::soldb::SolutionId;

use super::{allocate_repeats, apply_patch, parse_patch, truncate_log, CallbacksFile, EvalResult, Evaluate, RepeatPolicy};

pub const TAG_STEP: &str = "experiment_step";
pub const TAG_SUMMARY: &str = "experiment_summary";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExperimentAction {
    UpdateCode { patch: String },
    UpdateCallbacks { text: String },
    Terminate { reason: String },
}

impl ExperimentAction {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentAction::UpdateCode { .. } => "update code",
            ExperimentAction::UpdateCallbacks { .. } => "update callbacks",
            ExperimentAction::Terminate { .. } => "terminate",
        }
    }
}

/// Reads the first `ACTION:` line and its payload from a model reply.
pub fn parse_action(text: &str) -> Result<ExperimentAction, String> {
    let lines: Vec<&str> = text.lines().collect();
    let (at, kind, rest) = lines
        .iter()
        .enumerate()
        .find_map(|(i, l)| {
            let t = l.trim().trim_start_matches(['*', '`', '#', ' ']);
            let head = t.get(..7)?;
            if !head.eq_ignore_ascii_case("action:") {
                return None;
            }
            let after = t[7..].trim_start();
            let end = after.find(char::is_whitespace).unwrap_or(after.len());
            let kind = after[..end].trim_matches(['*', '`', '.', ',']).to_ascii_lowercase();
            Some((i, kind, after[end..].to_string()))
        })
        .ok_or_else(|| "no ACTION line".to_string())?;
    let mut payload = rest.trim().to_string();
    for l in &lines[at + 1..] {
        payload.push('\n');
        payload.push_str(l);
    }
    let payload = payload.trim_matches('\n').to_string();
    match kind.as_str() {
        "update_code" => {
            parse_patch(&payload).map_err(|e| e.to_string())?;
            Ok(ExperimentAction::UpdateCode { patch: payload })
        }
        "update_callbacks" => {
            let text = extract_fenced(&payload).unwrap_or_else(|| payload.trim().to_string());
            if text.trim().is_empty() {
                return Err("update_callbacks without a callbacks file".into());
            }
            Ok(ExperimentAction::UpdateCallbacks { text })
        }
        "terminate" => {
            let reason = payload.trim();
            Ok(ExperimentAction::Terminate {
                reason: if reason.is_empty() { "no reason given".into() } else { reason.to_string() },
            })
        }
        other => Err(format!("unknown action `{other}`")),
    }
}

/// The analysis part of a reply: the `<thinking>` section, or everything
/// before the action line.
fn reflection_of(text: &str) -> String {
    if let (Some(a), Some(b)) = (text.find("<thinking>"), text.find("</thinking>")) {
        if a < b {
            return text[a + "<thinking>".len()..b].trim().to_string();
        }
    }
    let cut = text
        .lines()
        .position(|l| l.trim().trim_start_matches(['*', '`', '#', ' ']).to_ascii_lowercase().starts_with("action:"))
        .unwrap_or(usize::MAX);
    text.lines().take(cut).collect::<Vec<_>>().join("\n").trim().to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    /// 1-based.
    pub index: usize,
    pub code: String,
    pub callbacks: Option<String>,
    pub result: EvalResult,
    pub reflection: String,
    pub action: Option<ExperimentAction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    Terminated(String),
    RepeatsReached,
    Stagnation,
    BudgetExhausted,
    Interrupted,
    ModelFailure(String),
}

/// Everything an experiment needs besides the candidate itself.
pub struct ExperimentSetup<'a> {
    pub gate: &'a ModelGate,
    pub evaluator: &'a dyn Evaluate,
    pub prompts: &'a Prompts,
    pub params: CallParams,
    pub config: &'a RunConfig,
    pub code_file: String,
    pub callbacks_file: String,
    pub stop: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentInput {
    pub id: SolutionId,
    pub idea: String,
    pub code: String,
    pub callbacks: Option<String>,
    pub parent_score: Option<f64>,
    pub parent_is_elite: bool,
    pub base_repeats: u32,
    /// Per-attempt snapshots go to `<dir>/attempt<k>/` when set.
    pub snapshot_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub attempts: Vec<Attempt>,
    /// Index into `attempts` of the best ok score; ties go to the earliest.
    pub best_index: Option<usize>,
    /// Index into `attempts` whose code was kept.
    pub final_index: Option<usize>,
    pub max_repeats: u32,
    pub progressive_summaries: Vec<String>,
    pub final_summary: String,
    pub reverted: bool,
    pub stop: StopReason,
    pub final_code: String,
    pub final_callbacks: Option<String>,
    pub callbacks_history: Vec<String>,
}

impl ExperimentOutcome {
    pub fn final_result(&self) -> Option<&EvalResult> {
        self.final_index.map(|i| &self.attempts[i].result)
    }

    pub fn valid(&self) -> bool {
        self.final_result().is_some_and(EvalResult::is_ok)
    }

    pub fn score(&self) -> Option<f64> {
        self.final_result().and_then(EvalResult::ok_score)
    }
}

fn history_line(a: &Attempt) -> String {
    let mut s = format!("Experiment #{}: ", a.index);
    match a.result.ok_score() {
        Some(score) => {
            let _ = write!(s, "Score: {score:.3} | Metrics: ");
            let m: Vec<String> = a.result.metrics.0.iter().map(|(k, v)| format!("{k}: {v}")).collect();
            s.push_str(&m.join(", "));
        }
        None => {
            let _ = write!(s, "Status: {}", a.result.status.as_str());
        }
    }
    if let Some(act) = &a.action {
        let _ = write!(s, " | Action: {}", act.label());
    }
    if !a.reflection.is_empty() {
        let _ = write!(s, " | Insight: <insight>{}</insight>", a.reflection);
    }
    s
}

fn write_snapshot(dir: &Path, setup: &ExperimentSetup<'_>, a: &Attempt) {
    let at = dir.join(format!("attempt{}", a.index));
    let res = std::fs::create_dir_all(&at)
        .and_then(|_| std::fs::write(at.join(&setup.code_file), &a.code))
        .and_then(|_| match &a.callbacks {
            Some(cb) => std::fs::write(at.join(&setup.callbacks_file), cb),
            None => Ok(()),
        })
        .and_then(|_| std::fs::write(at.join("log.txt"), &a.result.raw_log))
        .and_then(|_| {
            let json = serde_json::to_string_pretty(&a.result).expect("serializable");
            std::fs::write(at.join("result.json"), json + "\n")
        });
    if let Err(e) = res {
        log::warn!("snapshot {} failed: {e}", at.display());
    }
}

struct Loop<'s, 'a> {
    setup: &'s ExperimentSetup<'a>,
    input: &'s ExperimentInput,
    attempts: Vec<Attempt>,
    summaries: Vec<String>,
    summarized_upto: usize,
}

impl Loop<'_, '_> {
    fn history(&self) -> String {
        let mut h = self.summaries.join("\n");
        for a in &self.attempts[self.summarized_upto..] {
            if a.action.is_some() || !a.reflection.is_empty() {
                if !h.is_empty() {
                    h.push('\n');
                }
                h.push_str(&history_line(a));
            }
        }
        if h.is_empty() {
            h.push_str("(no previous experiments)");
        }
        h
    }

    fn step_prompt(&self, max_repeats: u32) -> String {
        let a = self.attempts.last().expect("after an evaluation");
        let cfg = self.setup.config;
        let callbacks = match &a.callbacks {
            Some(cb) => format!("\n# Current callbacks\n```python\n{}\n```\n", cb.trim_end()),
            None => String::new(),
        };
        let final_note = if a.index + 1 == max_repeats as usize {
            self.setup.prompts.final_attempt.trim_end()
        } else {
            ""
        };
        let features = a.result.features.as_ref().map_or("None".to_string(), |f| f.to_string());
        fill(
            &self.setup.prompts.experiment_step,
            &[
                ("attempt", &a.index.to_string()),
                ("max_attempts", &max_repeats.to_string()),
                ("idea", self.input.idea.trim()),
                ("code", a.code.trim_end()),
                ("callbacks", &callbacks),
                ("history", &self.history()),
                ("status", a.result.status.as_str()),
                ("score", &format_score(a.result.ok_score())),
                ("metrics", &a.result.metrics.to_string()),
                ("features", &features),
                (
                    "log",
                    truncate_log(&a.result.raw_log, cfg.log_head_lines as usize, cfg.log_tail_lines as usize).trim_end(),
                ),
                ("final_note", final_note),
            ],
        )
    }
}

enum StepOutcome {
    Act(String, ExperimentAction, Option<String>),
    Stop(StopReason, String),
}

/// Runs the experiment loop over one candidate.
///
/// Each attempt is charged to the evaluation budget, evaluated and
/// snapshotted; the model then analyzes the result and picks an action.
/// Patches that do not apply get one re-ask. The number of attempts is
/// allocated after the first result; `stagnation_limit` consecutive ok
/// attempts without a new best also end the loop. At the end, if the last
/// attempt is worse than the best ok attempt, the best snapshot is restored.
pub fn run_experiments(setup: &ExperimentSetup<'_>, input: ExperimentInput) -> ExperimentOutcome {
    let cfg = setup.config;
    let policy = RepeatPolicy::from_config(cfg);
    let interval = cfg.summary_interval.max(1) as usize;
    let mut code = input.code.clone();
    let mut callbacks = CallbacksFile::new(input.callbacks.clone());
    let mut max_repeats = input.base_repeats.max(1);
    let mut best: Option<f64> = None;
    let mut stagnant = 0u32;
    let mut lp = Loop {
        setup,
        input: &input,
        attempts: Vec::new(),
        summaries: Vec::new(),
        summarized_upto: 0,
    };

    let stop = loop {
        if setup.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed)) {
            break StopReason::Interrupted;
        }
        if setup.gate.charge_evaluation().is_err() {
            break StopReason::BudgetExhausted;
        }
        let index = lp.attempts.len() + 1;
        let result = setup.evaluator.evaluate(&code, callbacks.current());
        log::info!(
            "{} experiment #{index}: {} score={}",
            input.id,
            result.status.as_str(),
            format_score(result.ok_score())
        );
        let attempt = Attempt {
            index,
            code: code.clone(),
            callbacks: callbacks.current().map(str::to_string),
            result,
            reflection: String::new(),
            action: None,
        };
        if let Some(dir) = &input.snapshot_dir {
            write_snapshot(dir, setup, &attempt);
        }
        let score = attempt.result.ok_score();
        lp.attempts.push(attempt);

        if index == 1 {
            let delta = match (score, input.parent_score) {
                (Some(s), Some(p)) => s - p,
                (Some(_), None) => 0.0,
                (None, _) => f64::NEG_INFINITY,
            };
            max_repeats = allocate_repeats(input.base_repeats, delta, input.parent_is_elite, &policy);
        }
        if let Some(s) = score {
            match best {
                Some(b) if s <= b => stagnant += 1,
                _ => {
                    best = Some(s);
                    stagnant = 0;
                }
            }
        }
        if index >= max_repeats as usize {
            break StopReason::RepeatsReached;
        }
        if stagnant >= cfg.stagnation_limit.max(1) {
            break StopReason::Stagnation;
        }

        let step = match ask_action(&lp, max_repeats, &code) {
            Ok(s) => s,
            Err(ModelError::BudgetExhausted) => break StopReason::BudgetExhausted,
            Err(e) => break StopReason::ModelFailure(e.to_string()),
        };
        let last = lp.attempts.last_mut().expect("pushed above");
        let mut ended = None;
        match step {
            StepOutcome::Stop(reason, reflection) => {
                last.reflection = reflection;
                last.action = Some(ExperimentAction::Terminate {
                    reason: match &reason {
                        StopReason::Terminated(r) => r.clone(),
                        other => format!("{other:?}"),
                    },
                });
                ended = Some(reason);
            }
            StepOutcome::Act(reflection, action, new_code) => {
                last.reflection = reflection;
                match &action {
                    ExperimentAction::UpdateCode { .. } => code = new_code.expect("patched"),
                    ExperimentAction::UpdateCallbacks { text } => {
                        callbacks.update(text).expect("validated non-empty");
                    }
                    ExperimentAction::Terminate { reason } => ended = Some(StopReason::Terminated(reason.clone())),
                }
                last.action = Some(action);
            }
        }
        if index.is_multiple_of(interval) {
            let scores: Vec<Option<f64>> = lp.attempts.iter().map(|a| a.result.ok_score()).collect();
            let window: Vec<String> = lp.attempts[lp.summarized_upto..].iter().map(history_line).collect();
            match progressive_summary(
                setup.gate,
                &setup.params,
                setup.prompts,
                &scores,
                &window.join("\n"),
                lp.summarized_upto + 1,
                index,
                interval,
            ) {
                Ok(Some(s)) => {
                    lp.summaries.push(s);
                    lp.summarized_upto = index;
                }
                Ok(None) => {}
                Err(ModelError::BudgetExhausted) => {
                    ended.get_or_insert(StopReason::BudgetExhausted);
                }
                Err(e) => log::warn!("progressive summary failed: {e}"),
            }
        }
        if let Some(reason) = ended {
            break reason;
        }
    };

    finish(setup, lp, stop, max_repeats, callbacks)
}

fn ask_action(lp: &Loop<'_, '_>, max_repeats: u32, code: &str) -> Result<StepOutcome, ModelError> {
    let setup = lp.setup;
    let mut request: ChatRequest = setup.params.request(TAG_STEP, lp.step_prompt(max_repeats));
    let mut last_error = String::new();
    let mut reflection = String::new();
    for round in 0..2 {
        if round == 1 {
            let reask = fill(&setup.prompts.reask, &[("error", &last_error)]);
            request.push(Role::User, reask);
        }
        let reply = setup.gate.complete(&request)?;
        if round == 0 {
            reflection = reflection_of(&reply.text);
        }
        let outcome = parse_action(&reply.text).and_then(|action| match &action {
            ExperimentAction::UpdateCode { patch } => apply_patch(code, patch)
                .map(|c| StepOutcome::Act(reflection.clone(), action.clone(), Some(c)))
                .map_err(|e| e.to_string()),
            _ => Ok(StepOutcome::Act(reflection.clone(), action.clone(), None)),
        });
        match outcome {
            Ok(o) => return Ok(o),
            Err(e) => {
                last_error = e;
                request.push(Role::Assistant, reply.text);
            }
        }
    }
    Ok(StepOutcome::Stop(
        StopReason::Terminated(format!("unparseable action: {last_error}")),
        reflection,
    ))
}

fn finish(
    setup: &ExperimentSetup<'_>,
    lp: Loop<'_, '_>,
    stop: StopReason,
    max_repeats: u32,
    callbacks: CallbacksFile,
) -> ExperimentOutcome {
    let Loop {
        input,
        attempts,
        summaries,
        ..
    } = lp;
    let mut best_index: Option<usize> = None;
    for (i, a) in attempts.iter().enumerate() {
        if let Some(s) = a.result.ok_score() {
            if best_index.is_none_or(|b| s > attempts[b].result.score.expect("ok")) {
                best_index = Some(i);
            }
        }
    }
    let last = attempts.len().checked_sub(1);
    let (final_index, reverted) = match (best_index, last) {
        (Some(b), Some(l)) => {
            let best = attempts[b].result.score.expect("ok");
            match attempts[l].result.ok_score() {
                Some(s) if s >= best => (Some(l), false),
                _ => (Some(b), true),
            }
        }
        (None, l) => (l, false),
        (Some(_), None) => unreachable!("best implies attempts"),
    };

    let reversion = if reverted {
        let b = best_index.expect("reverted implies best");
        format!(
            "Revert back to previous code version | score reverted from {} to {}",
            format_score(attempts[last.expect("non-empty")].result.ok_score()),
            format_score(attempts[b].result.ok_score()),
        )
    } else {
        String::new()
    };
    if reverted {
        log::info!("{} {}", input.id, reversion);
    }

    let (final_code, final_callbacks) = match final_index {
        Some(i) => (attempts[i].code.clone(), attempts[i].callbacks.clone()),
        None => (input.code.clone(), input.callbacks.clone()),
    };

    let final_summary = if attempts.is_empty() {
        String::new()
    } else {
        let mut history = summaries.join("\n");
        for a in &attempts {
            if !history.is_empty() {
                history.push('\n');
            }
            history.push_str(&history_line(a));
        }
        let note = if reverted {
            format!(
                "\nThe final code was restored to experiment #{} (the best-scoring version).\n",
                best_index.expect("reverted") + 1
            )
        } else {
            String::new()
        };
        let prompt = fill(
            &setup.prompts.experiment_summary,
            &[
                ("attempts", &attempts.len().to_string()),
                ("idea", input.idea.trim()),
                ("history", &history),
                ("reversion", &note),
            ],
        );
        let body = match setup.gate.complete(&setup.params.request(TAG_SUMMARY, prompt)) {
            Ok(r) => r.text.trim().to_string(),
            Err(e) => {
                log::warn!("{}: final summary by engine ({e})", input.id);
                engine_summary(&attempts, best_index, &stop)
            }
        };
        if reverted {
            format!("{reversion}\n\n{body}")
        } else {
            body
        }
    };
    if let Some(dir) = &input.snapshot_dir {
        if !attempts.is_empty() {
            if let Err(e) = std::fs::write(dir.join("summary.txt"), format!("{final_summary}\n")) {
                log::warn!("cannot write summary for {}: {e}", input.id);
            }
        }
    }

    ExperimentOutcome {
        best_index,
        final_index,
        max_repeats,
        progressive_summaries: summaries,
        final_summary,
        reverted,
        stop,
        final_code,
        final_callbacks,
        callbacks_history: callbacks.history().to_vec(),
        attempts,
    }
}

fn engine_summary(attempts: &[Attempt], best: Option<usize>, stop: &StopReason) -> String {
    let mut s = format!("{} experiment(s) run; stopped: {stop:?}.\n", attempts.len());
    for a in attempts {
        let _ = writeln!(s, "- Experiment #{}: {} (score {})", a.index, a.result.status.as_str(), format_score(a.result.ok_score()));
    }
    match best {
        Some(b) => {
            let _ = write!(s, "Best: experiment #{} with score {}.", b + 1, format_score(attempts[b].result.ok_score()));
        }
        None => s.push_str("No experiment produced a valid result."),
    }
    s
}
