//! Lead, idea and code agents.
//!
//! A lead agent runs research rounds: it samples parents from the shared
//! database, grows a tree by repeatedly expanding the best pending leaf with
//! a jointly generated set of child ideas, runs each child through the
//! experiment loop, and folds experiment summaries into its long-term
//! reflection. Several leads may run at once; they share only the database
//! and the budget ledger.

mod coder;
mod ideas;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::canvas::{ProblemSpec, RunConfig};
use crate::explab::{run_experiments, EvalStatus, Evaluate, ExperimentInput, ExperimentSetup, StopReason};
use crate::flowgraph::{build_context, FlowError, ResearchTree, TreeShape, ROOT};
use crate::modelgate::{CallParams, ModelError, ModelGate};
use crate::prompts::{fill, Prompts};
use crate::reflect::ReflectionStore;
use crate::soldb::{DbError, FeatureSignature, MetricsRecord, SolutionDb, SolutionId, SolutionRecord, INVALID_SCORE};

pub use coder::{implement_idea, TAG_CODE, TAG_REPAIR};
pub use ideas::{generate_ideas, parse_idea_list, IdeaSet, TAG_IDEAS};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("model call failed: {0}")]
    Model(#[from] ModelError),
    #[error("no parseable ideas in the model reply")]
    NoParseableIdeas,
    #[error("empty idea")]
    EmptyIdea,
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("bootstrap produced no valid solution")]
    BootstrapFailed,
}

impl AgentError {
    pub fn is_budget(&self) -> bool {
        matches!(self, AgentError::Model(ModelError::BudgetExhausted))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundEnd {
    Finished,
    BudgetExhausted,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct RoundReport {
    pub lead: u32,
    pub round: u32,
    pub tree: ResearchTree,
    pub crossover: bool,
    pub new_records: Vec<SolutionId>,
    /// Best over the parents and the new valid records.
    pub best_score: f64,
    pub long_term_reflection: String,
    pub end: RoundEnd,
}

/// Everything the agents share during a run.
pub struct Research<'a> {
    pub spec: &'a ProblemSpec,
    pub config: &'a RunConfig,
    pub gate: &'a ModelGate,
    pub evaluator: &'a dyn Evaluate,
    pub prompts: &'a Prompts,
    pub db: &'a SolutionDb,
    /// Trees and long-term reflections are written here when set.
    pub run_dir: Option<PathBuf>,
    pub seed: u64,
    pub stop: Option<Arc<AtomicBool>>,
}

/// Seed a lead's sampler per round so reruns draw the same parents.
fn round_rng(seed: u64, lead: u32, round: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((lead as u64) << 40) ^ ((round as u64) << 20))
}

impl Research<'_> {
    fn system_prompt(&self) -> String {
        let mut evaluation = self.spec.evaluation_description.trim().to_string();
        if let Some(cb) = &self.spec.callbacks_description {
            evaluation.push_str("\n\n# Callbacks\n");
            evaluation.push_str(cb.trim());
        }
        fill(
            &self.prompts.system,
            &[
                ("problem", self.spec.problem_description.trim()),
                ("function", self.spec.function_description.trim()),
                ("evaluation", &evaluation),
            ],
        )
    }

    fn idea_params(&self) -> CallParams {
        CallParams {
            system: self.system_prompt(),
            temperature: self.config.idea_temperature,
            max_output_tokens: self.config.max_output_tokens,
        }
    }

    fn code_params(&self) -> CallParams {
        CallParams {
            temperature: self.config.code_temperature,
            ..self.idea_params()
        }
    }

    fn interrupted(&self) -> bool {
        self.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed))
    }

    fn experiment_setup(&self) -> ExperimentSetup<'_> {
        ExperimentSetup {
            gate: self.gate,
            evaluator: self.evaluator,
            prompts: self.prompts,
            params: self.code_params(),
            config: self.config,
            code_file: self.spec.code_file.clone(),
            callbacks_file: self.spec.callbacks_file.clone(),
            stop: self.stop.clone(),
        }
    }

    /// Seeds an empty database: the canvas's seed solution if it has one,
    /// otherwise one generated baseline. Evaluated once, without experiments.
    /// Returns the record, or `None` if the database already had solutions.
    pub fn bootstrap(&self) -> Result<Option<SolutionRecord>, AgentError> {
        if !self.db.is_empty() {
            return Ok(None);
        }
        let (idea, code, callbacks) = match &self.spec.seed {
            Some(seed) => (seed.idea.clone(), seed.code.clone(), None),
            None => {
                let params = self.idea_params();
                let reply = self.gate.complete(&params.request(TAG_IDEAS, self.prompts.bootstrap_idea.clone()))?;
                let idea = parse_idea_list(&reply.text, 1)
                    .pop()
                    .unwrap_or_else(|| reply.text.trim().to_string());
                let code = implement_idea(
                    self.gate,
                    &self.code_params(),
                    self.prompts,
                    self.evaluator,
                    &idea,
                    None,
                    self.config.max_code_repairs,
                )?;
                (idea, code, None)
            }
        };
        self.gate.charge_evaluation().map_err(ModelError::from)?;
        let result = self.evaluator.evaluate(&code, None);
        log::info!("bootstrap: {} score={:?}", result.status.as_str(), result.ok_score());
        let id = self.db.next_id(0, 0, 0);
        let valid = result.is_ok();
        let record = SolutionRecord {
            id,
            idea,
            code,
            callbacks,
            experiment_summary: if valid {
                "Seed solution; evaluated once.".into()
            } else {
                format!("Seed solution failed evaluation ({}).", result.status.as_str())
            },
            metrics: if valid { result.metrics.clone() } else { MetricsRecord::default() },
            features: result.features.clone().unwrap_or_default(),
            score: result.ok_score().unwrap_or(INVALID_SCORE),
            parent_ids: vec![],
            valid,
            round: 0,
            lead: 0,
            attempts: 1,
            budget: self.gate.ledger().stamp(),
        };
        self.db.insert(record.clone())?;
        if !valid {
            return Err(AgentError::BootstrapFailed);
        }
        Ok(Some(record))
    }

    /// One research round of lead `lead`.
    ///
    /// Budget exhaustion or an interrupt ends the round early with a
    /// consistent (possibly partial) tree; other model failures are errors.
    pub fn run_round(&self, lead: u32, round: u32, store: &mut ReflectionStore) -> Result<RoundReport, AgentError> {
        let cfg = self.config;
        let mut rng = round_rng(self.seed, lead, round);
        let available = self.db.cell_bests().len();
        let crossover = available >= 2 && rng.gen_bool(cfg.crossover_probability.clamp(0.0, 1.0));
        let parents = self
            .db
            .sample_parents(if crossover { 2 } else { 1 }, cfg.sampling_temperature, &mut rng)?;
        let elite = self.db.current_elite()?;
        let mut shape = TreeShape::from_config(cfg);
        let mut base_repeats = cfg.base_experiment_repeats;
        if crossover {
            shape.max_depth = cfg.crossover_max_depth.unwrap_or(shape.max_depth);
            base_repeats = cfg.crossover_experiment_repeats.unwrap_or(base_repeats);
        }
        let root_is_elite = parents.iter().any(|p| p.id == elite.id);
        let mut tree = ResearchTree::init_round(&parents, lead, round, shape, root_is_elite)?;
        store.begin_round();
        log::info!(
            "lead {lead} round {round}: root {} ({:.3}){}",
            tree.root().solution_id,
            tree.root().score,
            if crossover { " with crossover" } else { "" }
        );

        let idea_params = self.idea_params();
        let code_params = self.code_params();
        let setup = self.experiment_setup();
        let mut new_records = Vec::new();
        let mut count = 0u32;
        let end = 'round: loop {
            if self.interrupted() {
                break RoundEnd::Interrupted;
            }
            let Some(focus) = tree.select_best_unfinished_leaf() else {
                break RoundEnd::Finished;
            };
            let budget = tree.child_budget(focus)? as usize;
            if budget == 0 {
                tree.mark_terminal(focus)?;
                continue;
            }
            let mut context = build_context(&tree, focus, cfg.context_scope)?;
            if crossover && focus == ROOT {
                context.push('\n');
                context.push_str(self.prompts.crossover.trim_end());
                context.push('\n');
            }
            let mut ideas = None;
            for _ in 0..2 {
                match generate_ideas(self.gate, &idea_params, self.prompts, &context, budget, store.long_term(), focus) {
                    Ok(set) => {
                        ideas = Some(set);
                        break;
                    }
                    Err(AgentError::NoParseableIdeas) => log::warn!("lead {lead}: unparseable idea list at node {focus}"),
                    Err(e) if e.is_budget() => break 'round RoundEnd::BudgetExhausted,
                    Err(e) => return Err(e),
                }
            }
            let Some(ideas) = ideas else {
                tree.mark_terminal(focus)?;
                continue;
            };

            let node = tree.node(focus)?.clone();
            let mut parent_ids = vec![node.solution_id];
            if focus == ROOT {
                parent_ids.extend(tree.co_parent.as_ref().map(|c| c.solution_id));
            }
            let mut children = Vec::new();
            let mut exhausted = false;
            for idea in ideas.ideas {
                if self.interrupted() {
                    break;
                }
                let code = match implement_idea(
                    self.gate,
                    &code_params,
                    self.prompts,
                    self.evaluator,
                    &idea,
                    Some(&node.code),
                    cfg.max_code_repairs,
                ) {
                    Ok(c) => c,
                    Err(e) if e.is_budget() => {
                        exhausted = true;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                count += 1;
                let id = self.db.next_id(lead, round, count);
                let parent_record = self.db.get(&node.solution_id);
                let outcome = run_experiments(
                    &setup,
                    ExperimentInput {
                        id,
                        idea: idea.clone(),
                        code,
                        callbacks: parent_record.and_then(|r| r.callbacks),
                        parent_score: Some(node.score),
                        parent_is_elite: node.solution_id == elite.id,
                        base_repeats,
                        snapshot_dir: self.db.snapshot_dir(&id),
                    },
                );
                if let StopReason::ModelFailure(msg) = &outcome.stop {
                    log::warn!("{id}: experiment stopped by model failure: {msg}");
                }
                exhausted |= outcome.stop == StopReason::BudgetExhausted;
                if outcome.attempts.is_empty() {
                    // never reached the evaluator
                    if outcome.stop == StopReason::Interrupted {
                        break;
                    }
                    exhausted = true;
                    break;
                }
                let result = outcome.final_result().expect("attempts exist");
                let valid = result.status == EvalStatus::Ok;
                let record = SolutionRecord {
                    id,
                    idea: idea.clone(),
                    code: outcome.final_code.clone(),
                    callbacks: outcome.final_callbacks.clone(),
                    experiment_summary: outcome.final_summary.clone(),
                    metrics: if valid { result.metrics.clone() } else { MetricsRecord::default() },
                    features: if valid { result.features.clone().unwrap_or_default() } else { FeatureSignature::default() },
                    score: outcome.score().unwrap_or(INVALID_SCORE),
                    parent_ids: parent_ids.clone(),
                    valid,
                    round,
                    lead,
                    attempts: outcome.attempts.len() as u32,
                    budget: self.gate.ledger().stamp(),
                };
                let inserted = self.db.insert(record.clone())?;
                log::info!("{id}: {:?} score={:.3} ({inserted:?})", result.status, record.score);
                new_records.push(id);
                children.push((idea, record));
                if !exhausted {
                    match store.add_summary(self.gate, &idea_params, self.prompts, &outcome.final_summary, (lead, round)) {
                        Ok(_) => {}
                        Err(ModelError::BudgetExhausted) => exhausted = true,
                        Err(e) => log::warn!("lead {lead}: long-term reflection failed: {e}"),
                    }
                }
                if exhausted {
                    break;
                }
            }
            if children.is_empty() && (exhausted || self.interrupted()) {
                break if exhausted { RoundEnd::BudgetExhausted } else { RoundEnd::Interrupted };
            }
            tree.attach_children(focus, children)?;
            self.write_tree(&tree);
            if exhausted {
                break RoundEnd::BudgetExhausted;
            }
        };
        self.write_tree(&tree);

        let co = tree.co_parent.as_ref().map_or(f64::NEG_INFINITY, |c| c.score);
        let fresh = new_records
            .iter()
            .filter_map(|id| self.db.get(id))
            .filter(|r| r.valid)
            .map(|r| r.score)
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(RoundReport {
            lead,
            round,
            crossover,
            best_score: tree.best_score().max(co).max(fresh),
            long_term_reflection: store.long_term().to_string(),
            tree,
            new_records,
            end,
        })
    }

    fn write_tree(&self, tree: &ResearchTree) {
        let Some(dir) = &self.run_dir else { return };
        let path = dir.join(tree_file_name(tree.lead, tree.round));
        if let Err(e) = std::fs::write(&path, tree.render()) {
            log::warn!("cannot write {}: {e}", path.display());
        }
    }

    /// `rounds` sequential rounds of one lead, stopping early on budget
    /// exhaustion or interrupt.
    pub fn run_lead(&self, lead: u32, rounds: u32) -> Result<Vec<RoundReport>, AgentError> {
        let log_path = self.run_dir.as_ref().map(|d| d.join(format!("lead{lead}_ltm.txt")));
        let mut store = ReflectionStore::new(self.config, log_path);
        let mut reports = Vec::new();
        for round in 1..=rounds {
            let report = self.run_round(lead, round, &mut store)?;
            let end = report.end;
            reports.push(report);
            if end != RoundEnd::Finished {
                break;
            }
        }
        Ok(reports)
    }

    /// Bootstraps if needed, then runs `num_lead_agents` leads concurrently.
    /// Results are per lead, in lead order.
    pub fn run(&self, rounds: u32) -> Result<Vec<Result<Vec<RoundReport>, AgentError>>, AgentError> {
        match self.bootstrap() {
            Ok(_) => {}
            Err(e) if e.is_budget() => return Ok(vec![]),
            Err(e) => return Err(e),
        }
        let leads = self.config.num_lead_agents.max(1) as usize;
        Ok(crate::par::map_range(leads, |i| self.run_lead(i as u32 + 1, rounds)))
    }
}

pub fn tree_file_name(lead: u32, round: u32) -> String {
    format!("lead{lead}_round{round}_tree.txt")
}
