use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use ora_core::agents::{AgentError, Research, RoundEnd};
use ora_core::canvas::{load_problem_spec, load_run_config, RunConfig};
use ora_core::explab::ProcessEvaluator;
use ora_core::modelgate::{
    BudgetLedger, ChatBackend, HttpBackend, HttpSettings, ModelError, ModelGate, Playbook, ScriptedBackend,
};
use ora_core::prompts::Prompts;
use ora_core::scorelab::{best_so_far_curve, write_curve_csv, BudgetAxis, Direction};
use ora_core::SolutionDb;

use crate::manifest::{unix_now, BestSolution, RunManifest, RunStatus};
use crate::{CliError, RunArgs};

pub const DB_DIR: &str = "db";
pub const REPORT_DIR: &str = "report";

fn backend(args: &RunArgs) -> Result<Arc<dyn ChatBackend>, CliError> {
    match args.backend {
        crate::BackendKind::Scripted => {
            let path = args
                .playbook
                .as_ref()
                .ok_or_else(|| CliError::Config("--backend scripted needs --playbook".into()))?;
            if !path.exists() {
                return Err(CliError::Config(format!("playbook {} does not exist", path.display())));
            }
            let book = Playbook::load(path).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Arc::new(ScriptedBackend::new(book)))
        }
        crate::BackendKind::Http => {
            let settings = HttpSettings::from_env().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Arc::new(HttpBackend::new(settings).map_err(CliError::Backend)?))
        }
    }
}

fn default_run_dir(spec: &Path, seed: u64) -> PathBuf {
    let stem = spec.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from("runs").join(format!("{stem}-s{seed}-{}", unix_now()))
}

/// Writes the best-so-far curves of everything in `db`.
pub fn write_curves(db: &SolutionDb, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let records = db.records();
    for axis in [BudgetAxis::LlmCalls, BudgetAxis::Evaluations] {
        let curve = best_so_far_curve(&records, axis, Direction::Maximize);
        write_curve_csv(&dir.join(format!("curve_{}.csv", axis.label())), axis, &curve)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs, stop: Arc<AtomicBool>) -> Result<RunManifest, CliError> {
    let spec = load_problem_spec(&args.spec).map_err(|e| CliError::Config(format!("{}: {e}", args.spec.display())))?;
    let mut config = match &args.config {
        Some(p) => load_run_config(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(n) = args.leads {
        config.num_lead_agents = n;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let prompts = match &args.prompts {
        Some(dir) => Prompts::from_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?,
        None => Prompts::default(),
    };
    let backend = backend(args)?;

    let run_dir = args.out.clone().unwrap_or_else(|| default_run_dir(&args.spec, args.seed));
    if run_dir.join(crate::manifest::MANIFEST_FILE).exists() {
        return Err(CliError::Config(format!("{} already holds a run", run_dir.display())));
    }
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("spec.toml"), spec.to_toml_string())?;
    std::fs::write(run_dir.join("config.toml"), config.to_toml_string())?;

    let ledger = Arc::new(BudgetLedger::new(config.budget_llm_calls, config.budget_evaluations));
    let gate = ModelGate::new(backend.clone(), ledger.clone());
    // Canvas paths in the evaluation command are relative to the canvas file.
    let base_dir = args.spec.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let evaluator = ProcessEvaluator::new(spec.clone(), base_dir, Duration::from_secs_f64(config.eval_timeout))
        .with_stop_flag(stop.clone());
    let db = SolutionDb::open(run_dir.join(DB_DIR)).map_err(|e| CliError::Io(e.to_string()))?;

    let run_id = run_dir
        .file_name()
        .map_or("run".into(), |s| s.to_string_lossy().into_owned());
    let mut manifest = RunManifest {
        run_id,
        problem: spec.name.clone().unwrap_or_else(|| "problem".into()),
        algorithm: args.label.clone(),
        spec_path: args.spec.display().to_string(),
        config_path: args.config.as_ref().map(|p| p.display().to_string()),
        backend: backend.name().to_string(),
        seed: args.seed,
        rounds: args.rounds,
        started_unix: unix_now(),
        finished_unix: None,
        status: RunStatus::Running,
        llm_calls_used: 0,
        llm_call_limit: config.budget_llm_calls,
        evaluations_used: 0,
        evaluation_limit: config.budget_evaluations,
        records: 0,
        valid_records: 0,
        best: None,
        error: None,
    };
    manifest.write(&run_dir)?;
    log::info!("run directory {}", run_dir.display());

    let research = Research {
        spec: &spec,
        config: &config,
        gate: &gate,
        evaluator: &evaluator,
        prompts: &prompts,
        db: &db,
        run_dir: Some(run_dir.clone()),
        seed: args.seed,
        stop: Some(stop.clone()),
    };
    let outcome = research.run(args.rounds);

    let mut error: Option<CliError> = None;
    let mut exhausted = ledger.exhausted();
    let mut interrupted = stop.load(std::sync::atomic::Ordering::Relaxed);
    match outcome {
        Ok(per_lead) => {
            if per_lead.is_empty() {
                exhausted = true;
            }
            for lead in per_lead {
                match lead {
                    Ok(reports) => {
                        for r in reports {
                            exhausted |= r.end == RoundEnd::BudgetExhausted;
                            interrupted |= r.end == RoundEnd::Interrupted;
                        }
                    }
                    Err(e) => {
                        error.get_or_insert(e.into());
                    }
                }
            }
        }
        Err(e) if e.is_budget() => exhausted = true,
        Err(e) => error = Some(e.into()),
    }

    write_curves(&db, &run_dir.join(REPORT_DIR))?;
    manifest.finished_unix = Some(unix_now());
    manifest.llm_calls_used = ledger.llm_calls_used();
    manifest.evaluations_used = ledger.evaluations_used();
    manifest.records = db.len();
    manifest.valid_records = db.valid_count();
    manifest.best = db.current_elite().ok().map(|r| BestSolution {
        id: r.id.to_string(),
        score: r.score,
    });
    interrupted |= stop.load(std::sync::atomic::Ordering::Relaxed);
    // A stop request explains whatever failed after it.
    if interrupted {
        error = None;
    }
    manifest.status = if error.is_some() {
        RunStatus::Failed
    } else if interrupted {
        RunStatus::Interrupted
    } else if exhausted {
        RunStatus::BudgetExhausted
    } else {
        RunStatus::Completed
    };
    manifest.error = error.as_ref().map(|e| e.to_string());
    manifest.write(&run_dir)?;

    if let Some(e) = error {
        return Err(e);
    }
    if manifest.best.is_none() && exhausted && !interrupted {
        return Err(CliError::NoValidSolution);
    }
    Ok(manifest)
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Model(ModelError::BudgetExhausted) => CliError::NoValidSolution,
            AgentError::Model(m) => CliError::Backend(m),
            other => CliError::Run(other.to_string()),
        }
    }
}
