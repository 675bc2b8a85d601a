use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ora_core::modelgate::ModelError;

mod inspect;
mod manifest;
mod run;

#[derive(Parser)]
#[command(name = "ora", version, about = "Tree-structured automated algorithm research")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run research rounds on a problem canvas.
    Run(RunArgs),
    /// Print the stored research tree of one round.
    Tree(TreeArgs),
    /// Normalized-score table and best-so-far curves over finished runs.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "http")]
    pub backend: BackendKind,
    #[arg(long)]
    pub playbook: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub rounds: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory; defaults to runs/<canvas>-s<seed>-<unix time>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides num_lead_agents from the config.
    #[arg(long)]
    pub leads: Option<u32>,
    /// Algorithm name used by `report`.
    #[arg(long, default_value = "ora")]
    pub label: String,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    /// Run directory, or a run id under runs/.
    #[arg(long)]
    pub run: String,
    #[arg(long, default_value_t = 1)]
    pub round: u32,
    #[arg(long, default_value_t = 1)]
    pub lead: u32,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<String>,
    /// Output directory; defaults to runs/report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("backend error: {0}")]
    Backend(ModelError),
    #[error("budget exhausted before any valid solution")]
    NoValidSolution,
    #[error("interrupted")]
    Interrupted,
    #[error("{0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::UnknownRun(_) => 2,
            CliError::Backend(_) => 3,
            CliError::NoValidSolution => 4,
            CliError::Interrupted => 130,
            CliError::Run(_) | CliError::Io(_) => 1,
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
                log::warn!("cannot install Ctrl-C handler: {e}");
            }
            let m = run::cmd_run(&args, stop)?;
            println!("run {} {:?}", m.run_id, m.status);
            match &m.best {
                Some(b) => println!("best {} score {}", b.id, b.score),
                None => println!("no valid solution"),
            }
            println!(
                "llm calls {}/{}  evaluations {}/{}",
                m.llm_calls_used, m.llm_call_limit, m.evaluations_used, m.evaluation_limit
            );
            if m.status == manifest::RunStatus::Interrupted {
                return Err(CliError::Interrupted);
            }
            Ok(())
        }
        Command::Tree(args) => {
            print!("{}", inspect::cmd_tree(&args)?);
            Ok(())
        }
        Command::Report(args) => {
            let out = inspect::cmd_report(&args)?;
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ora: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
