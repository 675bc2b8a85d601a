use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ora_core::agents::tree_file_name;
use ora_core::scorelab::{write_problem_table, BenchmarkEntry, Direction};
use ora_core::SolutionDb;

use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::run::{write_curves, DB_DIR};
use crate::{CliError, ReportArgs, TreeArgs};

const RUNS_ROOT: &str = "runs";

/// A run is named either by its directory or by its id under `runs/`.
pub fn resolve_run(name: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(name);
    if direct.join(MANIFEST_FILE).is_file() {
        return Ok(direct);
    }
    let under = Path::new(RUNS_ROOT).join(name);
    if under.join(MANIFEST_FILE).is_file() {
        return Ok(under);
    }
    Err(CliError::UnknownRun(name.to_string()))
}

pub fn cmd_tree(args: &TreeArgs) -> Result<String, CliError> {
    let dir = resolve_run(&args.run)?;
    let path = dir.join(tree_file_name(args.lead, args.round));
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Ok(format!("no tree for lead {} round {} in {}\n", args.lead, args.round, dir.display()))
        }
        Err(e) => Err(e.into()),
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `table_<problem>.csv` per problem and per-run curves under
/// `curves/`. Runs without a valid solution are left out of the tables.
pub fn cmd_report(args: &ReportArgs) -> Result<PathBuf, CliError> {
    if args.runs.is_empty() {
        return Err(CliError::Config("report needs at least one run".into()));
    }
    let runs: Vec<(PathBuf, RunManifest)> = args
        .runs
        .iter()
        .map(|name| {
            let dir = resolve_run(name)?;
            let m = RunManifest::read(&dir).map_err(CliError::Config)?;
            Ok((dir, m))
        })
        .collect::<Result<_, CliError>>()?;

    let out = args.out.clone().unwrap_or_else(|| Path::new(RUNS_ROOT).join("report"));
    let curves = out.join("curves");
    std::fs::create_dir_all(&curves)?;

    let mut per_problem: BTreeMap<String, Vec<BenchmarkEntry>> = BTreeMap::new();
    for (dir, m) in &runs {
        let db = SolutionDb::open(dir.join(DB_DIR)).map_err(|e| CliError::Io(e.to_string()))?;
        write_curves(&db, &curves.join(slug(&m.run_id)))?;
        let Some(best) = &m.best else {
            log::warn!("run {} has no valid solution; left out of the table", m.run_id);
            continue;
        };
        per_problem.entry(m.problem.clone()).or_default().push(BenchmarkEntry {
            problem: m.problem.clone(),
            algorithm: m.algorithm.clone(),
            raw_score: best.score,
            llm_calls: m.llm_calls_used,
            evaluations: m.evaluations_used,
        });
    }
    for (problem, entries) in &per_problem {
        let path = out.join(format!("table_{}.csv", slug(problem)));
        write_problem_table(&path, entries, Direction::Maximize).map_err(|e| CliError::Io(e.to_string()))?;
        print!("{}", std::fs::read_to_string(&path)?);
    }
    Ok(out)
}
