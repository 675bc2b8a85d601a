use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::canvas::{ProblemSpec, ScoringMode, CALLBACKS_PLACEHOLDER, CODE_PLACEHOLDER};
use crate::scorelab::{behavioral_signature, combined_score, ScoringConfig};

use super::protocol::{parse_result_block, BlockError};
use super::{CheckOutcome, EvalResult, EvalStatus, Evaluate};

const POLL: Duration = Duration::from_millis(5);

/// Runs the canvas's evaluation command as a child process.
///
/// Each run gets a fresh temporary directory holding the code (and callbacks)
/// files; that directory is also the working directory. The child leads its
/// own process group so a timeout or stop kills everything it spawned.
/// Relative command arguments naming files under `base_dir` are made absolute.
pub struct ProcessEvaluator {
    spec: ProblemSpec,
    scoring: ScoringConfig,
    base_dir: PathBuf,
    timeout: Duration,
    stop: Arc<AtomicBool>,
    runs: AtomicU64,
}

impl ProcessEvaluator {
    /// Relative arguments of the command resolve against `base_dir`; it is
    /// made absolute here because the child runs inside a scratch directory.
    pub fn new(spec: ProblemSpec, base_dir: impl Into<PathBuf>, timeout: Duration) -> Self {
        let base_dir = base_dir.into();
        let base_dir = std::path::absolute(&base_dir).unwrap_or(base_dir);
        ProcessEvaluator {
            spec,
            scoring: ScoringConfig::default(),
            base_dir,
            timeout,
            stop: Arc::new(AtomicBool::new(false)),
            runs: AtomicU64::new(0),
        }
    }

    pub fn with_scoring(mut self, scoring: ScoringConfig) -> Self {
        self.scoring = scoring;
        self
    }

    /// Shares a stop flag; raising it kills the running evaluation.
    pub fn with_stop_flag(mut self, stop: Arc<AtomicBool>) -> Self {
        self.stop = stop;
        self
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Processes launched so far (evaluations and checks).
    pub fn runs(&self) -> u64 {
        self.runs.load(Ordering::Relaxed)
    }

    fn argv(&self, code: &Path, callbacks: &Path, check: bool) -> Vec<String> {
        let tokens = shlex::split(&self.spec.evaluation_command).expect("validated at load");
        let mut argv: Vec<String> = tokens
            .into_iter()
            .map(|t| {
                if t.contains(CODE_PLACEHOLDER) || t.contains(CALLBACKS_PLACEHOLDER) {
                    t.replace(CODE_PLACEHOLDER, &code.to_string_lossy())
                        .replace(CALLBACKS_PLACEHOLDER, &callbacks.to_string_lossy())
                } else if Path::new(&t).is_relative() && !t.starts_with('-') && self.base_dir.join(&t).exists() {
                    self.base_dir.join(&t).to_string_lossy().into_owned()
                } else {
                    t
                }
            })
            .collect();
        if check {
            argv.push("--check".into());
        }
        argv
    }

    fn launch(&self, code: &str, callbacks: Option<&str>, check: bool) -> Run {
        self.runs.fetch_add(1, Ordering::Relaxed);
        let started = Instant::now();
        let fail = |log: String| Run {
            log,
            exit: None,
            timed_out: false,
            duration: started.elapsed(),
        };
        let dir = match tempfile::Builder::new().prefix("ora-eval-").tempdir() {
            Ok(d) => d,
            Err(e) => return fail(format!("cannot create sandbox directory: {e}")),
        };
        let code_path = dir.path().join(&self.spec.code_file);
        let cb_path = dir.path().join(&self.spec.callbacks_file);
        let log_path = dir.path().join(".ora-output.log");
        let written = std::fs::write(&code_path, code)
            .and_then(|_| std::fs::write(&cb_path, callbacks.unwrap_or("")))
            .and_then(|_| File::create(&log_path));
        let log_file = match written {
            Ok(f) => f,
            Err(e) => return fail(format!("cannot prepare sandbox: {e}")),
        };
        let argv = self.argv(&code_path, &cb_path, check);
        let stderr = match log_file.try_clone() {
            Ok(f) => f,
            Err(e) => return fail(format!("cannot prepare sandbox: {e}")),
        };
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .current_dir(dir.path())
            .stdin(Stdio::null())
            .stdout(log_file)
            .stderr(stderr);
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => return fail(format!("cannot start `{}`: {e}", argv[0])),
        };
        let pgid = child.id() as i32;
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) => {}
                Err(_) => break None,
            }
            let stopping = self.stop.load(Ordering::Relaxed);
            if started.elapsed() >= self.timeout || stopping {
                timed_out = !stopping;
                break None;
            }
            std::thread::sleep(POLL);
        };
        // The group may outlive the leader (background children); always reap it.
        unsafe {
            libc::kill(-pgid, libc::SIGKILL);
        }
        let status = status.or_else(|| child.wait().ok());
        let mut log = String::from_utf8_lossy(&std::fs::read(&log_path).unwrap_or_default()).into_owned();
        if timed_out {
            if !log.is_empty() && !log.ends_with('\n') {
                log.push('\n');
            }
            log.push_str(&format!("Timed out after {} seconds\n", format_secs(self.timeout)));
        } else if self.stop.load(Ordering::Relaxed) && status.is_none_or(|s| !s.success()) {
            log.push_str("Evaluation interrupted\n");
        }
        Run {
            log,
            exit: if timed_out { None } else { status.and_then(|s| s.code()) },
            timed_out,
            duration: started.elapsed(),
        }
    }

    fn interpret(&self, run: Run) -> EvalResult {
        let mut result = EvalResult::failed(EvalStatus::NoEndMarker, run.log, run.duration);
        result.exit_code = run.exit;
        if run.timed_out {
            result.status = EvalStatus::Timeout;
            return result;
        }
        let block = match parse_result_block(&result.raw_log) {
            Ok(b) => b,
            Err(BlockError::Missing) => return result,
            Err(BlockError::Malformed(m)) => {
                result.status = EvalStatus::ParseError;
                result.detail = Some(m);
                return result;
            }
        };
        if run.exit != Some(0) {
            result.status = EvalStatus::NonzeroExit;
            return result;
        }
        let mut score = block.score;
        let mut features = block.features;
        if self.spec.scoring == ScoringMode::Driving {
            if score.is_none() {
                match combined_score(&block.metrics, &self.scoring) {
                    Ok(s) => score = Some(s),
                    Err(e) => return result.parse_error(e.to_string()),
                }
            }
            if features.is_none() {
                match behavioral_signature(&block.metrics, &self.scoring) {
                    Ok(f) => features = Some(f),
                    Err(e) => return result.parse_error(e.to_string()),
                }
            }
        }
        let Some(score) = score else {
            return result.parse_error("result block has no score".into());
        };
        let features = features.unwrap_or_default();
        if let Some(levels) = &self.spec.feature_levels {
            let fits = features.0.len() == levels.len() && features.0.iter().zip(levels).all(|(f, l)| f <= l);
            if !fits {
                return result.parse_error(format!("features {features} do not fit declared levels {levels:?}"));
            }
        }
        result.status = EvalStatus::Ok;
        result.metrics = block.metrics;
        result.features = Some(features);
        result.score = Some(score);
        result
    }
}

fn format_secs(d: Duration) -> String {
    let s = d.as_secs_f64();
    if s.fract() == 0.0 {
        format!("{}", s as u64)
    } else {
        format!("{s}")
    }
}

struct Run {
    log: String,
    exit: Option<i32>,
    timed_out: bool,
    duration: Duration,
}

impl Evaluate for ProcessEvaluator {
    fn evaluate(&self, code: &str, callbacks: Option<&str>) -> EvalResult {
        let run = self.launch(code, callbacks, false);
        self.interpret(run)
    }

    fn check(&self, code: &str) -> CheckOutcome {
        let run = self.launch(code, None, true);
        if run.exit == Some(0) {
            CheckOutcome::Passed
        } else {
            CheckOutcome::Failed(run.log)
        }
    }
}
