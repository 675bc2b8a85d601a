//! Summary and long-term layers of the reflection stack.
//!
//! Step reflections live in the experiment trace. This module owns the
//! periodic progressive summary of an experiment history, the long-term
//! reflection a lead agent carries across solutions, and word-budget
//! compression of that reflection.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use crate::canvas::{RunConfig, WordBudget};
use crate::modelgate::{CallParams, ModelError, ModelGate};
use crate::prompts::{fill, Prompts};

pub const TAG_PROGRESSIVE: &str = "progressive_summary";
pub const TAG_LONG_TERM: &str = "long_term_reflection";
pub const TAG_COMPRESS: &str = "compress";

/// Three decimals, or `None` for a missing score.
pub fn format_score(score: Option<f64>) -> String {
    match score {
        Some(s) => format!("{s:.3}"),
        None => "None".to_string(),
    }
}

/// Engine-computed header of a progressive summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryHeader {
    pub from: usize,
    pub to: usize,
    pub initial: Option<f64>,
    pub current: Option<f64>,
    pub best: Option<f64>,
}

impl SummaryHeader {
    /// `scores[i]` is experiment `i + 1`'s score, `None` when it failed.
    pub fn new(scores: &[Option<f64>], from: usize, to: usize) -> Self {
        let upto = &scores[..to.min(scores.len())];
        SummaryHeader {
            from,
            to,
            initial: upto.first().copied().flatten(),
            current: upto.last().copied().flatten(),
            best: upto.iter().flatten().copied().fold(None, |b: Option<f64>, s| Some(b.map_or(s, |b| b.max(s)))),
        }
    }

    pub fn render(&self) -> String {
        format!(
            "Progressive Summary for experiments #{} ~ #{}:\n- Initial score: {}\n- Current score: {}\n- Best score so far: {}\n",
            self.from,
            self.to,
            format_score(self.initial),
            format_score(self.current),
            format_score(self.best)
        )
    }
}

fn is_header_line(line: &str) -> bool {
    let t = line.trim().trim_start_matches(['-', '*', ' ']);
    ["Progressive Summary for", "Initial score:", "Current score:", "Best score so far:", "Key insights from recent experiments"]
        .iter()
        .any(|p| t.starts_with(p))
}

/// Summarizes experiments `from..=to`. Returns `None` without calling the
/// model while fewer than `interval` experiments exist.
pub fn progressive_summary(
    gate: &ModelGate,
    params: &CallParams,
    prompts: &Prompts,
    scores: &[Option<f64>],
    history: &str,
    from: usize,
    to: usize,
    interval: usize,
) -> Result<Option<String>, ModelError> {
    if to < interval.max(1) || from == 0 || from > to || to > scores.len() {
        return Ok(None);
    }
    let prompt = fill(
        &prompts.progressive_summary,
        &[("from", &from.to_string()), ("to", &to.to_string()), ("history", history)],
    );
    let reply = gate.complete(&params.request(TAG_PROGRESSIVE, prompt))?;
    let body: Vec<&str> = reply.text.lines().filter(|l| !is_header_line(l)).collect();
    let mut out = SummaryHeader::new(scores, from, to).render();
    let _ = write!(out, "\nKey insights from recent experiments:\n{}\n", body.join("\n").trim());
    Ok(Some(out))
}

/// Whitespace-delimited word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Cuts `text` right after its `budget`-th word.
pub fn truncate_words(text: &str, budget: usize) -> String {
    let mut seen = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word && seen == budget {
                return text[..i].to_string();
            }
            in_word = false;
        } else if !in_word {
            in_word = true;
            seen += 1;
            if seen > budget {
                return text[..i].trim_end().to_string();
            }
        }
    }
    text.to_string()
}

/// Shrinks `text` to the word budget: no call when it already fits, else one
/// model call, hard-truncated if the model overruns.
pub fn compress(
    gate: &ModelGate,
    params: &CallParams,
    prompts: &Prompts,
    text: &str,
    budget: WordBudget,
) -> Result<String, ModelError> {
    let WordBudget::Limited(limit) = budget else {
        return Ok(text.to_string());
    };
    if word_count(text) <= limit {
        return Ok(text.to_string());
    }
    let prompt = fill(&prompts.compress, &[("budget", &limit.to_string()), ("text", text)]);
    let reply = gate.complete(&params.request(TAG_COMPRESS, prompt))?;
    Ok(truncate_words(&reply.text, limit))
}

/// Long-term reflection of one lead agent.
#[derive(Debug, Clone)]
pub struct ReflectionStore {
    long_term: String,
    pending: Vec<String>,
    interval: usize,
    word_budget: WordBudget,
    persist: bool,
    updates: usize,
    log_path: Option<PathBuf>,
}

impl ReflectionStore {
    pub fn new(cfg: &RunConfig, log_path: Option<PathBuf>) -> Self {
        ReflectionStore {
            long_term: String::new(),
            pending: Vec::new(),
            interval: cfg.ltm_refresh_interval.max(1) as usize,
            word_budget: cfg.ltm_word_budget,
            persist: cfg.ltm_persist_across_rounds,
            updates: 0,
            log_path,
        }
    }

    pub fn long_term(&self) -> &str {
        &self.long_term
    }

    pub fn summaries_since_refresh(&self) -> usize {
        self.pending.len()
    }

    /// Long-term updates performed so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Start-of-round hook: without persistence everything is forgotten.
    pub fn begin_round(&mut self) {
        if !self.persist {
            self.long_term.clear();
            self.pending.clear();
        }
    }

    /// Queues one experiment summary; when the interval is reached, folds the
    /// queue into the long-term reflection with one model call (plus one for
    /// compression if it overflows the word budget). Returns whether an
    /// update happened.
    pub fn add_summary(
        &mut self,
        gate: &ModelGate,
        params: &CallParams,
        prompts: &Prompts,
        summary: &str,
        stamp: (u32, u32),
    ) -> Result<bool, ModelError> {
        self.pending.push(summary.to_string());
        if self.pending.len() < self.interval {
            return Ok(false);
        }
        let mut joined = String::new();
        for (i, s) in self.pending.iter().enumerate() {
            let _ = writeln!(joined, "## Summary {}\n{}\n", i + 1, s.trim());
        }
        let current = if self.long_term.is_empty() { "(none yet)" } else { self.long_term.as_str() };
        let prompt = fill(&prompts.long_term, &[("reflection", current), ("summaries", &joined)]);
        let reply = gate.complete(&params.request(TAG_LONG_TERM, prompt))?;
        let text = compress(gate, params, prompts, &reply.text, self.word_budget)?;
        self.long_term = text;
        self.pending.clear();
        self.updates += 1;
        self.append_log(stamp);
        Ok(true)
    }

    fn append_log(&self, (lead, round): (u32, u32)) {
        let Some(path) = &self.log_path else { return };
        let entry = format!("=== lead {lead} round {round} update {} ===\n{}\n\n", self.updates, self.long_term.trim_end());
        let res = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(entry.as_bytes()));
        if let Err(e) = res {
            log::warn!("cannot append long-term reflection to {}: {e}", path.display());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelgate::{BudgetLedger, Playbook, ScriptedBackend};
    use std::sync::Arc;

    fn gate(book: &str) -> (ModelGate, Arc<ScriptedBackend>) {
        let b = Arc::new(ScriptedBackend::new(Playbook::parse(book).unwrap()));
        (ModelGate::new(b.clone(), Arc::new(BudgetLedger::new(100, 100))), b)
    }

    fn params() -> CallParams {
        CallParams {
            system: String::new(),
            temperature: 0.2,
            max_output_tokens: 100,
        }
    }

    #[test]
    fn header_uses_engine_numbers() {
        let (g, _) = gate("[[entry]]\ntag = \"progressive_summary\"\nresponse = \"- Best score so far: 999\\nThings improved.\"\n");
        let scores = [Some(-35.132), Some(-30.0), Some(-25.0), Some(-23.697)];
        let s = progressive_summary(&g, &params(), &Prompts::default(), &scores, "h", 1, 4, 4).unwrap().unwrap();
        assert!(s.starts_with("Progressive Summary for experiments #1 ~ #4:\n- Initial score: -35.132\n- Current score: -23.697\n- Best score so far: -23.697\n"));
        assert!(!s.contains("999"));
        assert!(s.ends_with("Key insights from recent experiments:\nThings improved.\n"));
    }

    #[test]
    fn below_interval_makes_no_call() {
        let (g, b) = gate("");
        let r = progressive_summary(&g, &params(), &Prompts::default(), &[Some(1.0); 3], "", 1, 3, 4).unwrap();
        assert_eq!(r, None);
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn current_none_when_latest_failed() {
        let h = SummaryHeader::new(&[Some(-1.0), None], 1, 2);
        assert!(h.render().contains("- Current score: None\n"));
    }

    #[test]
    fn word_truncation() {
        assert_eq!(truncate_words("a b  c d", 2), "a b");
        assert_eq!(truncate_words("  a\nb c", 2), "  a\nb");
        assert_eq!(truncate_words("a b", 5), "a b");
        assert_eq!(truncate_words("a b ", 2), "a b");
    }

    #[test]
    fn compression_paths() {
        let long: String = (0..120).map(|i| format!("w{i} ")).collect();
        let (g, b) = gate(&format!("[[entry]]\ntag = \"compress\"\nresponse = \"{long}\"\n"));
        let p = Prompts::default();
        assert_eq!(compress(&g, &params(), &p, "short text", WordBudget::Unlimited).unwrap(), "short text");
        assert_eq!(compress(&g, &params(), &p, &long, WordBudget::Limited(400)).unwrap(), long);
        assert_eq!(b.calls(), 0);
        let out = compress(&g, &params(), &p, &long, WordBudget::Limited(100)).unwrap();
        assert_eq!(word_count(&out), 100);
        assert_eq!(b.calls(), 1);
    }

    #[test]
    fn cadence_and_reset() {
        let (g, b) = gate("[[entry]]\ntag = \"long_term_reflection\"\nresponse = \"lesson\"\nrepeat = true\n");
        let mut cfg = RunConfig::default();
        cfg.ltm_persist_across_rounds = false;
        let mut store = ReflectionStore::new(&cfg, None);
        let p = Prompts::default();
        assert!(!store.add_summary(&g, &params(), &p, "s1", (1, 1)).unwrap());
        assert!(!store.add_summary(&g, &params(), &p, "s2", (1, 1)).unwrap());
        assert_eq!((store.summaries_since_refresh(), b.calls()), (2, 0));
        assert!(store.add_summary(&g, &params(), &p, "s3", (1, 1)).unwrap());
        assert_eq!((store.summaries_since_refresh(), b.calls()), (0, 1));
        assert_eq!(store.long_term(), "lesson");
        store.begin_round();
        assert_eq!(store.long_term(), "");
    }
}
