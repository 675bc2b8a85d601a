use crate::modelgate::{CallParams, ModelGate};
use crate::prompts::{fill, Prompts};

use super::AgentError;

pub const TAG_IDEAS: &str = "idea_gen";

/// Children proposed jointly for one parent node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdeaSet {
    pub ideas: Vec<String>,
    pub parent_node: usize,
}

fn item_start(line: &str) -> Option<&str> {
    let t = line.trim_start().trim_start_matches("**");
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = t[digits..].strip_prefix('.')?;
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace) || rest.starts_with("**")) {
        return None;
    }
    Some(rest.trim_start_matches("**").trim())
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a numbered list. A line starting `<n>.` opens an item, following
/// lines continue it; text before the first item is ignored. Items equal up
/// to whitespace are collapsed, and at most `n` are kept.
pub fn parse_idea_list(text: &str, n: usize) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut open = false;
    for line in text.lines() {
        if let Some(first) = item_start(line) {
            items.push(first.to_string());
            open = true;
        } else if open && !line.trim().is_empty() {
            let cur = items.last_mut().expect("open item");
            if !cur.is_empty() {
                cur.push('\n');
            }
            cur.push_str(line.trim());
        }
    }
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .map(|i| i.trim().to_string())
        .filter(|i| !i.is_empty() && seen.insert(normalized(i)))
        .take(n)
        .collect()
}

/// One model call proposing up to `n` coordinated child ideas.
pub fn generate_ideas(
    gate: &ModelGate,
    params: &CallParams,
    prompts: &Prompts,
    context: &str,
    n: usize,
    reflection: &str,
    parent_node: usize,
) -> Result<IdeaSet, AgentError> {
    assert!(n >= 1, "at least one idea must be requested");
    let reflection = if reflection.trim().is_empty() { "(none yet)" } else { reflection.trim() };
    let prompt = fill(
        &prompts.idea,
        &[("n", &n.to_string()), ("context", context.trim_end()), ("reflection", reflection)],
    );
    let reply = gate.complete(&params.request(TAG_IDEAS, prompt))?;
    let ideas = parse_idea_list(&reply.text, n);
    if ideas.is_empty() {
        return Err(AgentError::NoParseableIdeas);
    }
    Ok(IdeaSet { ideas, parent_node })
}
