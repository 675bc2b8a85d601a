use crate::explab::{CheckOutcome, Evaluate};
use crate::modelgate::{CallParams, ModelGate};
use crate::prompts::{extract_fenced, fill, Prompts};

use super::AgentError;

pub const TAG_CODE: &str = "code_gen";
pub const TAG_REPAIR: &str = "code_repair";

fn code_of(reply: &str) -> String {
    extract_fenced(reply).unwrap_or_else(|| {
        let mut s = reply.trim().to_string();
        s.push('\n');
        s
    })
}

/// Turns an idea into code, then runs the evaluator's syntax check and asks
/// for up to `max_repairs` fixes. The last version is returned either way;
/// the experiment decides validity.
pub fn implement_idea(
    gate: &ModelGate,
    params: &CallParams,
    prompts: &Prompts,
    evaluator: &dyn Evaluate,
    idea: &str,
    parent_code: Option<&str>,
    max_repairs: u32,
) -> Result<String, AgentError> {
    if idea.trim().is_empty() {
        return Err(AgentError::EmptyIdea);
    }
    let prompt = fill(
        &prompts.code,
        &[("idea", idea.trim()), ("parent_code", parent_code.map_or("(none)", str::trim_end))],
    );
    let mut code = code_of(&gate.complete(&params.request(TAG_CODE, prompt))?.text);
    for _ in 0..max_repairs {
        let CheckOutcome::Failed(log) = evaluator.check(&code) else {
            return Ok(code);
        };
        log::debug!("pre-check failed, asking for a repair");
        let prompt = fill(&prompts.repair, &[("code", code.trim_end()), ("log", log.trim_end())]);
        code = code_of(&gate.complete(&params.request(TAG_REPAIR, prompt))?.text);
    }
    Ok(code)
}
