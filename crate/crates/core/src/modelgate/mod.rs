//! Chat-completion backends behind one contract, plus the shared budget ledger.
//!
//! Every model call goes through [`ModelGate::complete`], which charges the
//! ledger before touching the backend: a call that would exceed the budget
//! never reaches the network.

mod http;
mod ledger;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpSettings};
pub use ledger::{BudgetExhausted, BudgetLedger};
pub use scripted::{Playbook, PlaybookEntry, ScriptedBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("language-model call budget exhausted")]
    BudgetExhausted,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("playbook has no unconsumed entry for tag `{tag}`")]
    ScriptExhausted { tag: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("playbook error: {0}")]
    Playbook(String),
}

impl From<BudgetExhausted> for ModelError {
    fn from(_: BudgetExhausted) -> Self {
        ModelError::BudgetExhausted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Caller label such as `idea_gen` or `experiment_step`.
    pub tag: String,
}

impl ChatRequest {
    pub fn new(tag: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: user.into(),
            }],
            temperature: 0.7,
            max_output_tokens: 4096,
            tag: tag.into(),
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_output_tokens(mut self, n: u32) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        self.messages.push(ChatMessage {
            role,
            content: content.into(),
        });
    }

    /// Concatenated system and message text; what playbook matches search.
    pub fn full_text(&self) -> String {
        let mut s = self.system.clone();
        for m in &self.messages {
            s.push('\n');
            s.push_str(&m.content);
        }
        s
    }

    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }

    pub fn check(&self) -> Result<(), ModelError> {
        match self.messages.first() {
            None => return Err(ModelError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::User => {
                return Err(ModelError::InvalidRequest("first message must be from the user".into()))
            }
            _ => {}
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ModelError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(ModelError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError>;

    fn name(&self) -> &str;
}

/// System prompt and decoding settings shared by a family of requests.
#[derive(Debug, Clone, PartialEq)]
pub struct CallParams {
    pub system: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl CallParams {
    pub fn request(&self, tag: &str, user: impl Into<String>) -> ChatRequest {
        ChatRequest::new(tag, self.system.clone(), user)
            .temperature(self.temperature)
            .max_output_tokens(self.max_output_tokens)
    }
}

/// A backend paired with the run's shared ledger.
#[derive(Clone)]
pub struct ModelGate {
    backend: Arc<dyn ChatBackend>,
    ledger: Arc<BudgetLedger>,
}

impl ModelGate {
    pub fn new(backend: Arc<dyn ChatBackend>, ledger: Arc<BudgetLedger>) -> Self {
        ModelGate { backend, ledger }
    }

    pub fn ledger(&self) -> &Arc<BudgetLedger> {
        &self.ledger
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// One charged call. Failed calls still count once; an empty reply is an error.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        request.check()?;
        self.ledger.charge_llm_call()?;
        log::debug!("model call tag={} used={}", request.tag, self.ledger.llm_calls_used());
        let response = self.backend.chat(request)?;
        if response.text.trim().is_empty() {
            return Err(ModelError::MalformedResponse("empty completion".into()));
        }
        Ok(response)
    }

    pub fn charge_evaluation(&self) -> Result<(), BudgetExhausted> {
        self.ledger.charge_evaluation()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_checks() {
        let mut r = ChatRequest::new("t", "sys", "hi");
        assert!(r.check().is_ok());
        r.messages.insert(
            0,
            ChatMessage {
                role: Role::Assistant,
                content: "x".into(),
            },
        );
        assert!(r.check().is_err());
        r.messages.clear();
        assert!(r.check().is_err());
        assert!(ChatRequest::new("t", "", "x").temperature(-1.0).check().is_err());
    }

    #[test]
    fn budget_blocks_before_backend() {
        let backend = Arc::new(ScriptedBackend::new(Playbook::parse("[[entry]]\ntag = \"a\"\nresponse = \"ok\"\nrepeat = true\n").unwrap()));
        let gate = ModelGate::new(backend.clone(), Arc::new(BudgetLedger::new(2, 0)));
        let req = ChatRequest::new("a", "", "q");
        assert_eq!(gate.complete(&req).unwrap().text, "ok");
        assert_eq!(gate.complete(&req).unwrap().text, "ok");
        assert_eq!(gate.complete(&req), Err(ModelError::BudgetExhausted));
        assert_eq!(backend.calls(), 2);
        assert_eq!(gate.ledger().llm_calls_used(), 2);
    }

    #[test]
    fn empty_reply_is_malformed_but_charged() {
        let backend = Arc::new(ScriptedBackend::new(Playbook::parse("[[entry]]\ntag = \"a\"\nresponse = \"  \"\n").unwrap()));
        let gate = ModelGate::new(backend, Arc::new(BudgetLedger::new(5, 0)));
        assert!(matches!(gate.complete(&ChatRequest::new("a", "", "q")), Err(ModelError::MalformedResponse(_))));
        assert_eq!(gate.ledger().llm_calls_used(), 1);
    }
}
