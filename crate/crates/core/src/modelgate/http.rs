use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, ModelError, TokenUsage};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub initial_backoff: Duration,
}

impl HttpSettings {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpSettings {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(600),
            retries: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }

    /// Reads `ORA_BASE_URL`, `ORA_MODEL` and (optionally) `ORA_API_KEY`.
    pub fn from_env() -> Result<Self, ModelError> {
        let var = |name: &str| {
            std::env::var(name)
                .ok()
                .filter(|v| !v.trim().is_empty())
        };
        let base = var("ORA_BASE_URL").ok_or_else(|| ModelError::InvalidRequest("ORA_BASE_URL is not set".into()))?;
        let model = var("ORA_MODEL").ok_or_else(|| ModelError::InvalidRequest("ORA_MODEL is not set".into()))?;
        let mut s = HttpSettings::new(base, model);
        s.api_key = var("ORA_API_KEY");
        Ok(s)
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    settings: HttpSettings,
    url: String,
    client: reqwest::blocking::Client,
}

enum Failure {
    Retry(String),
    Fatal(ModelError),
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Result<Self, ModelError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let url = format!("{}/chat/completions", settings.base_url.trim_end_matches('/'));
        Ok(HttpBackend { settings, url, client })
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        for m in &request.messages {
            messages.push(json!({"role": m.role, "content": m.content}));
        }
        json!({
            "model": self.settings.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, Failure> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retry(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(ModelError::Transport(format!("HTTP {status}: {}", text.trim()))));
        }
        parse_completion(&text).map_err(Failure::Fatal)
    }
}

pub(crate) fn parse_completion(text: &str) -> Result<ChatResponse, ModelError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ModelError::MalformedResponse(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ModelError::MalformedResponse("missing choices[0].message.content".into()))?;
    if content.trim().is_empty() {
        return Err(ModelError::MalformedResponse("empty completion".into()));
    }
    let count = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse {
        text: content.to_string(),
        usage: TokenUsage {
            prompt: count("/usage/prompt_tokens"),
            completion: count("/usage/completion_tokens"),
        },
    })
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let body = self.body(request);
        let mut backoff = self.settings.initial_backoff;
        let mut last = String::new();
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                log::warn!("retrying model call ({attempt}/{}): {last}", self.settings.retries);
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            match self.attempt(&body) {
                Ok(r) => return Ok(r),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => last = msg,
            }
        }
        Err(ModelError::Transport(last))
    }

    fn name(&self) -> &str {
        "http"
    }
}
