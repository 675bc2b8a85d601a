use std::path::Path;

use parking_lot::Mutex;
use serde::Deserialize;

use super::{ChatBackend, ChatRequest, ChatResponse, ModelError, TokenUsage};

/// One canned reply. Matches requests with the same tag whose text contains
/// `contains` (when given); used `times` times, or forever with `repeat`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaybookEntry {
    pub tag: String,
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
    #[serde(default = "one")]
    pub times: u32,
    #[serde(default)]
    pub repeat: bool,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Playbook {
    #[serde(default, rename = "entry")]
    pub entries: Vec<PlaybookEntry>,
}

impl Playbook {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let book: Playbook = toml::from_str(text).map_err(|e| ModelError::Playbook(e.to_string()))?;
        if let Some(e) = book.entries.iter().find(|e| e.times == 0 && !e.repeat) {
            return Err(ModelError::Playbook(format!("entry for tag `{}` has times = 0", e.tag)));
        }
        Ok(book)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Playbook(format!("{}: {e}", path.display())))?;
        Playbook::parse(&text)
    }
}

struct State {
    remaining: Vec<u32>,
    requests: Vec<ChatRequest>,
}

/// Deterministic backend replaying a playbook; the first unconsumed match wins.
pub struct ScriptedBackend {
    book: Playbook,
    state: Mutex<State>,
}

impl ScriptedBackend {
    pub fn new(book: Playbook) -> Self {
        let remaining = book.entries.iter().map(|e| e.times).collect();
        ScriptedBackend {
            book,
            state: Mutex::new(State {
                remaining,
                requests: Vec::new(),
            }),
        }
    }

    /// Every request seen so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().requests.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().requests.len()
    }
}

fn words(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ModelError> {
        let mut state = self.state.lock();
        state.requests.push(request.clone());
        let text = request.full_text();
        let hit = self.book.entries.iter().enumerate().position(|(i, e)| {
            e.tag == request.tag
                && (e.repeat || state.remaining[i] > 0)
                && e.contains.as_deref().is_none_or(|needle| text.contains(needle))
        });
        let Some(i) = hit else {
            return Err(ModelError::ScriptExhausted {
                tag: request.tag.clone(),
            });
        };
        let entry = &self.book.entries[i];
        if !entry.repeat {
            state.remaining[i] -= 1;
        }
        Ok(ChatResponse {
            text: entry.response.clone(),
            usage: TokenUsage {
                prompt: words(&text),
                completion: words(&entry.response),
            },
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOOK: &str = r#"
[[entry]]
tag = "idea_gen"
response = "first"

[[entry]]
tag = "idea_gen"
contains = "special"
response = "special reply"

[[entry]]
tag = "idea_gen"
response = "second"
times = 2
"#;

    #[test]
    fn first_unconsumed_match_wins() {
        let b = ScriptedBackend::new(Playbook::parse(BOOK).unwrap());
        let plain = ChatRequest::new("idea_gen", "", "go");
        let special = ChatRequest::new("idea_gen", "", "a special case");
        assert_eq!(b.chat(&plain).unwrap().text, "first");
        assert_eq!(b.chat(&plain).unwrap().text, "second");
        assert_eq!(b.chat(&special).unwrap().text, "special reply");
        assert_eq!(b.chat(&special).unwrap().text, "second");
        assert_eq!(
            b.chat(&plain),
            Err(ModelError::ScriptExhausted {
                tag: "idea_gen".into()
            })
        );
        assert!(b.chat(&ChatRequest::new("other", "", "x")).is_err());
        assert_eq!(b.calls(), 6);
    }

    #[test]
    fn replay_is_identical() {
        let run = || {
            let b = ScriptedBackend::new(Playbook::parse(BOOK).unwrap());
            (0..4)
                .map(|i| b.chat(&ChatRequest::new("idea_gen", "", if i == 2 { "special" } else { "x" })).map(|r| r.text))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_playbooks() {
        assert!(Playbook::parse("[[entry]]\ntag = \"a\"\n").is_err());
        assert!(Playbook::parse("[[entry]]\ntag = \"a\"\nresponse = \"x\"\ntimes = 0\n").is_err());
        assert!(Playbook::parse("[[entry]]\ntag = \"a\"\nresponse = \"x\"\nbogus = 1\n").is_err());
    }
}
