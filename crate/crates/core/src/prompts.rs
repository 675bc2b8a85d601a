//! Prompt templates.
//!
//! Defaults are compiled in from `prompts/*.txt`; [`Prompts::from_dir`] lets a
//! run override any subset with same-named files. Placeholders are
//! `{{name}}`, substituted in one pass so inserted text is never re-scanned.

use std::path::Path;

macro_rules! templates {
    ($($field:ident),* $(,)?) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Prompts {
            $(pub $field: String,)*
        }

        impl Default for Prompts {
            fn default() -> Self {
                Prompts {
                    $($field: include_str!(concat!("../prompts/", stringify!($field), ".txt")).to_string(),)*
                }
            }
        }

        impl Prompts {
            /// Defaults, with `<dir>/<name>.txt` replacing any template present there.
            pub fn from_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
                let dir = dir.as_ref();
                let mut p = Prompts::default();
                $(
                    let path = dir.join(concat!(stringify!($field), ".txt"));
                    if path.exists() {
                        p.$field = std::fs::read_to_string(&path)?;
                    }
                )*
                Ok(p)
            }
        }
    };
}

templates!(
    system,
    idea,
    crossover,
    bootstrap_idea,
    code,
    repair,
    experiment_step,
    final_attempt,
    reask,
    experiment_summary,
    progressive_summary,
    long_term,
    compress,
);

/// Replaces `{{key}}` occurrences; unknown keys are left as they are.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(key);
                        out.push_str("}}");
                    }
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Body of the first fenced code block, preferring one tagged `python`.
pub fn extract_fenced(text: &str) -> Option<String> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let t = line.trim_start();
        let Some(lang) = t.strip_prefix("```") else { continue };
        let lang = lang.trim().to_ascii_lowercase();
        let mut body = Vec::new();
        let mut closed = false;
        for l in lines.by_ref() {
            if l.trim_start().starts_with("```") {
                closed = true;
                break;
            }
            body.push(l);
        }
        if !closed {
            return None;
        }
        let mut b = body.join("\n");
        b.push('\n');
        blocks.push((lang, b));
    }
    let pick = blocks
        .iter()
        .position(|(l, _)| l == "python" || l == "py")
        .or(if blocks.is_empty() { None } else { Some(0) })?;
    Some(blocks.swap_remove(pick).1)
}
