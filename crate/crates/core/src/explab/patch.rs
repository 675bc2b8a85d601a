use thiserror::Error;

const SEARCH: &str = "<<<<<<< SEARCH";
const DIVIDER: &str = "=======";
const REPLACE: &str = ">>>>>>>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("block {0}: search text not found")]
    SearchNotFound(usize),
    #[error("block {block}: search text occurs {occurrences} times")]
    AmbiguousSearch { block: usize, occurrences: usize },
    #[error("malformed patch: {0}")]
    MalformedPatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchBlock {
    pub search: String,
    pub replace: String,
}

/// Extracts SEARCH/REPLACE blocks; text outside blocks is ignored. The closing
/// line is `>>>>>>>` optionally followed by `REPLACE`.
pub fn parse_patch(patch: &str) -> Result<Vec<PatchBlock>, PatchError> {
    let malformed = |m: &str| PatchError::MalformedPatch(m.to_string());
    let mut blocks = Vec::new();
    let mut lines = patch.lines();
    while let Some(line) = lines.next() {
        if line.trim_end() != SEARCH {
            continue;
        }
        let mut search = Vec::new();
        let mut replace = Vec::new();
        let mut in_replace = false;
        let mut closed = false;
        for line in lines.by_ref() {
            let t = line.trim_end();
            if !in_replace && t == DIVIDER {
                in_replace = true;
            } else if in_replace && (t == REPLACE || t == ">>>>>>> REPLACE") {
                closed = true;
                break;
            } else if t == SEARCH {
                return Err(malformed("nested SEARCH marker"));
            } else if in_replace {
                replace.push(line);
            } else {
                search.push(line);
            }
        }
        if !closed {
            return Err(malformed(if in_replace { "unterminated block" } else { "missing divider" }));
        }
        if search.iter().all(|l| l.trim().is_empty()) {
            return Err(malformed("empty search text"));
        }
        blocks.push(PatchBlock {
            search: search.join("\n"),
            replace: replace.join("\n"),
        });
    }
    if blocks.is_empty() {
        return Err(malformed("no SEARCH/REPLACE block"));
    }
    Ok(blocks)
}

/// Counts occurrences, overlapping ones included.
fn occurrences(haystack: &str, needle: &str) -> usize {
    let mut count = 0;
    let mut from = 0;
    while let Some(i) = haystack[from..].find(needle) {
        count += 1;
        from += i + haystack[from + i..].chars().next().map_or(1, char::len_utf8);
    }
    count
}

/// Applies each block in order; every search text must occur exactly once in
/// the text as it stands when that block is applied.
pub fn apply_patch(code: &str, patch: &str) -> Result<String, PatchError> {
    let mut text = code.to_string();
    for (i, block) in parse_patch(patch)?.iter().enumerate() {
        let n = i + 1;
        match occurrences(&text, &block.search) {
            0 => return Err(PatchError::SearchNotFound(n)),
            1 => text = text.replacen(&block.search, &block.replace, 1),
            k => {
                return Err(PatchError::AmbiguousSearch {
                    block: n,
                    occurrences: k,
                })
            }
        }
    }
    Ok(text)
}
