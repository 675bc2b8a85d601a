/// Keeps the first `head` and last `tail` lines, replacing the middle with a
/// marker that names the total. Logs of at most `head + tail` lines pass
/// through unchanged.
pub fn truncate_log(log: &str, head: usize, tail: usize) -> String {
    let trailing_newline = log.ends_with('\n');
    let body = log.strip_suffix('\n').unwrap_or(log);
    let lines: Vec<&str> = body.split('\n').collect();
    let total = if log.is_empty() { 0 } else { lines.len() };
    if total <= head + tail {
        return log.to_string();
    }
    let mut out: Vec<String> = lines[..head].iter().map(|s| s.to_string()).collect();
    out.push(format!(
        "[Output truncated: {total} total lines, showing first {head} and last {tail} lines]"
    ));
    out.extend(lines[total - tail..].iter().map(|s| s.to_string()));
    let mut text = out.join("\n");
    if trailing_newline {
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(n: usize) -> String {
        (1..=n).map(|i| format!("line {i}\n")).collect()
    }

    #[test]
    fn boundaries() {
        assert_eq!(truncate_log(&numbered(10), 50, 50), numbered(10));
        assert_eq!(truncate_log(&numbered(100), 50, 50), numbered(100));
        assert_eq!(truncate_log("", 1, 1), "");
        let t = truncate_log(&numbered(101), 50, 50);
        assert_eq!(t.lines().count(), 101);
        assert!(t.contains("line 50\n[Output truncated: 101 total lines, showing first 50 and last 50 lines]\nline 52\n"));
    }
}
