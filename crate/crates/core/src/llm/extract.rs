//! Fenced code block extraction from model answers.

const CPP_TAGS: &[&str] = &["cpp", "c++", "cxx", "cc"];

fn fence_len(line: &str) -> Option<(usize, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ticks = rest.len() - rest.trim_start_matches('`').len();
    (ticks >= 3).then(|| (ticks, rest[ticks..].trim()))
}

/// Returns the contents of the last closed fenced block tagged as C++.
/// Unclosed blocks (typically truncated generations) are ignored.
pub fn extract_code_block(answer: &str) -> Option<String> {
    let mut last = None;
    let mut open: Option<(usize, bool, Vec<&str>)> = None;
    for line in answer.lines() {
        match open.as_mut() {
            None => {
                if let Some((ticks, info)) = fence_len(line) {
                    let lang = info.split_whitespace().next().unwrap_or("");
                    let is_cpp = CPP_TAGS.iter().any(|t| t.eq_ignore_ascii_case(lang));
                    open = Some((ticks, is_cpp, Vec::new()));
                }
            }
            Some((ticks, is_cpp, body)) => match fence_len(line) {
                Some((n, info)) if n >= *ticks && info.is_empty() => {
                    if *is_cpp {
                        last = Some(body.join("\n"));
                    }
                    open = None;
                }
                _ => body.push(line),
            },
        }
    }
    last
}

/// Wraps `code` in a C++ fence.
pub fn fence(code: &str) -> String {
    format!("```cpp\n{code}\n```\n")
}
