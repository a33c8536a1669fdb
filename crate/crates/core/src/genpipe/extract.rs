use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTest {
    pub test_id: String,
    pub requirement_id: String,
    /// 1-based, contiguous within one response.
    pub ordinal: usize,
    pub info: String,
    pub code: String,
    /// Character span of `code` in the raw response.
    pub source_start: usize,
    pub source_end: usize,
    pub saved_path: Option<PathBuf>,
}

fn fence_len(line: &str) -> usize {
    line.chars().take_while(|&c| c == '`').count()
}

/// Every ``` fenced block becomes one test, in order. A closing fence is a
/// line of at least as many backticks and nothing else, so an inner fence
/// with an info string is content. An unterminated block runs to the end.
/// Blocks with only whitespace are skipped.
pub fn extract_tests(raw_response: &str, requirement_id: &str) -> Result<Vec<GeneratedTest>> {
    struct Open {
        fence: usize,
        info: String,
        start: usize,
        end: usize,
    }
    let mut blocks: Vec<(String, usize, usize)> = Vec::new();
    let mut open: Option<Open> = None;
    let mut pos = 0;
    for line in raw_response.split_inclusive('\n') {
        let line_chars = line.chars().count();
        let body = line.trim_end_matches(['\n', '\r']);
        let stripped = body.trim_start_matches(' ');
        let indent = body.len() - stripped.len();
        let ticks = fence_len(stripped);
        match &mut open {
            None => {
                if indent <= 3 && ticks >= 3 && !stripped[ticks..].contains('`') {
                    open = Some(Open {
                        fence: ticks,
                        info: stripped[ticks..].trim().to_string(),
                        start: pos + line_chars,
                        end: pos + line_chars,
                    });
                }
            }
            Some(o) => {
                if indent <= 3 && ticks >= o.fence && stripped[ticks..].trim().is_empty() {
                    blocks.push((std::mem::take(&mut o.info), o.start, o.end));
                    open = None;
                } else {
                    o.end = pos + line_chars;
                }
            }
        }
        pos += line_chars;
    }
    if let Some(o) = open {
        blocks.push((o.info, o.start, pos));
    }

    let chars: Vec<char> = raw_response.chars().collect();
    let tests: Vec<GeneratedTest> = blocks
        .into_iter()
        .filter_map(|(info, start, end)| {
            let code: String = chars[start..end].iter().collect();
            (!code.trim().is_empty()).then_some((info, start, end, code))
        })
        .enumerate()
        .map(|(i, (info, start, end, code))| GeneratedTest {
            test_id: format!("{requirement_id}_{}", i + 1),
            requirement_id: requirement_id.to_string(),
            ordinal: i + 1,
            info,
            code,
            source_start: start,
            source_end: end,
            saved_path: None,
        })
        .collect();
    if tests.is_empty() {
        return Err(Error::NoCodeBlock);
    }
    Ok(tests)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_blocks() {
        let raw = "Intro\n```python\ndef test_a():\n    pass\n```\ntext\n```\nx = 1\n```\n";
        let t = extract_tests(raw, "REQ-1").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].ordinal, t[1].ordinal), (1, 2));
        assert_eq!(t[0].info, "python");
        assert_eq!(t[0].code, "def test_a():\n    pass\n");
        assert_eq!(t[1].info, "");
        assert_eq!(t[1].code, "x = 1\n");
        assert_eq!(t[0].test_id, "REQ-1_1");
        let chars: Vec<char> = raw.chars().collect();
        let span: String = chars[t[1].source_start..t[1].source_end].iter().collect();
        assert_eq!(span, t[1].code);
    }

    #[test]
    fn prose_only() {
        assert!(matches!(extract_tests("no code here", "R"), Err(Error::NoCodeBlock)));
        assert!(matches!(extract_tests("```\n\n```\n", "R"), Err(Error::NoCodeBlock)));
    }

    #[test]
    fn nested_and_unterminated() {
        // The inner fence carries an info string, so it cannot close the
        // outer block; the outer block is never closed.
        let raw = "Here:\n```python\ndef test_x():\n    doc = \"\"\"\n```c\nint a;\n    \"\"\"\n    assert doc";
        let t = extract_tests(raw, "REQ-9").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(
            t[0].code,
            "def test_x():\n    doc = \"\"\"\n```c\nint a;\n    \"\"\"\n    assert doc"
        );
        assert_eq!(t[0].source_end, raw.chars().count());
    }

    #[test]
    fn longer_fence_needs_longer_close() {
        let raw = "````md\n```\ninner\n```\n````\n";
        let t = extract_tests(raw, "R").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].code, "```\ninner\n```\n");
    }

    #[test]
    fn crlf_and_unicode_offsets() {
        let raw = "é\r\n```py\r\nα = 1\r\n```\r\n";
        let t = extract_tests(raw, "R").unwrap();
        assert_eq!(t[0].info, "py");
        assert_eq!(t[0].code, "α = 1\r\n");
        assert_eq!(t[0].source_start, 10);
    }
}
