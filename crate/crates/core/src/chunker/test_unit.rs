use std::collections::BTreeSet;

use regex::Regex;

use super::{Chunk, Strategy};
use crate::corpus::Document;

/// Splits a test file at lines matching `boundary`. Decorator lines (`@...`)
/// directly above a boundary move with it. Material before the first
/// boundary becomes a preamble chunk. Spans are trimmed of surrounding
/// whitespace.
pub fn chunk_test_units(doc: &Document, boundary: &Regex) -> Vec<Chunk> {
    let chars: Vec<char> = doc.text.chars().collect();
    if chars.iter().all(|c| c.is_whitespace()) {
        return Vec::new();
    }

    // (char offset of line start, line text)
    let mut lines: Vec<(usize, String)> = Vec::new();
    let mut offset = 0;
    for line in doc.text.split_inclusive('\n') {
        let n = line.chars().count();
        lines.push((offset, line.trim_end_matches('\n').to_string()));
        offset += n;
    }

    let mut boundaries: Vec<usize> = Vec::new();
    for (idx, (_, text)) in lines.iter().enumerate() {
        if boundary.is_match(text) {
            let floor = boundaries.last().map_or(0, |&b| b + 1);
            let mut start = idx;
            while start > floor && lines[start - 1].1.trim_start().starts_with('@') && !lines[start - 1].1.starts_with(char::is_whitespace) {
                start -= 1;
            }
            boundaries.push(start);
        }
    }

    if boundaries.is_empty() {
        log::warn!("no test boundaries found in {}; keeping it as one chunk", doc.id);
        return vec![Chunk::from_span(
            doc,
            &chars,
            0,
            chars.len(),
            Strategy::TestUnit,
            BTreeSet::new(),
        )];
    }

    let mut cuts: Vec<usize> = boundaries.iter().map(|&b| lines[b].0).collect();
    if cuts[0] != 0 {
        cuts.insert(0, 0);
    }
    cuts.push(chars.len());

    cuts.windows(2)
        .filter_map(|w| {
            let (mut s, mut e) = (w[0], w[1]);
            while s < e && chars[s].is_whitespace() {
                s += 1;
            }
            while e > s && chars[e - 1].is_whitespace() {
                e -= 1;
            }
            (s < e).then(|| Chunk::from_span(doc, &chars, s, e, Strategy::TestUnit, BTreeSet::new()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::DEFAULT_TEST_BOUNDARY;
    use crate::corpus::Role;

    fn doc(text: &str) -> Document {
        Document::new("tests/test_valve.py", Role::LegacyTest, text)
    }

    fn re() -> Regex {
        Regex::new(DEFAULT_TEST_BOUNDARY).unwrap()
    }

    const THREE_TESTS: &str = "\
import pytest
from hil import valve


def test_open():
    assert valve.open(1)


def test_close():
    assert valve.close(1)

async def test_async():
    await valve.ping()
";

    #[test]
    fn preamble_plus_units() {
        let chunks = chunk_test_units(&doc(THREE_TESTS), &re());
        assert_eq!(chunks.len(), 4);
        assert!(chunks[0].text.starts_with("import pytest"));
        assert!(chunks[1].text.starts_with("def test_open"));
        assert!(chunks[3].text.starts_with("async def test_async"));
        assert!(chunks[3].text.ends_with("ping()"));
    }

    #[test]
    fn no_boundaries_single_chunk() {
        let text = "import os\nprint('hi')\n";
        let chunks = chunk_test_units(&doc(text), &re());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, text);
    }

    #[test]
    fn nested_helpers_stay_in_their_unit() {
        let text = "\
def test_ramp():
    def helper(x):
        return x * 2
    assert helper(2) == 4

def test_hold():
    def test_inner_not_a_boundary():
        pass
    assert True
";
        let chunks = chunk_test_units(&doc(text), &re());
        assert_eq!(chunks.len(), 2);
        assert!(chunks[0].text.contains("def helper"));
        assert!(chunks[0].text.ends_with("assert helper(2) == 4"));
        assert!(chunks[1].text.contains("test_inner_not_a_boundary"));
    }

    #[test]
    fn decorators_move_with_boundary() {
        let text = "import pytest\n\n@pytest.mark.slow\n@pytest.mark.hw\ndef test_a():\n    pass\n";
        let chunks = chunk_test_units(&doc(text), &re());
        assert_eq!(chunks.len(), 2);
        assert!(chunks[1].text.starts_with("@pytest.mark.slow"));
    }

    #[test]
    fn boundary_on_first_line_no_preamble() {
        let chunks = chunk_test_units(&doc("def test_a():\n    pass\n"), &re());
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].start, 0);
    }
}
