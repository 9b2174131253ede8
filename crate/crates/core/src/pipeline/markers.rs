//! Self-reflection marker statistics.
//!
//! Counts case-insensitive, word-boundary occurrences of marker words over a
//! corpus of reasoning texts. A word boundary means the neighbors are not
//! alphanumeric, so "Check" does not match inside "checked" but does match in
//! "Check," or at line edges.

use std::collections::BTreeMap;

/// The default marker list.
pub const DEFAULT_MARKERS: [&str; 5] = ["Wait", "Hmm", "Mistake", "Alternatively", "Check"];

/// Occurrences of `marker` in `text`, case-insensitive at word boundaries.
pub fn count_marker(text: &str, marker: &str) -> usize {
    let needle = marker.as_bytes();
    let hay = text.as_bytes();
    if needle.is_empty() || needle.len() > hay.len() {
        return 0;
    }
    let mut count = 0;
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        if !text.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let end = i + needle.len();
        if text.is_char_boundary(end) && hay[i..end].eq_ignore_ascii_case(needle) {
            let before_ok = i == 0
                || text[..i]
                    .chars()
                    .next_back()
                    .is_some_and(|c| !c.is_alphanumeric());
            let after_ok = end == hay.len()
                || text[end..].chars().next().is_some_and(|c| !c.is_alphanumeric());
            if before_ok && after_ok {
                count += 1;
                i = end;
                continue;
            }
        }
        i += 1;
    }
    count
}

/// Sum marker occurrence counts over a corpus.
pub fn marker_stats<'a, I, S>(corpus: I, markers: &[S]) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = &'a str>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<String, usize> = markers
        .iter()
        .map(|m| (m.as_ref().to_string(), 0))
        .collect();
    for doc in corpus {
        for marker in markers {
            *counts.get_mut(marker.as_ref()).expect("initialized") +=
                count_marker(doc, marker.as_ref());
        }
    }
    counts
}
