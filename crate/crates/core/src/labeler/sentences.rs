//! Sentence segmentation for report text.
//!
//! Boundaries fall after `.`, `!` or `?` followed by whitespace (or end of
//! text) and at every line break. Enumeration markers such as `1.` or `2)`
//! stay attached to their item: a marker opening a sentence, or following a
//! colon, starts a new sentence and its period is not a boundary. Sentences
//! are trimmed, so the text between consecutive sentences is whitespace only.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Sentence<'a> {
    pub index: usize,
    /// Byte offset of the sentence within the report text.
    pub start: usize,
    pub text: &'a str,
}

impl Sentence<'_> {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }
}

pub fn segment_sentences(text: &str) -> Vec<Sentence<'_>> {
    let bytes = text.as_bytes();
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            cuts.push((start, i));
            start = i + 1;
            i += 1;
            continue;
        }
        if let Some(marker_len) = enumeration_marker_at(text, start, i) {
            // The marker begins a new item: close whatever came before it.
            if !text[start..i].trim().is_empty() {
                cuts.push((start, i));
                start = i;
            }
            i += marker_len;
            continue;
        }
        if matches!(b, b'.' | b'!' | b'?') {
            let next = bytes.get(i + 1).copied();
            if next.is_none() || next.is_some_and(|n| n.is_ascii_whitespace()) {
                cuts.push((start, i + 1));
                start = i + 1;
            }
        }
        i += 1;
    }
    cuts.push((start, bytes.len()));

    let mut sentences = Vec::new();
    for (s, e) in cuts {
        let raw = &text[s..e];
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = raw.len() - raw.trim_start().len();
        sentences.push(Sentence {
            index: sentences.len(),
            start: s + lead,
            text: trimmed,
        });
    }
    sentences
}

/// Length of an enumeration marker (`12.` or `3)`) starting at `i`, if the
/// marker is in item position: at the start of the current sentence or
/// right after a colon, and followed by whitespace.
fn enumeration_marker_at(text: &str, sentence_start: usize, i: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    if !bytes[i].is_ascii_digit() {
        return None;
    }
    if i > 0 && !bytes[i - 1].is_ascii_whitespace() {
        return None;
    }
    let before = text[sentence_start..i].trim_end();
    if !(before.is_empty() || before.ends_with(':')) {
        return None;
    }
    let digits = bytes[i..].iter().take_while(|b| b.is_ascii_digit()).count();
    if digits > 2 {
        return None;
    }
    let punct = *bytes.get(i + digits)?;
    if punct != b'.' && punct != b')' {
        return None;
    }
    match bytes.get(i + digits + 1) {
        Some(b) if b.is_ascii_whitespace() => Some(digits + 1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<&str> {
        segment_sentences(s).into_iter().map(|s| s.text).collect()
    }

    #[test]
    fn empty_text() {
        assert!(segment_sentences("").is_empty());
    }

    #[test]
    fn period_splitting() {
        assert_eq!(
            texts("No pneumothorax. Heart size normal."),
            vec!["No pneumothorax.", "Heart size normal."]
        );
    }

    #[test]
    fn enumeration_stays_with_item() {
        assert_eq!(
            texts("Impression: 1. Pneumonia. 2. Effusion."),
            vec!["Impression:", "1. Pneumonia.", "2. Effusion."]
        );
    }

    #[test]
    fn offsets_point_into_text() {
        let text = "  A.  B.\nC";
        for s in segment_sentences(text) {
            assert_eq!(&text[s.start..s.end()], s.text);
        }
    }

    proptest! {
        #[test]
        fn gaps_are_whitespace_and_offsets_increase(
            text in "[a-zA-Z0-9 .!?:)\n\t]{0,80}"
        ) {
            let sentences = segment_sentences(&text);
            let mut cursor = 0usize;
            for (k, s) in sentences.iter().enumerate() {
                prop_assert_eq!(s.index, k);
                prop_assert!(s.start >= cursor);
                prop_assert!(text[cursor..s.start].trim().is_empty());
                prop_assert_eq!(&text[s.start..s.end()], s.text);
                prop_assert!(!s.text.is_empty());
                cursor = s.end();
            }
            prop_assert!(text[cursor..].trim().is_empty());
        }
    }
}
