use serde::Serialize;

use super::lexicon::{tokenize, Cue, Lexicon};
use super::sentences::Sentence;
use crate::taxonomy::{AssertionLabel, Finding};

/// A trigger-phrase occurrence inside one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mention {
    pub finding: Finding,
    pub sentence_index: usize,
    /// Byte offsets within the sentence text.
    pub span: (usize, usize),
    pub matched_phrase: String,
}

/// All non-overlapping, longest-match trigger occurrences, left to right.
pub fn detect_mentions(sentence: &Sentence<'_>, lexicon: &Lexicon) -> Vec<Mention> {
    let tokens = tokenize(sentence.text);
    let mut mentions = Vec::new();
    let mut pos = 0;
    while pos < tokens.len() {
        match lexicon.trigger_index.longest_at(&tokens, pos) {
            Some((len, finding)) => {
                let start = tokens[pos].start;
                let end = tokens[pos + len - 1].end;
                mentions.push(Mention {
                    finding,
                    sentence_index: sentence.index,
                    span: (start, end),
                    matched_phrase: sentence.text[start..end].to_string(),
                });
                pos += len;
            }
            None => pos += 1,
        }
    }
    mentions
}

/// Assertion status of a mention from the cues that precede it.
///
/// Only cues starting within `window` tokens before the mention count, and a
/// terminator word closes the scope of everything before it. The nearest
/// uncertainty cue wins over a negation cue unless the negation cue is
/// strictly closer.
pub fn classify_assertion(sentence: &str, mention: &Mention, lexicon: &Lexicon) -> AssertionLabel {
    let tokens = tokenize(sentence);
    let Some(mention_tok) = tokens.iter().position(|t| t.start >= mention.span.0) else {
        return AssertionLabel::Positive;
    };
    let preceding = &tokens[..mention_tok];

    let mut scope_start = mention_tok.saturating_sub(lexicon.window());
    let mut cues: Vec<(usize, usize, Cue)> = Vec::new();
    let mut pos = 0;
    while pos < preceding.len() {
        match lexicon.cue_index.longest_at(preceding, pos) {
            Some((len, cue)) => {
                cues.push((pos, pos + len, cue));
                pos += len;
            }
            None => pos += 1,
        }
    }
    for &(_, end, cue) in &cues {
        if cue == Cue::Terminator {
            scope_start = scope_start.max(end);
        }
    }

    let nearest = |kind: Cue| {
        cues.iter()
            .filter(|(start, _, cue)| *cue == kind && *start >= scope_start)
            .map(|(_, end, _)| mention_tok - end)
            .min()
    };
    match (nearest(Cue::Negation), nearest(Cue::Uncertainty)) {
        (neg, Some(unc)) if neg.is_none_or(|n| unc <= n) => AssertionLabel::Uncertain,
        (Some(_), _) => AssertionLabel::Negative,
        _ => AssertionLabel::Positive,
    }
}
