//! Versioned rule lexicon: trigger phrases per finding plus cue lists.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::taxonomy::Finding;

const BUILTIN: &str = include_str!("../../data/default.lexicon");

pub const DEFAULT_WINDOW: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("finding {0} has no trigger phrases")]
    NoTriggers(Finding),
    #[error("cue list `{0}` is empty")]
    EmptyCues(&'static str),
    #[error("scope window must be at least 1")]
    ZeroWindow,
    #[error("lexicon has no version")]
    MissingVersion,
    #[error("phrase `{phrase}` is a trigger for both {first} and {second}")]
    AmbiguousTrigger {
        phrase: String,
        first: Finding,
        second: Finding,
    },
}

/// Splits text into lowercase alphanumeric tokens with their byte spans.
pub(crate) fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            current.get_or_insert(i);
        } else if let Some(s) = current.take() {
            tokens.push(Token::new(text, s, i));
        }
    }
    if let Some(s) = current {
        tokens.push(Token::new(text, s, text.len()));
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub norm: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    fn new(text: &str, start: usize, end: usize) -> Self {
        Token {
            norm: text[start..end].to_lowercase(),
            start,
            end,
        }
    }
}

fn phrase_tokens(phrase: &str) -> Vec<String> {
    tokenize(phrase).into_iter().map(|t| t.norm).collect()
}

/// Token-sequence dictionary keyed by first token; candidates are kept
/// longest first so the first hit is the longest match.
#[derive(Debug, Clone)]
pub(crate) struct PhraseIndex<T> {
    by_first: HashMap<String, Vec<(Vec<String>, T)>>,
}

impl<T> Default for PhraseIndex<T> {
    fn default() -> Self {
        PhraseIndex {
            by_first: HashMap::new(),
        }
    }
}

impl<T: Copy> PhraseIndex<T> {
    fn insert(&mut self, tokens: Vec<String>, value: T) {
        let entry = self.by_first.entry(tokens[0].clone()).or_default();
        entry.push((tokens, value));
        entry.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
    }

    /// Longest phrase starting at `pos`, as (token count, value).
    pub fn longest_at(&self, tokens: &[Token], pos: usize) -> Option<(usize, T)> {
        let candidates = self.by_first.get(&tokens[pos].norm)?;
        candidates.iter().find_map(|(phrase, value)| {
            let end = pos + phrase.len();
            (end <= tokens.len()
                && phrase
                    .iter()
                    .zip(&tokens[pos..end])
                    .all(|(p, t)| *p == t.norm))
            .then_some((phrase.len(), *value))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cue {
    Negation,
    Uncertainty,
    Terminator,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    version: String,
    window: usize,
    triggers: BTreeMap<Finding, Vec<String>>,
    negation: Vec<String>,
    uncertainty: Vec<String>,
    terminators: Vec<String>,
    pub(crate) trigger_index: PhraseIndex<Finding>,
    pub(crate) cue_index: PhraseIndex<Cue>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.window == other.window
            && self.triggers == other.triggers
            && self.negation == other.negation
            && self.uncertainty == other.uncertainty
            && self.terminators == other.terminators
    }
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("built-in lexicon is valid")
    }

    pub fn new(
        version: impl Into<String>,
        window: usize,
        triggers: BTreeMap<Finding, Vec<String>>,
        negation: Vec<String>,
        uncertainty: Vec<String>,
        terminators: Vec<String>,
    ) -> Result<Self, LexiconError> {
        let version = version.into();
        if version.trim().is_empty() {
            return Err(LexiconError::MissingVersion);
        }
        if window == 0 {
            return Err(LexiconError::ZeroWindow);
        }
        for finding in Finding::ALL {
            let ok = triggers
                .get(&finding)
                .is_some_and(|p| p.iter().any(|s| !phrase_tokens(s).is_empty()));
            if !ok {
                return Err(LexiconError::NoTriggers(finding));
            }
        }
        if negation.is_empty() {
            return Err(LexiconError::EmptyCues("negation"));
        }
        if uncertainty.is_empty() {
            return Err(LexiconError::EmptyCues("uncertainty"));
        }

        let mut trigger_index = PhraseIndex::default();
        let mut owner: HashMap<Vec<String>, Finding> = HashMap::new();
        for (finding, phrases) in &triggers {
            for phrase in phrases {
                let toks = phrase_tokens(phrase);
                if toks.is_empty() {
                    continue;
                }
                if let Some(prev) = owner.insert(toks.clone(), *finding) {
                    if prev != *finding {
                        return Err(LexiconError::AmbiguousTrigger {
                            phrase: phrase.clone(),
                            first: prev,
                            second: *finding,
                        });
                    }
                    continue;
                }
                trigger_index.insert(toks, *finding);
            }
        }

        let mut cue_index = PhraseIndex::default();
        // Uncertainty goes first so a phrase listed under both resolves to
        // uncertain.
        for (list, cue) in [
            (&uncertainty, Cue::Uncertainty),
            (&negation, Cue::Negation),
            (&terminators, Cue::Terminator),
        ] {
            for phrase in list {
                let toks = phrase_tokens(phrase);
                if !toks.is_empty() {
                    cue_index.insert(toks, cue);
                }
            }
        }

        Ok(Lexicon {
            version,
            window,
            triggers,
            negation,
            uncertainty,
            terminators,
            trigger_index,
            cue_index,
        })
    }

    /// Parses the sectioned text format (see `data/default.lexicon`).
    pub fn parse(src: &str) -> Result<Self, LexiconError> {
        enum Section {
            Header,
            Finding(Finding),
            Negation,
            Uncertainty,
            Terminator,
        }
        let mut version = None;
        let mut window = DEFAULT_WINDOW;
        let mut triggers: BTreeMap<Finding, Vec<String>> = BTreeMap::new();
        let mut negation = Vec::new();
        let mut uncertainty = Vec::new();
        let mut terminators = Vec::new();
        let mut section = Section::Header;

        for (idx, raw) in src.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: String| LexiconError::Syntax {
                line: line_no,
                reason,
            };
            if let Some(inner) = line.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("unterminated section header".into()))?
                    .trim();
                section = match inner {
                    "negation" => Section::Negation,
                    "uncertainty" => Section::Uncertainty,
                    "terminator" => Section::Terminator,
                    other => {
                        let name = other
                            .strip_prefix("finding ")
                            .ok_or_else(|| syntax(format!("unknown section `{other}`")))?;
                        let finding: Finding =
                            name.trim().parse().map_err(|e| syntax(format!("{e}")))?;
                        Section::Finding(finding)
                    }
                };
                continue;
            }
            match &section {
                Section::Header => {
                    let (key, value) = line
                        .split_once(':')
                        .ok_or_else(|| syntax(format!("expected `key: value`, got `{line}`")))?;
                    match key.trim() {
                        "version" => version = Some(value.trim().to_string()),
                        "window" => {
                            window = value
                                .trim()
                                .parse()
                                .map_err(|_| syntax(format!("bad window `{}`", value.trim())))?
                        }
                        other => return Err(syntax(format!("unknown header key `{other}`"))),
                    }
                }
                Section::Finding(f) => triggers.entry(*f).or_default().push(line.to_string()),
                Section::Negation => negation.push(line.to_string()),
                Section::Uncertainty => uncertainty.push(line.to_string()),
                Section::Terminator => terminators.push(line.to_string()),
            }
        }
        let version = version.ok_or(LexiconError::MissingVersion)?;
        Self::new(
            version,
            window,
            triggers,
            negation,
            uncertainty,
            terminators,
        )
    }

    /// Renders the lexicon back to its text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version: {}", self.version);
        let _ = writeln!(out, "window: {}", self.window);
        for (finding, phrases) in &self.triggers {
            let _ = writeln!(out, "\n[finding {finding}]");
            for p in phrases {
                let _ = writeln!(out, "{p}");
            }
        }
        for (name, list) in [
            ("negation", &self.negation),
            ("uncertainty", &self.uncertainty),
            ("terminator", &self.terminators),
        ] {
            if list.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n[{name}]");
            for p in list {
                let _ = writeln!(out, "{p}");
            }
        }
        out
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn with_window(&self, window: usize) -> Result<Self, LexiconError> {
        Self::new(
            self.version.clone(),
            window,
            self.triggers.clone(),
            self.negation.clone(),
            self.uncertainty.clone(),
            self.terminators.clone(),
        )
    }

    pub fn triggers(&self, finding: Finding) -> &[String] {
        self.triggers
            .get(&finding)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn negation_cues(&self) -> &[String] {
        &self.negation
    }

    pub fn uncertainty_cues(&self) -> &[String] {
        &self.uncertainty
    }

    pub fn terminators(&self) -> &[String] {
        &self.terminators
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_triggers() -> BTreeMap<Finding, Vec<String>> {
        Finding::ALL
            .iter()
            .map(|f| (*f, vec![f.name().to_lowercase()]))
            .collect()
    }

    #[test]
    fn builtin_parses_and_round_trips() {
        let lex = Lexicon::builtin();
        assert_eq!(lex.window(), DEFAULT_WINDOW);
        assert!(!lex.version().is_empty());
        let again = Lexicon::parse(&lex.to_text()).unwrap();
        assert_eq!(lex, again);
    }

    #[test]
    fn every_finding_needs_a_trigger() {
        let mut t = minimal_triggers();
        t.remove(&Finding::Fracture);
        let err = Lexicon::new("v", 6, t, vec!["no".into()], vec!["may".into()], vec![]);
        assert_eq!(
            err.unwrap_err(),
            LexiconError::NoTriggers(Finding::Fracture)
        );
    }

    #[test]
    fn cue_lists_and_window_validated() {
        let t = minimal_triggers();
        assert_eq!(
            Lexicon::new("v", 6, t.clone(), vec![], vec!["may".into()], vec![]).unwrap_err(),
            LexiconError::EmptyCues("negation")
        );
        assert_eq!(
            Lexicon::new("v", 6, t.clone(), vec!["no".into()], vec![], vec![]).unwrap_err(),
            LexiconError::EmptyCues("uncertainty")
        );
        assert_eq!(
            Lexicon::new("v", 0, t, vec!["no".into()], vec!["may".into()], vec![]).unwrap_err(),
            LexiconError::ZeroWindow
        );
    }

    #[test]
    fn ambiguous_trigger_rejected() {
        let mut t = minimal_triggers();
        t.get_mut(&Finding::Edema).unwrap().push("Pneumonia".into());
        let err = Lexicon::new("v", 6, t, vec!["no".into()], vec!["may".into()], vec![]);
        assert!(matches!(err, Err(LexiconError::AmbiguousTrigger { .. })));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = Lexicon::parse("version: x\n[finding Pneumonitis]\nfoo\n").unwrap_err();
        assert!(
            matches!(err, LexiconError::Syntax { line: 2, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn tokenizer_lowercases_and_splits_on_punctuation() {
        let toks: Vec<_> = tokenize("Left-sided PICC, tip at T4.")
            .into_iter()
            .map(|t| t.norm)
            .collect();
        assert_eq!(toks, vec!["left", "sided", "picc", "tip", "at", "t4"]);
    }
}
