//! Rule-based report labeler.
//!
//! Text is split into sentences, trigger phrases are matched per sentence and
//! each mention gets an assertion label from the cues preceding it. Labels
//! are aggregated per finding with precedence
//! `positive > uncertain > negative > not-mentioned`, and "No Finding" is
//! derived: positive iff no pathology finding ends up positive or uncertain.

mod lexicon;
mod mentions;
mod sentences;

pub use lexicon::{Lexicon, LexiconError, DEFAULT_WINDOW};
pub use mentions::{classify_assertion, detect_mentions, Mention};
pub use sentences::{segment_sentences, Sentence};

use crate::taxonomy::{AssertionLabel, Finding, LabelVector};

pub fn label_report(text: &str, lexicon: &Lexicon) -> LabelVector {
    let mut labels = LabelVector::not_mentioned();
    for sentence in segment_sentences(text) {
        for mention in detect_mentions(&sentence, lexicon) {
            if mention.finding == Finding::NoFinding {
                continue;
            }
            let label = classify_assertion(sentence.text, &mention, lexicon);
            if label > labels.get(mention.finding) {
                labels.set(mention.finding, label);
            }
        }
    }
    let abnormal = Finding::ALL.iter().any(|f| {
        f.is_pathology()
            && matches!(
                labels.get(*f),
                AssertionLabel::Positive | AssertionLabel::Uncertain
            )
    });
    if !abnormal {
        labels.set(Finding::NoFinding, AssertionLabel::Positive);
    }
    labels
}

/// A lexicon bound to the labeling routine; reports which lexicon version
/// produced each output.
#[derive(Debug, Clone)]
pub struct Labeler {
    lexicon: Lexicon,
}

impl Labeler {
    pub fn new(lexicon: Lexicon) -> Self {
        Labeler { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn lexicon_version(&self) -> &str {
        self.lexicon.version()
    }

    pub fn label(&self, text: &str) -> LabelVector {
        label_report(text, &self.lexicon)
    }

    pub fn label_batch<'a, I>(&self, texts: I) -> Vec<LabelVector>
    where
        I: IntoIterator<Item = &'a str>,
    {
        texts.into_iter().map(|t| self.label(t)).collect()
    }
}

impl Default for Labeler {
    fn default() -> Self {
        Labeler::new(Lexicon::builtin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vacuous_report() {
        let v = Labeler::default().label("");
        for (f, l) in v.iter() {
            let expected = if f == Finding::NoFinding {
                AssertionLabel::Positive
            } else {
                AssertionLabel::NotMentioned
            };
            assert_eq!(l, expected, "{f}");
        }
    }

    #[test]
    fn positive_takes_precedence() {
        let v = Labeler::default().label("Pleural effusion. No pleural effusion elsewhere.");
        assert_eq!(v.get(Finding::PleuralEffusion), AssertionLabel::Positive);
        assert_eq!(v.get(Finding::NoFinding), AssertionLabel::NotMentioned);
    }

    #[test]
    fn support_devices_leave_no_finding_positive() {
        let v = Labeler::default().label("Endotracheal tube in place. No pneumothorax.");
        assert_eq!(v.get(Finding::SupportDevices), AssertionLabel::Positive);
        assert_eq!(v.get(Finding::NoFinding), AssertionLabel::Positive);
        assert!(v.validate().is_ok());
    }

    const WORDS: &[&str] = &[
        "no",
        "possible",
        "pleural",
        "effusion",
        "pneumothorax",
        "but",
        "small",
        "right",
        "left",
        "edema",
        "may",
        "represent",
        "atelectasis",
        "without",
        "evidence",
        "of",
        "cardiomegaly",
        "tube",
        "endotracheal",
        "consolidation",
        "likely",
        "mass",
        "the",
        "opacity",
        "fracture",
        "clear",
        "lungs",
        "1.",
        "2)",
        "Impression:",
    ];

    fn report_text() -> impl Strategy<Value = String> {
        let word = prop::sample::select(WORDS.to_vec());
        let sep = prop::sample::select(vec![" ", " ", " ", ". ", ", ", "\n", "; "]);
        prop::collection::vec((word, sep), 0..40).prop_map(|parts| {
            parts
                .into_iter()
                .map(|(w, s)| format!("{w}{s}"))
                .collect::<String>()
        })
    }

    fn mixed_case(s: &str, mask: u64) -> String {
        s.chars()
            .enumerate()
            .map(|(i, c)| {
                if mask >> (i % 64) & 1 == 1 {
                    c.to_ascii_uppercase()
                } else {
                    c
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn deterministic(text in report_text()) {
            let labeler = Labeler::default();
            prop_assert_eq!(labeler.label(&text), labeler.label(&text));
            prop_assert_eq!(labeler.label(&text), Labeler::default().label(&text));
        }

        #[test]
        fn case_invariant(text in report_text(), mask in any::<u64>()) {
            let labeler = Labeler::default();
            let base = labeler.label(&text);
            prop_assert_eq!(base, labeler.label(&text.to_uppercase()));
            prop_assert_eq!(base, labeler.label(&mixed_case(&text, mask)));
        }

        #[test]
        fn output_always_valid(text in report_text()) {
            prop_assert!(Labeler::default().label(&text).validate().is_ok());
        }

        #[test]
        fn positive_assertion_is_sticky(
            text in report_text(),
            idx in 0usize..14,
        ) {
            let finding = Finding::ALL[idx];
            prop_assume!(finding != Finding::NoFinding);
            let labeler = Labeler::default();
            let trigger = labeler.lexicon().triggers(finding)[0].clone();
            let with_positive = format!("{text}\n{trigger}.");
            prop_assert_eq!(labeler.label(&with_positive).get(finding), AssertionLabel::Positive);
            let appended = format!("{with_positive}\n{text}");
            prop_assert_eq!(labeler.label(&appended).get(finding), AssertionLabel::Positive);
        }
    }
}
