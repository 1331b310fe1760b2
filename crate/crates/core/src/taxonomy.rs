//! The 14-finding chest radiograph taxonomy and per-report label vectors.
//!
//! Findings follow the CheXpert label set. The two "top 5" subsets are the
//! most common findings in the MIMIC-CXR test split and in the CXR-27
//! retrospective test split respectively.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CoreError;

/// One of the 14 radiographic finding categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Finding {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    EnlargedCardiomediastinum,
    Fracture,
    LungLesion,
    LungOpacity,
    NoFinding,
    PleuralEffusion,
    PleuralOther,
    Pneumonia,
    Pneumothorax,
    SupportDevices,
}

pub const FINDING_COUNT: usize = 14;

impl Finding {
    /// Canonical order; also the index order of [`LabelVector`].
    pub const ALL: [Finding; FINDING_COUNT] = [
        Finding::Atelectasis,
        Finding::Cardiomegaly,
        Finding::Consolidation,
        Finding::Edema,
        Finding::EnlargedCardiomediastinum,
        Finding::Fracture,
        Finding::LungLesion,
        Finding::LungOpacity,
        Finding::NoFinding,
        Finding::PleuralEffusion,
        Finding::PleuralOther,
        Finding::Pneumonia,
        Finding::Pneumothorax,
        Finding::SupportDevices,
    ];

    pub const TOP5_MIMIC: [Finding; 5] = [
        Finding::Atelectasis,
        Finding::Cardiomegaly,
        Finding::Edema,
        Finding::Consolidation,
        Finding::PleuralEffusion,
    ];

    pub const TOP5_CXR27: [Finding; 5] = [
        Finding::SupportDevices,
        Finding::PleuralEffusion,
        Finding::LungOpacity,
        Finding::Pneumonia,
        Finding::LungLesion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Finding::Atelectasis => "Atelectasis",
            Finding::Cardiomegaly => "Cardiomegaly",
            Finding::Consolidation => "Consolidation",
            Finding::Edema => "Edema",
            Finding::EnlargedCardiomediastinum => "Enlarged Cardiomediastinum",
            Finding::Fracture => "Fracture",
            Finding::LungLesion => "Lung Lesion",
            Finding::LungOpacity => "Lung Opacity",
            Finding::NoFinding => "No Finding",
            Finding::PleuralEffusion => "Pleural Effusion",
            Finding::PleuralOther => "Pleural Other",
            Finding::Pneumonia => "Pneumonia",
            Finding::Pneumothorax => "Pneumothorax",
            Finding::SupportDevices => "Support Devices",
        }
    }

    /// Findings that "No Finding" excludes: everything except itself and
    /// support devices.
    pub fn is_pathology(self) -> bool {
        !matches!(self, Finding::NoFinding | Finding::SupportDevices)
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Finding {
    type Err = CoreError;

    /// Accepts the display name in any case, with spaces, underscores or
    /// hyphens as separators.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_name(s);
        Finding::ALL
            .iter()
            .copied()
            .find(|f| normalize_name(f.name()) == key)
            .ok_or_else(|| CoreError::UnknownFinding(s.to_string()))
    }
}

fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl Serialize for Finding {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Finding {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// The finding list plus the two dataset-specific top-5 subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingTaxonomy {
    pub findings: Vec<Finding>,
    pub top5_mimic: Vec<Finding>,
    pub top5_cxr27: Vec<Finding>,
}

impl FindingTaxonomy {
    pub fn chexpert() -> Self {
        FindingTaxonomy {
            findings: Finding::ALL.to_vec(),
            top5_mimic: Finding::TOP5_MIMIC.to_vec(),
            top5_cxr27: Finding::TOP5_CXR27.to_vec(),
        }
    }

    pub fn contains(&self, finding: Finding) -> bool {
        self.findings.contains(&finding)
    }
}

impl Default for FindingTaxonomy {
    fn default() -> Self {
        Self::chexpert()
    }
}

/// Per-finding assertion status.
///
/// The derived order is the aggregation precedence:
/// `Positive > Uncertain > Negative > NotMentioned`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssertionLabel {
    NotMentioned,
    Negative,
    Uncertain,
    Positive,
}

impl AssertionLabel {
    pub const ALL: [AssertionLabel; 4] = [
        AssertionLabel::NotMentioned,
        AssertionLabel::Negative,
        AssertionLabel::Uncertain,
        AssertionLabel::Positive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AssertionLabel::NotMentioned => "not-mentioned",
            AssertionLabel::Negative => "negative",
            AssertionLabel::Uncertain => "uncertain",
            AssertionLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for AssertionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssertionLabel {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AssertionLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CoreError::UnknownLabel(s.to_string()))
    }
}

/// A single broken rule found by label validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelViolation {
    WrongLength {
        found: usize,
    },
    /// "No Finding" is positive while this pathology finding is positive.
    NoFindingConflict {
        finding: Finding,
    },
}

impl fmt::Display for LabelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelViolation::WrongLength { found } => {
                write!(f, "expected {FINDING_COUNT} labels, found {found}")
            }
            LabelViolation::NoFindingConflict { finding } => {
                write!(f, "No Finding is positive but {finding} is also positive")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LabelValidation {
    pub violations: Vec<LabelViolation>,
}

impl LabelValidation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validates labels given in canonical finding order.
pub fn validate_labels(labels: &[AssertionLabel]) -> LabelValidation {
    if labels.len() != FINDING_COUNT {
        return LabelValidation {
            violations: vec![LabelViolation::WrongLength {
                found: labels.len(),
            }],
        };
    }
    let mut violations = Vec::new();
    if labels[Finding::NoFinding.index()] == AssertionLabel::Positive {
        for finding in Finding::ALL.iter().copied().filter(|f| f.is_pathology()) {
            if labels[finding.index()] == AssertionLabel::Positive {
                violations.push(LabelViolation::NoFindingConflict { finding });
            }
        }
    }
    LabelValidation { violations }
}

pub fn validate_label_vector(v: &LabelVector) -> LabelValidation {
    validate_labels(&v.0)
}

/// Assertion labels for all 14 findings, indexed by [`Finding`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelVector([AssertionLabel; FINDING_COUNT]);

impl LabelVector {
    pub fn not_mentioned() -> Self {
        LabelVector([AssertionLabel::NotMentioned; FINDING_COUNT])
    }

    pub fn from_array(labels: [AssertionLabel; FINDING_COUNT]) -> Self {
        LabelVector(labels)
    }

    /// Builds a vector from a slice in canonical order, rejecting wrong
    /// lengths and exclusivity breaches.
    pub fn try_from_slice(labels: &[AssertionLabel]) -> Result<Self, LabelValidation> {
        let validation = validate_labels(labels);
        if !validation.is_ok() {
            return Err(validation);
        }
        let mut out = [AssertionLabel::NotMentioned; FINDING_COUNT];
        out.copy_from_slice(labels);
        Ok(LabelVector(out))
    }

    pub fn get(&self, finding: Finding) -> AssertionLabel {
        self.0[finding.index()]
    }

    pub fn set(&mut self, finding: Finding, label: AssertionLabel) {
        self.0[finding.index()] = label;
    }

    pub fn with(mut self, finding: Finding, label: AssertionLabel) -> Self {
        self.set(finding, label);
        self
    }

    pub fn as_slice(&self) -> &[AssertionLabel] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Finding, AssertionLabel)> + '_ {
        Finding::ALL.iter().copied().zip(self.0.iter().copied())
    }

    pub fn validate(&self) -> LabelValidation {
        validate_labels(&self.0)
    }
}

impl Default for LabelVector {
    fn default() -> Self {
        Self::not_mentioned()
    }
}

// Serialized as an object keyed by finding name so corpus files stay
// readable; every finding must be present on input.
impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, AssertionLabel> = self.iter().map(|(f, l)| (f.name(), l)).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, AssertionLabel>::deserialize(d)?;
        let mut labels = [None; FINDING_COUNT];
        for (name, label) in raw {
            let finding: Finding = name.parse().map_err(D::Error::custom)?;
            if labels[finding.index()].replace(label).is_some() {
                return Err(D::Error::custom(format!("duplicate finding {finding}")));
            }
        }
        let mut out = [AssertionLabel::NotMentioned; FINDING_COUNT];
        for (i, slot) in labels.iter().enumerate() {
            out[i] = slot.ok_or_else(|| {
                D::Error::custom(format!("missing label for {}", Finding::ALL[i]))
            })?;
        }
        Ok(LabelVector(out))
    }
}

/// Per-finding probabilities from a classifier head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabelVector([f64; FINDING_COUNT]);

impl ScoredLabelVector {
    pub fn new(probabilities: [f64; FINDING_COUNT]) -> Result<Self, CoreError> {
        for (finding, p) in Finding::ALL.iter().zip(probabilities.iter()) {
            if !(0.0..=1.0).contains(p) {
                return Err(CoreError::ProbabilityOutOfRange {
                    finding: *finding,
                    value: *p,
                });
            }
        }
        Ok(ScoredLabelVector(probabilities))
    }

    /// Builds from (finding, probability) pairs; every finding must appear
    /// exactly once.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, CoreError>
    where
        I: IntoIterator<Item = (Finding, f64)>,
    {
        let mut slots = [None; FINDING_COUNT];
        for (finding, p) in pairs {
            if slots[finding.index()].replace(p).is_some() {
                return Err(CoreError::DuplicateFinding(finding));
            }
        }
        let mut out = [0.0; FINDING_COUNT];
        for (i, slot) in slots.iter().enumerate() {
            out[i] = slot.ok_or(CoreError::MissingFinding(Finding::ALL[i]))?;
        }
        Self::new(out)
    }

    pub fn get(&self, finding: Finding) -> f64 {
        self.0[finding.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Finding, f64)> + '_ {
        Finding::ALL.iter().copied().zip(self.0.iter().copied())
    }
}

impl Serialize for ScoredLabelVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, f64> = self.iter().map(|(f, p)| (f.name(), p)).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoredLabelVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(d)?;
        let pairs = raw
            .into_iter()
            .map(|(k, v)| k.parse::<Finding>().map(|f| (f, v)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        ScoredLabelVector::from_pairs(pairs).map_err(D::Error::custom)
    }
}
