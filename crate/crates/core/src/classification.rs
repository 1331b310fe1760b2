//! Finding-level classification metrics over label vectors and scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{AssertionLabel, Finding, LabelVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {pred} predictions vs {reference} references")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("empty finding subset")]
    EmptySubset,
    #[error("no reports to score")]
    NoReports,
    #[error("AUC undefined: only one class present")]
    SingleClass,
    #[error("score {0} is not a finite number")]
    NonFiniteScore(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertainMapsTo {
    #[default]
    Positive,
    Negative,
}

/// How assertion labels collapse to binary. Not-mentioned is always negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PositivePolicy {
    pub uncertain_maps_to: UncertainMapsTo,
}

impl PositivePolicy {
    pub const UNCERTAIN_POSITIVE: Self = PositivePolicy {
        uncertain_maps_to: UncertainMapsTo::Positive,
    };
    pub const UNCERTAIN_NEGATIVE: Self = PositivePolicy {
        uncertain_maps_to: UncertainMapsTo::Negative,
    };

    pub fn is_positive(&self, label: AssertionLabel) -> bool {
        match label {
            AssertionLabel::Positive => true,
            AssertionLabel::Uncertain => self.uncertain_maps_to == UncertainMapsTo::Positive,
            AssertionLabel::Negative | AssertionLabel::NotMentioned => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// False when the finding never appears in either predictions or
    /// references; such findings carry no F1 information.
    pub fn has_support(&self) -> bool {
        self.tp + self.fn_ > 0 || self.tp + self.fp > 0
    }

    /// 2tp / (2tp + fp + fn); `None` without support.
    pub fn f1(&self) -> Option<f64> {
        if !self.has_support() {
            return None;
        }
        Some(2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64)
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn check_lengths(pred: usize, reference: usize) -> Result<(), MetricError> {
    if pred != reference {
        return Err(MetricError::LengthMismatch { pred, reference });
    }
    Ok(())
}

pub fn confusion_counts(
    pred: &[LabelVector],
    reference: &[LabelVector],
    finding: Finding,
    policy: PositivePolicy,
) -> Result<ConfusionCounts, MetricError> {
    check_lengths(pred.len(), reference.len())?;
    let mut c = ConfusionCounts::default();
    for (p, r) in pred.iter().zip(reference) {
        c.add(
            policy.is_positive(p.get(finding)),
            policy.is_positive(r.get(finding)),
        );
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub policy: PositivePolicy,
    pub subset: Vec<Finding>,
    /// `None` when no finding in the subset has support.
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_finding_f1: BTreeMap<Finding, f64>,
    pub excluded_findings: Vec<Finding>,
    pub counts: BTreeMap<Finding, ConfusionCounts>,
}

pub fn f1_scores(
    pred: &[LabelVector],
    reference: &[LabelVector],
    subset: &[Finding],
    policy: PositivePolicy,
) -> Result<F1Report, MetricError> {
    if subset.is_empty() {
        return Err(MetricError::EmptySubset);
    }
    check_lengths(pred.len(), reference.len())?;
    let mut pooled = ConfusionCounts::default();
    let mut per_finding_f1 = BTreeMap::new();
    let mut excluded_findings = Vec::new();
    let mut counts = BTreeMap::new();
    for &f in subset {
        let c = confusion_counts(pred, reference, f, policy)?;
        pooled = pooled + c;
        counts.insert(f, c);
        match c.f1() {
            Some(v) => {
                per_finding_f1.insert(f, v);
            }
            None => excluded_findings.push(f),
        }
    }
    let macro_f1 = if per_finding_f1.is_empty() {
        None
    } else {
        Some(per_finding_f1.values().sum::<f64>() / per_finding_f1.len() as f64)
    };
    Ok(F1Report {
        policy,
        subset: subset.to_vec(),
        micro_f1: pooled.f1(),
        macro_f1,
        per_finding_f1,
        excluded_findings,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kappa {
    Value {
        kappa: f64,
        po: f64,
        pe: f64,
    },
    /// Expected agreement is 1, so kappa is undefined.
    Degenerate {
        po: f64,
    },
}

impl Kappa {
    pub fn value(&self) -> Option<f64> {
        match self {
            Kappa::Value { kappa, .. } => Some(*kappa),
            Kappa::Degenerate { .. } => None,
        }
    }
}

pub fn kappa_from_counts(c: &ConfusionCounts) -> Result<Kappa, MetricError> {
    let n = c.total();
    if n == 0 {
        return Err(MetricError::NoReports);
    }
    let n = n as f64;
    let po = (c.tp + c.tn) as f64 / n;
    let pred_pos = (c.tp + c.fp) as f64 / n;
    let ref_pos = (c.tp + c.fn_) as f64 / n;
    let pe = pred_pos * ref_pos + (1.0 - pred_pos) * (1.0 - ref_pos);
    // pe == 1 exactly when both marginals are constant and equal, which the
    // integer counts decide without floating-point comparison.
    let both_constant = (c.fp + c.fn_ == 0) && (c.tp == 0 || c.tn == 0);
    if both_constant {
        return Ok(Kappa::Degenerate { po });
    }
    Ok(Kappa::Value {
        kappa: (po - pe) / (1.0 - pe),
        po,
        pe,
    })
}

pub fn cohens_kappa(
    pred: &[LabelVector],
    reference: &[LabelVector],
    finding: Finding,
    policy: PositivePolicy,
) -> Result<Kappa, MetricError> {
    let c = confusion_counts(pred, reference, finding, policy)?;
    kappa_from_counts(&c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub auc: f64,
    /// Area under `curve` by the trapezoid rule.
    pub trapezoid_auc: f64,
    /// (fpr, tpr) from (0,0) to (1,1), one point per distinct threshold.
    pub curve: Vec<(f64, f64)>,
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore(bad));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Mann-Whitney: sum of mid-ranks of positives.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let auc = (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    // Sweep thresholds from high to low; tied scores move together.
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let s = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == s {
            if labels[order[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        curve.push((fp as f64 / nn, tp as f64 / np));
    }
    let trapezoid_auc = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    Ok(RocCurve {
        auc,
        trapezoid_auc,
        curve,
    })
}
