//! Primary-outcome table from a study export.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use cxrkit_core::evaluation::{Instrument, Provenance};
use cxrkit_core::stats::{
    paired_t, percent_reduction, preference_majority, render_percent, summarize, KendallW,
    PairedSample, Summary,
};
use cxrkit_study::export::OpenedAllocations;
use cxrkit_study::{ExportRow, StudyExport, StudyId};
use serde::Serialize;

use crate::error::CliError;
use crate::input::{read_json, resolve_input};

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    /// Study export JSON, bare or inside a cxrkit output document.
    #[arg(long)]
    pub export: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Votes needed for a case to count as won by one report.
    #[arg(long, default_value_t = 3)]
    pub threshold: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl StatsArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.export = resolve_input(&self.export)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Invalid(format!(
                "--alpha {} not in (0, 1)",
                self.alpha
            )));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeRow {
    pub measure: &'static str,
    pub n: usize,
    pub standard_care: Summary,
    pub ai_assisted: Summary,
    /// Direction of `mean_diff`.
    pub difference: &'static str,
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t: Option<f64>,
    pub df: usize,
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceRow {
    pub cases: usize,
    pub raters: usize,
    pub threshold: usize,
    pub ai_assisted: f64,
    pub standard_care: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityRates {
    pub standard_care: f64,
    pub ai_assisted: f64,
    pub ai_draft: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeTable {
    pub study_id: StudyId,
    pub cases: usize,
    pub alpha: f64,
    pub test: &'static str,
    pub multiplicity_correction: &'static str,
    pub rows: Vec<OutcomeRow>,
    pub preference: Option<PreferenceRow>,
    pub pneumonia_positive: PositivityRates,
    pub interrater: BTreeMap<Instrument, KendallW>,
    pub allocation: OpenedAllocations,
}

const AI_MINUS_SC: &str = "ai-assisted minus standard-care";
const SC_MINUS_AI: &str = "standard-care minus ai-assisted";

fn outcome(
    measure: &'static str,
    pairs: &[(f64, f64)],
    alpha: f64,
    lower_is_better: bool,
) -> Result<OutcomeRow, CliError> {
    let (sc, ai): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let sample = if lower_is_better {
        PairedSample::new("standard-care", sc.clone(), "ai-assisted", ai.clone())?
    } else {
        PairedSample::new("ai-assisted", ai.clone(), "standard-care", sc.clone())?
    };
    let t = paired_t(&sample, alpha)?;
    let sc_summary = summarize(&sc)?;
    let ai_summary = summarize(&ai)?;
    Ok(OutcomeRow {
        measure,
        n: pairs.len(),
        percent_reduction: if lower_is_better {
            Some(percent_reduction(sc_summary.mean, ai_summary.mean)?)
        } else {
            None
        },
        standard_care: sc_summary,
        ai_assisted: ai_summary,
        difference: if lower_is_better {
            SC_MINUS_AI
        } else {
            AI_MINUS_SC
        },
        mean_diff: t.mean_diff,
        ci_low: t.ci_low,
        ci_high: t.ci_high,
        t: t.t,
        df: t.df,
        p: t.p,
    })
}

fn score_pairs(
    rows: &[ExportRow],
    pick: impl Fn(&ExportRow) -> &BTreeMap<Provenance, f64>,
) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| {
            let m = pick(r);
            Some((
                *m.get(&Provenance::StandardCare)?,
                *m.get(&Provenance::AiAssisted)?,
            ))
        })
        .collect()
}

fn rate(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut n, mut k) = (0usize, 0usize);
    for f in flags {
        n += 1;
        k += usize::from(f);
    }
    (n > 0).then(|| k as f64 / n as f64)
}

pub fn outcomes(
    export: &StudyExport,
    alpha: f64,
    threshold: usize,
) -> Result<OutcomeTable, CliError> {
    let rows = &export.rows;
    if rows.len() < 2 {
        return Err(CliError::Invalid(format!(
            "export has {} case(s); paired tests need at least 2",
            rows.len()
        )));
    }
    let mut out = Vec::new();
    for (measure, pairs) in [
        ("Report quality score", score_pairs(rows, |r| &r.quality)),
        ("Agreement score", score_pairs(rows, |r| &r.agreement)),
    ] {
        if pairs.len() >= 2 {
            out.push(outcome(measure, &pairs, alpha, false)?);
        }
    }
    let times: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.standard_care.reading_time_s, r.ai_assisted.reading_time_s))
        .collect();
    out.push(outcome("Reading time (s)", &times, alpha, true)?);

    let votes: Vec<Vec<Option<Provenance>>> = rows
        .iter()
        .filter(|r| !r.preference_votes.is_empty())
        .map(|r| {
            r.preference_votes
                .iter()
                .flat_map(|(p, n)| std::iter::repeat_n(Some(*p), *n))
                .collect()
        })
        .collect();
    let preference = if votes.is_empty() {
        None
    } else {
        let outcome = preference_majority(&votes, threshold)?;
        let share = |p| {
            outcome
                .proportion_preferring_each
                .get(&p)
                .copied()
                .unwrap_or(0.0)
        };
        Some(PreferenceRow {
            cases: votes.len(),
            raters: votes[0].len(),
            threshold,
            ai_assisted: share(Provenance::AiAssisted),
            standard_care: share(Provenance::StandardCare),
        })
    };

    Ok(OutcomeTable {
        study_id: export.study_id.clone(),
        cases: rows.len(),
        alpha,
        test: "paired t",
        multiplicity_correction: "none",
        rows: out,
        preference,
        pneumonia_positive: PositivityRates {
            standard_care: rate(rows.iter().map(|r| r.standard_care.pneumonia_positive))
                .unwrap_or(0.0),
            ai_assisted: rate(rows.iter().map(|r| r.ai_assisted.pneumonia_positive)).unwrap_or(0.0),
            ai_draft: rate(rows.iter().filter_map(|r| r.draft_pneumonia_positive)),
        },
        interrater: export.interrater.clone(),
        allocation: export.allocation,
    })
}

/// Reads an export written by the API or by `simulate`.
pub fn read_export(path: &std::path::Path) -> Result<StudyExport, CliError> {
    let mut value: serde_json::Value = read_json(path)?;
    if let Some(inner) = value.get_mut("result") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn render_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 0.001 => "<0.001".into(),
        Some(p) => format!("{p:.3}"),
        None => "n/a".into(),
    }
}

fn mean_sd(s: &Summary, decimals: usize) -> String {
    format!("{:.*}±{:.*}", decimals, s.mean, decimals, s.sd)
}

pub fn render_outcome_table(t: &OutcomeTable) -> String {
    let mut out = format!(
        "study {}  n = {}  {} ({}% CI)\n\n{:<22}{:>16}{:>16}{:>9}{:>20}{:>9}\n",
        t.study_id,
        t.cases,
        t.test,
        100.0 * (1.0 - t.alpha),
        "outcome",
        "standard care",
        "ai-assisted",
        "diff",
        "CI",
        "P"
    );
    for r in &t.rows {
        let d = if r.percent_reduction.is_some() { 1 } else { 2 };
        let ci_d = d + 1;
        out.push_str(&format!(
            "{:<22}{:>16}{:>16}{:>9.*}{:>20}{:>9}",
            r.measure,
            mean_sd(&r.standard_care, d),
            mean_sd(&r.ai_assisted, d),
            d,
            r.mean_diff,
            format!("{:.*} to {:.*}", ci_d, r.ci_low, ci_d, r.ci_high),
            render_p(r.p)
        ));
        if let Some(pr) = r.percent_reduction {
            out.push_str(&format!("  ({} reduction)", render_percent(pr)));
        }
        out.push('\n');
    }
    if let Some(p) = &t.preference {
        out.push_str(&format!(
            "\npreferred by >= {} of {} raters: ai-assisted {}, standard care {} ({} cases)\n",
            p.threshold,
            p.raters,
            render_percent(100.0 * p.ai_assisted),
            render_percent(100.0 * p.standard_care),
            p.cases
        ));
    }
    let pp = &t.pneumonia_positive;
    out.push_str(&format!(
        "pneumonia positive: ai-assisted {}, standard care {}",
        render_percent(100.0 * pp.ai_assisted),
        render_percent(100.0 * pp.standard_care)
    ));
    if let Some(d) = pp.ai_draft {
        out.push_str(&format!(", ai draft {}", render_percent(100.0 * d)));
    }
    out.push('\n');
    for (inst, w) in &t.interrater {
        out.push_str(&format!(
            "Kendall's W {inst}: {:.3} (p {})\n",
            w.w,
            render_p(Some(w.p))
        ));
    }
    out
}
