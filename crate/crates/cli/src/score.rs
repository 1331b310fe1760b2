//! Metric tables for a predicted corpus against a reference corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use cxrkit_core::classification::{
    cohens_kappa, f1_scores, roc_auc, F1Report, Kappa, PositivePolicy, RocCurve,
};
use cxrkit_core::radgraph::{corpus_radgraph_f1, read_graph_file, CorpusRadGraph, ReportGraph};
use cxrkit_core::{Finding, LabelVector, Labeler, Report, ReportId, ScoredLabelVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::input::{read_corpus, read_jsonl, resolve_input};
use crate::{CorpusKind, UncertainArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    F1,
    Kappa,
    Auc,
    Radgraph,
}

/// Which top-5 finding subset F1-5 uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Top5 {
    Mimic,
    Cxr27,
}

impl Top5 {
    pub fn findings(self) -> &'static [Finding] {
        match self {
            Top5::Mimic => &Finding::TOP5_MIMIC,
            Top5::Cxr27 => &Finding::TOP5_CXR27,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    /// Predicted reports (JSONL or CSV).
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference reports, aligned with --pred by report_id.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Corpus format when the extension does not say.
    #[arg(long, value_enum)]
    pub format: Option<CorpusKind>,
    #[arg(long, value_enum, default_value = "positive")]
    pub uncertain: UncertainArg,
    #[arg(long, value_enum, default_value = "mimic")]
    pub top5: Top5,
    /// Metrics to compute; defaults to f1 and kappa plus whatever the
    /// supplied inputs allow.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metrics: Vec<Metric>,
    /// Per-report finding probabilities for AUC (JSONL).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub pred_graphs: Option<PathBuf>,
    #[arg(long)]
    pub ref_graphs: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl ScoreArgs {
    pub fn new(pred: impl Into<PathBuf>, reference: impl Into<PathBuf>) -> Self {
        ScoreArgs {
            pred: pred.into(),
            reference: reference.into(),
            format: None,
            uncertain: UncertainArg::Positive,
            top5: Top5::Mimic,
            metrics: Vec::new(),
            scores: None,
            pred_graphs: None,
            ref_graphs: None,
            out: None,
        }
    }

    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.pred = resolve_input(&self.pred)?;
        self.reference = resolve_input(&self.reference)?;
        for p in [
            &mut self.scores,
            &mut self.pred_graphs,
            &mut self.ref_graphs,
        ]
        .into_iter()
        .flatten()
        {
            *p = resolve_input(p)?;
        }
        Ok(self)
    }

    fn requested(&self) -> Result<BTreeSet<Metric>, CliError> {
        let graphs = self.pred_graphs.is_some() && self.ref_graphs.is_some();
        let set: BTreeSet<Metric> = if self.metrics.is_empty() {
            let mut s = BTreeSet::from([Metric::F1, Metric::Kappa]);
            if self.scores.is_some() {
                s.insert(Metric::Auc);
            }
            if graphs {
                s.insert(Metric::Radgraph);
            }
            s
        } else {
            self.metrics.iter().copied().collect()
        };
        if set.contains(&Metric::Auc) && self.scores.is_none() {
            return Err(CliError::MissingInput(
                "AUC requested but no --scores file was given".into(),
            ));
        }
        if set.contains(&Metric::Radgraph) && !graphs {
            return Err(CliError::MissingInput(
                "RadGraph F1 requested but --pred-graphs and --ref-graphs were not both given"
                    .into(),
            ));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ScoreLine {
    report_id: ReportId,
    probabilities: ScoredLabelVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleLabeled {
    pub pred: usize,
    pub reference: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub reports: usize,
    pub policy: PositivePolicy,
    pub top5: Top5,
    pub metrics: Vec<Metric>,
    /// Reports without stored labels, labeled here by the rule labeler.
    pub rule_labeled: RuleLabeled,
    pub lexicon_version: String,
    pub f1_14: Option<F1Report>,
    pub f1_5: Option<F1Report>,
    pub kappa: BTreeMap<Finding, Kappa>,
    pub auc: BTreeMap<Finding, RocCurve>,
    /// Findings whose reference labels hold a single class.
    pub auc_undefined: Vec<Finding>,
    pub radgraph: Option<CorpusRadGraph>,
}

fn id_mismatch<'a>(
    left: &str,
    right: &str,
    only_left: impl Iterator<Item = &'a ReportId>,
    only_right: impl Iterator<Item = &'a ReportId>,
) -> Option<CliError> {
    let a: Vec<_> = only_left.collect();
    let b: Vec<_> = only_right.collect();
    if a.is_empty() && b.is_empty() {
        return None;
    }
    let first = |v: &[&ReportId]| {
        v.first()
            .map(|id| format!(" (first: {id})"))
            .unwrap_or_default()
    };
    Some(CliError::IdMismatch {
        left: left.into(),
        right: right.into(),
        detail: format!(
            "{} only in {left}{}, {} only in {right}{}",
            a.len(),
            first(&a),
            b.len(),
            first(&b)
        ),
    })
}

/// Pairs `pred` with `reference` by report id, in reference order.
pub fn align<'a>(
    pred: &'a [Report],
    reference: &'a [Report],
) -> Result<Vec<(&'a Report, &'a Report)>, CliError> {
    let by_id: BTreeMap<&ReportId, &Report> = pred.iter().map(|r| (&r.report_id, r)).collect();
    let ref_ids: BTreeSet<&ReportId> = reference.iter().map(|r| &r.report_id).collect();
    if let Some(e) = id_mismatch(
        "predictions",
        "references",
        by_id.keys().copied().filter(|id| !ref_ids.contains(id)),
        ref_ids.iter().copied().filter(|id| !by_id.contains_key(id)),
    ) {
        return Err(e);
    }
    Ok(reference.iter().map(|r| (by_id[&r.report_id], r)).collect())
}

fn labels_of(reports: &[&Report], labeler: &Labeler) -> (Vec<LabelVector>, usize) {
    let mut computed = 0;
    let labels = reports
        .iter()
        .map(|r| {
            r.labels.unwrap_or_else(|| {
                computed += 1;
                labeler.label(&r.text)
            })
        })
        .collect();
    (labels, computed)
}

fn read_graphs(path: &PathBuf) -> Result<BTreeMap<ReportId, ReportGraph>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_graph_file(BufReader::new(file))?
        .into_iter()
        .map(|g| (g.report_id, g.graph))
        .collect())
}

pub fn run_score(args: &ScoreArgs, labeler: &Labeler) -> Result<ScoreReport, CliError> {
    let requested = args.requested()?;
    let format = args.format.map(Into::into);
    let pred = read_corpus(&args.pred, format)?;
    let reference = read_corpus(&args.reference, format)?;
    let pairs = align(&pred, &reference)?;
    let policy = args.uncertain.policy();

    let (pred_reports, ref_reports): (Vec<&Report>, Vec<&Report>) = pairs.iter().copied().unzip();
    let (pred_labels, pred_computed) = labels_of(&pred_reports, labeler);
    let (ref_labels, ref_computed) = labels_of(&ref_reports, labeler);

    let (f1_14, f1_5) = if requested.contains(&Metric::F1) {
        (
            Some(f1_scores(&pred_labels, &ref_labels, &Finding::ALL, policy)?),
            Some(f1_scores(
                &pred_labels,
                &ref_labels,
                args.top5.findings(),
                policy,
            )?),
        )
    } else {
        (None, None)
    };

    let mut kappa = BTreeMap::new();
    if requested.contains(&Metric::Kappa) {
        for f in Finding::ALL {
            kappa.insert(f, cohens_kappa(&pred_labels, &ref_labels, f, policy)?);
        }
    }

    let mut auc = BTreeMap::new();
    let mut auc_undefined = Vec::new();
    if let (true, Some(path)) = (requested.contains(&Metric::Auc), &args.scores) {
        let lines: Vec<ScoreLine> = read_jsonl(path)?;
        let mut by_id = BTreeMap::new();
        for l in lines {
            if by_id.insert(l.report_id.clone(), l.probabilities).is_some() {
                return Err(CliError::Invalid(format!(
                    "{}: duplicate report_id `{}`",
                    path.display(),
                    l.report_id
                )));
            }
        }
        let ids: BTreeSet<&ReportId> = ref_reports.iter().map(|r| &r.report_id).collect();
        if let Some(e) = id_mismatch(
            "scores",
            "references",
            by_id.keys().filter(|id| !ids.contains(id)),
            ids.iter().copied().filter(|id| !by_id.contains_key(*id)),
        ) {
            return Err(e);
        }
        for f in Finding::ALL {
            let scores: Vec<f64> = ref_reports
                .iter()
                .map(|r| by_id[&r.report_id].get(f))
                .collect();
            let truth: Vec<bool> = ref_labels
                .iter()
                .map(|l| policy.is_positive(l.get(f)))
                .collect();
            match roc_auc(&scores, &truth) {
                Ok(curve) => {
                    auc.insert(f, curve);
                }
                Err(cxrkit_core::classification::MetricError::SingleClass) => auc_undefined.push(f),
                Err(e) => return Err(e.into()),
            }
        }
    }

    let radgraph = match (&args.pred_graphs, &args.ref_graphs) {
        (Some(p), Some(r)) if requested.contains(&Metric::Radgraph) => {
            let pg = read_graphs(p)?;
            let rg = read_graphs(r)?;
            let ids: BTreeSet<&ReportId> = ref_reports.iter().map(|r| &r.report_id).collect();
            for (name, g) in [("predicted graphs", &pg), ("reference graphs", &rg)] {
                if let Some(e) = id_mismatch(
                    name,
                    "references",
                    g.keys().filter(|id| !ids.contains(id)),
                    ids.iter().copied().filter(|id| !g.contains_key(*id)),
                ) {
                    return Err(e);
                }
            }
            Some(corpus_radgraph_f1(
                ref_reports
                    .iter()
                    .map(|r| (&pg[&r.report_id], &rg[&r.report_id])),
            )?)
        }
        _ => None,
    };

    Ok(ScoreReport {
        reports: pairs.len(),
        policy,
        top5: args.top5,
        metrics: requested.into_iter().collect(),
        rule_labeled: RuleLabeled {
            pred: pred_computed,
            reference: ref_computed,
        },
        lexicon_version: labeler.lexicon_version().to_string(),
        f1_14,
        f1_5,
        kappa,
        auc,
        auc_undefined,
        radgraph,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", 100.0 * x))
        .unwrap_or_else(|| "n/a".into())
}

/// Plain-text table; F1 values are scaled to 0-100.
pub fn render_table(r: &ScoreReport) -> String {
    let mut out = format!(
        "reports: {}  uncertain -> {:?}  top-5 subset: {:?}\n\n",
        r.reports, r.policy.uncertain_maps_to, r.top5
    );
    out.push_str(&format!("{:<24}{:>8}\n", "metric", "value"));
    if let (Some(a), Some(b)) = (&r.f1_14, &r.f1_5) {
        for (name, v) in [
            ("micro F1-14", a.micro_f1),
            ("macro F1-14", a.macro_f1),
            ("micro F1-5", b.micro_f1),
            ("macro F1-5", b.macro_f1),
        ] {
            out.push_str(&format!("{name:<24}{:>8}\n", pct(v)));
        }
    }
    if let Some(g) = &r.radgraph {
        for (name, v) in [
            ("RadGraph entity F1", g.entity_f1),
            ("RadGraph relation F1", g.relation_f1),
            ("RadGraph combined F1", g.combined),
        ] {
            out.push_str(&format!("{name:<24}{v:>8.1}\n"));
        }
    }
    out.push_str(&format!(
        "\n{:<28}{:>8}{:>8}{:>8}\n",
        "finding", "F1", "kappa", "AUC"
    ));
    for f in Finding::ALL {
        let f1 = r
            .f1_14
            .as_ref()
            .and_then(|x| x.per_finding_f1.get(&f).copied());
        let kappa = r
            .kappa
            .get(&f)
            .and_then(Kappa::value)
            .map(|k| format!("{k:.3}"))
            .unwrap_or_else(|| "n/a".into());
        let auc = r
            .auc
            .get(&f)
            .map(|c| format!("{:.3}", c.auc))
            .unwrap_or_else(|| "n/a".into());
        out.push_str(&format!(
            "{:<28}{:>8}{:>8}{:>8}\n",
            f.name(),
            pct(f1),
            kappa,
            auc
        ));
    }
    out
}
