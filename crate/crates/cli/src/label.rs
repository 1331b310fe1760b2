//! Labels every report of a corpus.

use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use cxrkit_core::corpus::{write_corpus, CorpusFormat};
use cxrkit_core::{Finding, Labeler, Report};
use cxrkit_study::labeler_client::{LabelRequest, RemoteLabeler, DEFAULT_PARALLELISM};
use serde::Serialize;

use crate::error::CliError;
use crate::input::{corpus_format, read_corpus, resolve_input};
use crate::output::Header;
use crate::CorpusKind;

#[derive(Debug, Clone, Args, Serialize)]
pub struct LabelArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<CorpusKind>,
    /// Labeled corpus; format from the extension unless --out-format.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub out_format: Option<CorpusKind>,
    /// Base URL of a labeler service exposing `POST /label`.
    #[arg(long, env = "CXRKIT_LABELER_URL")]
    pub remote: Option<String>,
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    pub parallelism: usize,
    #[arg(long, default_value_t = 30.0)]
    pub timeout_s: f64,
}

impl LabelArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.input = resolve_input(&self.input)?;
        self.out = crate::input::resolve_output(&self.out)?;
        if self.parallelism == 0 {
            return Err(CliError::Invalid("--parallelism must be at least 1".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(CliError::Invalid("--timeout-s must be positive".into()));
        }
        Ok(self)
    }

    pub fn output_format(&self) -> Result<CorpusFormat, CliError> {
        corpus_format(&self.out, self.out_format.map(Into::into))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub reports: usize,
    pub source: String,
    /// Reports positive for each finding.
    pub positives: Vec<(Finding, usize)>,
}

/// Labels `args.input`, replacing any stored labels.
pub async fn run_label(
    args: &LabelArgs,
    labeler: &Labeler,
) -> Result<(Vec<Report>, LabelSummary), CliError> {
    let mut reports = read_corpus(&args.input, args.format.map(Into::into))?;
    let source = match &args.remote {
        None => {
            let labels = labeler.label_batch(reports.iter().map(|r| r.text.as_str()));
            for (r, l) in reports.iter_mut().zip(labels) {
                r.labels = Some(l);
            }
            format!("rules:{}", labeler.lexicon_version())
        }
        Some(url) => {
            let client = RemoteLabeler::new(url)
                .with_timeout(Duration::from_secs_f64(args.timeout_s))
                .with_parallelism(args.parallelism);
            let requests: Vec<LabelRequest> = reports
                .iter()
                .map(|r| LabelRequest {
                    report_id: r.report_id.clone(),
                    text: r.text.clone(),
                })
                .collect();
            let results = client.label_all(&requests).await;
            let total = results.len();
            let mut failures = Vec::new();
            for (r, res) in reports.iter_mut().zip(results) {
                match res {
                    Ok(l) => r.labels = Some(l),
                    Err(e) => failures.push(e),
                }
            }
            if !failures.is_empty() {
                return Err(CliError::RemoteLabel {
                    failed: failures.len(),
                    total,
                    first: failures.swap_remove(0),
                });
            }
            format!("remote:{url}")
        }
    };
    let positives = Finding::ALL
        .iter()
        .map(|f| {
            let n = reports
                .iter()
                .filter(|r| {
                    r.labels
                        .map(|l| l.get(*f) == cxrkit_core::AssertionLabel::Positive)
                        .unwrap_or(false)
                })
                .count();
            (*f, n)
        })
        .collect();
    let summary = LabelSummary {
        reports: reports.len(),
        source,
        positives,
    };
    Ok((reports, summary))
}

/// Corpus bytes led by a `#` header line.
pub fn render_corpus(
    reports: &[Report],
    format: CorpusFormat,
    header: &Header,
) -> Result<Vec<u8>, CliError> {
    let mut out = header.comment_line().into_bytes();
    write_corpus(reports, format, &mut out).map_err(|source| CliError::Corpus {
        path: PathBuf::from("<output>"),
        source,
    })?;
    Ok(out)
}
