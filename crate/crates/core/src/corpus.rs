//! Line-delimited report corpora (JSONL and CSV).
//!
//! JSONL records carry the [`Report`] fields directly. CSV files use a header
//! row with the same field names; `image_refs` is `|`-separated and `labels`,
//! when present, holds the 14 label strings in canonical finding order, also
//! `|`-separated. In both formats a line starting with `#` is a comment.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::report::{Arm, AuthorRole, Report, ReportId};
use crate::taxonomy::{AssertionLabel, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!(
                "unknown corpus format `{other}` (expected jsonl or csv)"
            )),
        }
    }
}

/// A rejected record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("corpus contains no records")]
    Empty,
    #[error("csv header is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("{} invalid record(s); first: {}", .0.len(), .0[0])]
    InvalidRecords(Vec<RecordError>),
}

/// Parsed corpus: valid reports in file order plus rejected records.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub reports: Vec<Report>,
    pub rejected: Vec<RecordError>,
}

impl Corpus {
    /// Fails if any record was rejected.
    pub fn into_strict(self) -> Result<Vec<Report>, CorpusError> {
        if self.rejected.is_empty() {
            Ok(self.reports)
        } else {
            Err(CorpusError::InvalidRecords(self.rejected))
        }
    }
}

pub fn parse_report_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    parse_reader(BufReader::new(file), format)
}

pub fn parse_reader<R: Read>(reader: R, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(reader))?,
        CorpusFormat::Csv => read_csv(reader)?,
    };
    if records.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut corpus = Corpus::default();
    let mut seen: HashSet<ReportId> = HashSet::new();
    for (line, parsed) in records {
        let outcome = parsed.and_then(|report| {
            report.validate().map_err(|e| e.to_string())?;
            if !seen.insert(report.report_id.clone()) {
                return Err(format!("duplicate report_id `{}`", report.report_id));
            }
            Ok(report)
        });
        match outcome {
            Ok(report) => corpus.reports.push(report),
            Err(reason) => corpus.rejected.push(RecordError { line, reason }),
        }
    }
    Ok(corpus)
}

type RawRecords = Vec<(u64, Result<Report, String>)>;

fn read_jsonl<R: BufRead>(reader: R) -> Result<RawRecords, CorpusError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed = serde_json::from_str::<Report>(&line).map_err(|e| e.to_string());
        out.push((idx as u64 + 1, parsed));
    }
    Ok(out)
}

const CSV_COLUMNS: [&str; 9] = [
    "report_id",
    "case_id",
    "text",
    "author_role",
    "arm",
    "parent_report_id",
    "image_refs",
    "history_note",
    "labels",
];

fn read_csv<R: Read>(reader: R) -> Result<RawRecords, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(false)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name);
    let required = |name: &'static str| col(name).ok_or(CorpusError::MissingColumn(name));
    let report_id = required("report_id")?;
    let case_id = required("case_id")?;
    let text = required("text")?;
    let author_role = required("author_role")?;
    let image_refs = required("image_refs")?;
    let arm = col("arm");
    let parent = col("parent_report_id");
    let history = col("history_note");
    let labels = col("labels");

    let mut out = Vec::new();
    for record in rdr.records() {
        let (line, parsed) = match record {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                let get = |i: Option<usize>| i.and_then(|i| rec.get(i)).unwrap_or("");
                let parsed = (|| {
                    let role_str = get(Some(author_role));
                    let role = AuthorRole::parse(role_str)
                        .ok_or_else(|| format!("unknown author_role `{role_str}`"))?;
                    let arm_str = get(arm);
                    let arm = if arm_str.is_empty() {
                        None
                    } else {
                        Some(
                            Arm::parse(arm_str)
                                .ok_or_else(|| format!("unknown arm `{arm_str}`"))?,
                        )
                    };
                    let parent_str = get(parent);
                    let refs_str = get(Some(image_refs));
                    let refs: Vec<String> = if refs_str.is_empty() {
                        Vec::new()
                    } else {
                        refs_str.split('|').map(str::to_string).collect()
                    };
                    let labels_str = get(labels);
                    let labels = if labels_str.is_empty() {
                        None
                    } else {
                        let parsed = labels_str
                            .split('|')
                            .map(|s| s.parse::<AssertionLabel>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|e| format!("labels: {e}"))?;
                        Some(
                            LabelVector::try_from_slice(&parsed)
                                .map_err(|v| format!("labels: {}", v.violations[0]))?,
                        )
                    };
                    Ok(Report {
                        report_id: get(Some(report_id)).into(),
                        case_id: get(Some(case_id)).into(),
                        text: get(Some(text)).to_string(),
                        author_role: role,
                        arm,
                        parent_report_id: (!parent_str.is_empty()).then(|| parent_str.into()),
                        image_refs: refs,
                        history_note: get(history).to_string(),
                        labels,
                    })
                })();
                (line, parsed)
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                (line, Err(e.to_string()))
            }
        };
        out.push((line, parsed));
    }
    Ok(out)
}

/// Writes reports in canonical form.
pub fn write_corpus<W: Write>(
    reports: &[Report],
    format: CorpusFormat,
    mut writer: W,
) -> Result<(), CorpusError> {
    match format {
        CorpusFormat::Jsonl => {
            for report in reports {
                serde_json::to_writer(&mut writer, report).map_err(io::Error::from)?;
                writer.write_all(b"\n")?;
            }
        }
        CorpusFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            wtr.write_record(CSV_COLUMNS)?;
            for r in reports {
                let labels = r
                    .labels
                    .map(|l| {
                        l.as_slice()
                            .iter()
                            .map(|x| x.as_str())
                            .collect::<Vec<_>>()
                            .join("|")
                    })
                    .unwrap_or_default();
                wtr.write_record([
                    r.report_id.as_str(),
                    r.case_id.as_str(),
                    &r.text,
                    r.author_role.as_str(),
                    r.arm.map(Arm::as_str).unwrap_or(""),
                    r.parent_report_id
                        .as_ref()
                        .map(ReportId::as_str)
                        .unwrap_or(""),
                    &r.image_refs.join("|"),
                    &r.history_note,
                    &labels,
                ])?;
            }
            wtr.flush()?;
        }
    }
    Ok(())
}
