//! Input resolution and readers.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use cxrkit_core::corpus::{parse_report_corpus, CorpusFormat};
use cxrkit_core::Report;
use serde::de::DeserializeOwned;

use crate::error::CliError;

/// Absolute path of an existing input file.
pub fn resolve_input(path: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))
}

/// Absolute path for an output file whose directory may not exist yet.
pub fn resolve_output(path: &Path) -> Result<PathBuf, CliError> {
    if path.is_absolute() {
        return Ok(path.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))?;
    Ok(cwd.join(path))
}

pub fn corpus_format(
    path: &Path,
    explicit: Option<CorpusFormat>,
) -> Result<CorpusFormat, CliError> {
    explicit
        .or_else(|| CorpusFormat::from_path(path))
        .ok_or_else(|| {
            CliError::Invalid(format!(
                "{}: cannot tell corpus format from the extension; pass --format",
                path.display()
            ))
        })
}

/// Reads a corpus, failing on any rejected record.
pub fn read_corpus(path: &Path, format: Option<CorpusFormat>) -> Result<Vec<Report>, CliError> {
    let format = corpus_format(path, format)?;
    parse_report_corpus(path, format)
        .and_then(|c| c.into_strict())
        .map_err(|source| CliError::Corpus {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// One value per non-empty line; `#` lines are comments.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let value = serde_json::from_str(t)
            .map_err(|e| CliError::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(value);
    }
    Ok(out)
}
