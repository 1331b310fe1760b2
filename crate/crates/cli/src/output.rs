//! Output files: reproducibility header and all-or-nothing writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub cxrkit: &'static str,
    pub core: &'static str,
    pub study: &'static str,
    pub lexicon: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl Versions {
    pub fn new(lexicon: &str) -> Self {
        Versions {
            cxrkit: env!("CARGO_PKG_VERSION"),
            core: cxrkit_core::VERSION,
            study: cxrkit_study::VERSION,
            lexicon: lexicon.to_string(),
            model: None,
        }
    }

    pub fn with_model(mut self, model: &str) -> Self {
        self.model = Some(model.to_string());
        self
    }
}

/// Embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub command: &'static str,
    pub versions: Versions,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(
        command: &'static str,
        config: &impl Serialize,
        seed: Option<u64>,
        versions: Versions,
    ) -> Self {
        Header {
            tool: "cxrkit",
            command,
            versions,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }

    /// One-line form for `#` comment lines in corpus files.
    pub fn comment_line(&self) -> String {
        format!(
            "# {}\n",
            serde_json::to_string(self).expect("header serializes")
        )
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: &'a Header,
    result: &'a T,
}

/// Pretty JSON `{"header": .., "result": ..}` with a trailing newline.
pub fn json_document<T: Serialize>(header: &Header, result: &T) -> Vec<u8> {
    let mut out =
        serde_json::to_vec_pretty(&Document { header, result }).expect("document serializes");
    out.push(b'\n');
    out
}

/// Files staged in memory and written together.
///
/// Every file is first written to a temporary sibling; only when all of them
/// are complete are they renamed into place.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
            tmp.write_all(&bytes).map_err(|e| CliError::io(&path, e))?;
            tmp.as_file()
                .sync_all()
                .map_err(|e| CliError::io(&path, e))?;
            staged.push((path, tmp));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (path, tmp) in staged {
            tmp.persist(&path)
                .map_err(|e| CliError::io(&path, e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trips_as_comment() {
        let h = Header::new(
            "label",
            &serde_json::json!({"a": 1}),
            Some(7),
            Versions::new("lex-1"),
        );
        let line = h.comment_line();
        assert!(line.starts_with("# {"));
        let v: serde_json::Value = serde_json::from_str(line[2..].trim()).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["versions"]["lexicon"], "lex-1");
    }

    #[test]
    fn commit_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = OutputSet::new();
        set.add(dir.path().join("a.json"), b"a".to_vec());
        set.add(dir.path().join("sub/b.json"), b"b".to_vec());
        set.commit().unwrap();
        assert_eq!(std::fs::read(dir.path().join("sub/b.json")).unwrap(), b"b");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 2);
    }

    #[test]
    fn failed_staging_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let mut set = OutputSet::new();
        set.add(dir.path().join("first.json"), b"1".to_vec());
        // Parent is a regular file, so staging the second file fails.
        set.add(blocker.join("second.json"), b"2".to_vec());
        assert!(set.commit().is_err());
        assert!(!dir.path().join("first.json").exists());
    }
}
