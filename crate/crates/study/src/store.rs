//! Append-only event log files and snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::StudyError;
use crate::events::{EventEnvelope, LogHeader, LOG_FORMAT, LOG_VERSION, SNAPSHOT_FORMAT};
use crate::ids::StudyId;
use crate::state::StudyState;

pub fn events_path(dir: &Path, study_id: &StudyId) -> PathBuf {
    dir.join(format!("{study_id}.events.jsonl"))
}

pub fn snapshot_path(dir: &Path, study_id: &StudyId) -> PathBuf {
    dir.join(format!("{study_id}.snapshot.json"))
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    seq: u64,
    state: StudyState,
}

#[derive(Debug)]
struct FileSink {
    dir: PathBuf,
    study_id: StudyId,
    file: File,
}

/// In-memory copy of every envelope, mirrored to disk when file-backed.
#[derive(Debug, Default)]
pub struct EventLog {
    events: Vec<EventEnvelope>,
    sink: Option<FileSink>,
}

/// A log read back from disk.
#[derive(Debug)]
pub struct LoadedLog {
    pub log: EventLog,
    pub snapshot: Option<StudyState>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog::default()
    }

    /// Starts a new log file; refuses to overwrite an existing one.
    pub fn create(dir: &Path, study_id: &StudyId) -> Result<Self, StudyError> {
        fs::create_dir_all(dir)?;
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(events_path(dir, study_id))?;
        let header = serde_json::to_string(&LogHeader::new(study_id.clone()))
            .map_err(|e| StudyError::Log(e.to_string()))?;
        writeln!(file, "{header}")?;
        file.flush()?;
        Ok(EventLog {
            events: Vec::new(),
            sink: Some(FileSink {
                dir: dir.to_path_buf(),
                study_id: study_id.clone(),
                file,
            }),
        })
    }

    /// Reads a log and its snapshot, if any; appends continue at the end.
    pub fn load(dir: &Path, study_id: &StudyId) -> Result<LoadedLog, StudyError> {
        let path = events_path(dir, study_id);
        let reader = BufReader::new(File::open(&path)?);
        let mut lines = reader.lines().enumerate();
        let header: LogHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?)
                .map_err(|e| StudyError::Log(format!("{}: bad header: {e}", path.display())))?,
            None => return Err(StudyError::Log(format!("{}: empty file", path.display()))),
        };
        if header.format != LOG_FORMAT || header.version != LOG_VERSION {
            return Err(StudyError::Log(format!(
                "{}: unsupported log {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        if &header.study_id != study_id {
            return Err(StudyError::Log(format!(
                "{}: log belongs to study {}",
                path.display(),
                header.study_id
            )));
        }
        let mut events = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let env: EventEnvelope = serde_json::from_str(&line)
                .map_err(|e| StudyError::Log(format!("{} line {}: {e}", path.display(), i + 1)))?;
            events.push(env);
        }
        let snapshot = match fs::read_to_string(snapshot_path(dir, study_id)) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text)
                    .map_err(|e| StudyError::Log(format!("bad snapshot: {e}")))?;
                if snap.format != SNAPSHOT_FORMAT || snap.version != LOG_VERSION {
                    return Err(StudyError::Log("unsupported snapshot".into()));
                }
                (snap.seq <= events.len() as u64).then_some(snap.state)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(LoadedLog {
            log: EventLog {
                events,
                sink: Some(FileSink {
                    dir: dir.to_path_buf(),
                    study_id: study_id.clone(),
                    file,
                }),
            },
            snapshot,
        })
    }

    pub fn append(&mut self, envelope: &EventEnvelope) -> Result<(), StudyError> {
        if let Some(sink) = &mut self.sink {
            let line =
                serde_json::to_string(envelope).map_err(|e| StudyError::Log(e.to_string()))?;
            writeln!(sink.file, "{line}")?;
            sink.file.flush()?;
        }
        self.events.push(envelope.clone());
        Ok(())
    }

    /// Writes the snapshot to a temporary file and renames it into place.
    pub fn write_snapshot(&self, state: &StudyState) -> Result<(), StudyError> {
        let Some(sink) = &self.sink else {
            return Ok(());
        };
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: LOG_VERSION,
            seq: state.last_seq,
            state: state.clone(),
        };
        let path = snapshot_path(&sink.dir, &sink.study_id);
        let tmp = path.with_extension("json.tmp");
        fs::write(
            &tmp,
            serde_json::to_vec(&snap).map_err(|e| StudyError::Log(e.to_string()))?,
        )?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn events(&self) -> &[EventEnvelope] {
        &self.events
    }

    pub fn is_persistent(&self) -> bool {
        self.sink.is_some()
    }
}

/// Study ids with a log file in `dir`.
pub fn list_studies(dir: &Path) -> Result<Vec<StudyId>, StudyError> {
    let mut ids = Vec::new();
    if !dir.exists() {
        return Ok(ids);
    }
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(".events.jsonl") {
            ids.push(StudyId::new(id));
        }
    }
    ids.sort();
    Ok(ids)
}
