//! Registry of live studies shared by the HTTP handlers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use cxrkit_core::{Labeler, ReportId};

use crate::clock::Clock;
use crate::error::StudyError;
use crate::export::{export_study, StudyExport};
use crate::ids::{SessionId, StudyId};
use crate::model::{request_draft, ModelClient, ModelDraft};
use crate::state::StudyConfig;
use crate::store::{list_studies, EventLog};
use crate::study::Study;

/// Studies are locked one at a time; the model call for a draft runs with
/// no lock held.
pub struct StudyService {
    studies: RwLock<BTreeMap<StudyId, Arc<Mutex<Study>>>>,
    model: Arc<dyn ModelClient>,
    clock: Arc<dyn Clock>,
    labeler: Labeler,
    data_dir: Option<PathBuf>,
}

impl std::fmt::Debug for StudyService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StudyService")
            .field("data_dir", &self.data_dir)
            .finish_non_exhaustive()
    }
}

impl StudyService {
    pub fn new(model: Arc<dyn ModelClient>, clock: Arc<dyn Clock>) -> Self {
        StudyService {
            studies: RwLock::new(BTreeMap::new()),
            model,
            clock,
            labeler: Labeler::default(),
            data_dir: None,
        }
    }

    /// Persists studies under `dir` and reloads any already there.
    pub fn with_data_dir(
        model: Arc<dyn ModelClient>,
        clock: Arc<dyn Clock>,
        dir: impl Into<PathBuf>,
    ) -> Result<Self, StudyError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut studies = BTreeMap::new();
        for id in list_studies(&dir)? {
            let study = Study::open(&dir, &id, clock.clone())?;
            studies.insert(id, Arc::new(Mutex::new(study)));
        }
        Ok(StudyService {
            studies: RwLock::new(studies),
            model,
            clock,
            labeler: Labeler::default(),
            data_dir: Some(dir),
        })
    }

    pub fn with_labeler(mut self, labeler: Labeler) -> Self {
        self.labeler = labeler;
        self
    }

    pub fn labeler(&self) -> &Labeler {
        &self.labeler
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn study_ids(&self) -> Vec<StudyId> {
        self.studies.read().unwrap().keys().cloned().collect()
    }

    pub fn create_study(
        &self,
        study_id: Option<StudyId>,
        config: StudyConfig,
    ) -> Result<StudyId, StudyError> {
        let mut studies = self.studies.write().unwrap();
        let id = match study_id {
            Some(id) => id,
            None => (1..)
                .map(|n| StudyId::new(format!("study-{n:04}")))
                .find(|id| !studies.contains_key(id))
                .unwrap(),
        };
        if studies.contains_key(&id) {
            return Err(StudyError::DuplicateStudy(id));
        }
        let log = match &self.data_dir {
            Some(dir) => EventLog::create(dir, &id)?,
            None => EventLog::in_memory(),
        };
        let study = Study::create(id.clone(), config, self.clock.clone(), log)?;
        studies.insert(id.clone(), Arc::new(Mutex::new(study)));
        Ok(id)
    }

    pub fn study(&self, id: &StudyId) -> Result<Arc<Mutex<Study>>, StudyError> {
        self.studies
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| StudyError::UnknownStudy(id.clone()))
    }

    /// Runs `f` with the study locked.
    pub fn with_study<R>(
        &self,
        id: &StudyId,
        f: impl FnOnce(&mut Study) -> Result<R, StudyError>,
    ) -> Result<R, StudyError> {
        let study = self.study(id)?;
        let mut guard = study.lock().unwrap();
        f(&mut guard)
    }

    /// Requests, validates and records an AI draft. A failed call is logged
    /// and the session stays editable.
    pub async fn request_ai_draft(
        &self,
        id: &StudyId,
        session_id: &SessionId,
    ) -> Result<(ReportId, ModelDraft), StudyError> {
        let (request, timeout) = self.with_study(id, |s| s.draft_request(session_id))?;
        match request_draft(self.model.as_ref(), &request, timeout, self.clock.as_ref()).await {
            Ok(draft) => {
                let rid = self.with_study(id, |s| s.record_draft(session_id, draft.clone()))?;
                Ok((rid, draft))
            }
            Err(e) => {
                self.with_study(id, |s| s.record_draft_failure(session_id, &e))?;
                Err(e.into())
            }
        }
    }

    pub fn export(&self, id: &StudyId) -> Result<StudyExport, StudyError> {
        self.with_study(id, |s| export_study(s.state(), &self.labeler))
    }
}
