use std::sync::Arc;

use cxrkit_core::evaluation::{Instrument, Position, Response};
use cxrkit_core::Arm;
use cxrkit_study::clock::ManualClock;
use cxrkit_study::mock::{FaultPlan, InProcessModel};
use cxrkit_study::state::{CaseIntake, StudyConfig, StudyState};
use cxrkit_study::store::{events_path, snapshot_path};
use cxrkit_study::{ReaderId, StudyId, StudyService};

fn intake(i: usize) -> CaseIntake {
    CaseIntake {
        case_id: format!("case-{i:03}").into(),
        patient_meta: Default::default(),
        image_refs: vec![format!("case-{i:03}/pa.dcm")],
        history_note: if i.is_multiple_of(2) {
            "fever".into()
        } else {
            String::new()
        },
        admitted: true,
    }
}

async fn run_study(svc: &StudyService, clock: &ManualClock, id: &StudyId, cases: usize) {
    let readers: Vec<(ReaderId, Arm)> = svc
        .with_study(id, |s| {
            s.generate_allocation(11, 4, 4)?;
            (0..4)
                .map(|i| {
                    s.assign_reader(format!("reader-{i}").into())
                        .map(|a| (a.reader_id, a.arm))
                })
                .collect()
        })
        .unwrap();
    let ai = readers
        .iter()
        .find(|r| r.1 == Arm::AiAssisted)
        .unwrap()
        .0
        .clone();
    let sc = readers
        .iter()
        .find(|r| r.1 == Arm::StandardCare)
        .unwrap()
        .0
        .clone();
    for i in 0..cases {
        let c = intake(i);
        let cid = c.case_id.clone();
        let (a, s) = svc
            .with_study(id, |st| {
                st.register_case(c)?;
                let a = st.start_session(&cid, &ai)?.session.session_id;
                let s = st.start_session(&cid, &sc)?.session.session_id;
                Ok((a, s))
            })
            .unwrap();
        let (_, draft) = svc.request_ai_draft(id, &a).await.unwrap();
        clock.advance(90.0 + i as f64);
        svc.with_study(id, |st| {
            let fa = st.finalize_session(&a, &draft.report_text)?;
            clock.advance(20.0);
            st.finalize_session(&s, "No acute cardiopulmonary process.")?;
            let base = fa.session.report_versions.last().unwrap().clone();
            st.senior_review(&cid, &"senior".into(), &base, None)
        })
        .unwrap();
    }
    svc.with_study(id, |st| {
        let (_, items) = st.build_evaluation_batch(Instrument::PairwisePreference, 4, false)?;
        for (k, it) in items.iter().enumerate() {
            let pos = if k % 2 == 0 {
                Position::First
            } else {
                Position::Second
            };
            st.record_evaluation(it.item_id.clone(), "rater-1".into(), Response::Choice(pos))?;
        }
        Ok(())
    })
    .unwrap();
}

fn service(dir: &std::path::Path, clock: Arc<ManualClock>) -> StudyService {
    let model =
        Arc::new(InProcessModel::new(3, FaultPlan::default()).with_manual_clock(clock.clone()));
    StudyService::with_data_dir(model, clock, dir).unwrap()
}

fn config(snapshot_every: u64) -> StudyConfig {
    StudyConfig {
        reviewers: vec!["senior".into()],
        snapshot_every,
        ..StudyConfig::default()
    }
}

#[tokio::test]
async fn reload_reconstructs_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0, 1_700_000_000_000));
    let svc = service(dir.path(), clock.clone());
    let id = svc.create_study(Some("trial".into()), config(7)).unwrap();
    run_study(&svc, &clock, &id, 6).await;
    let live: StudyState = svc.with_study(&id, |s| Ok(s.state().clone())).unwrap();
    let export = serde_json::to_string(&svc.export(&id).unwrap()).unwrap();
    drop(svc);

    assert!(snapshot_path(dir.path(), &id).exists());
    let reloaded = service(dir.path(), clock.clone());
    assert_eq!(reloaded.study_ids(), vec![id.clone()]);
    let (from_snapshot, from_log) = reloaded
        .with_study(&id, |s| Ok((s.state().clone(), s.replayed_state()?)))
        .unwrap();
    assert_eq!(from_snapshot, live);
    assert_eq!(from_log, live);
    assert_eq!(
        serde_json::to_string(&reloaded.export(&id).unwrap()).unwrap(),
        export
    );

    // Appends continue the sequence after a reload.
    reloaded
        .with_study(&id, |s| s.register_case(intake(99)).map(|_| ()))
        .unwrap();
    drop(reloaded);
    let again = service(dir.path(), clock);
    let last = again.with_study(&id, |s| Ok(s.state().last_seq)).unwrap();
    assert_eq!(last, live.last_seq + 1);
}

#[tokio::test]
async fn log_file_is_versioned_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0, 0));
    let svc = service(dir.path(), clock.clone());
    let id = svc.create_study(Some("fmt".into()), config(0)).unwrap();
    run_study(&svc, &clock, &id, 2).await;
    let text = std::fs::read_to_string(events_path(dir.path(), &id)).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["format"], "cxrkit-study-events");
    assert_eq!(header["version"], 1);
    assert_eq!(header["study_id"], "fmt");
    for (i, line) in lines.enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seq"], i as u64 + 1);
        assert!(v["event"]["type"].is_string());
    }
    assert!(!snapshot_path(dir.path(), &id).exists());
    // The allocation event carries parameters, never arms.
    let alloc = text
        .lines()
        .find(|l| l.contains("\"type\":\"allocation_generated\""))
        .unwrap();
    assert!(!alloc.contains("arm"), "{alloc}");
}

#[tokio::test]
async fn corrupt_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0, 0));
    let svc = service(dir.path(), clock.clone());
    let id = svc.create_study(Some("bad".into()), config(0)).unwrap();
    run_study(&svc, &clock, &id, 1).await;
    drop(svc);
    let path = events_path(dir.path(), &id);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(3);
    std::fs::write(&path, lines.join("\n")).unwrap();
    let model = Arc::new(InProcessModel::new(3, FaultPlan::default()));
    assert!(StudyService::with_data_dir(model, clock, dir.path()).is_err());
}
