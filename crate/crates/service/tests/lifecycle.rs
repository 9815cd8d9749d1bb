use choicescore_core::catalog::AttributeCatalog;
use choicescore_core::choice::scores_from_study;
use choicescore_core::io::LogRecord;
use choicescore_service::store::{CreateStudy, StudyStatus, StudyStore, Submission};

fn small_study(store: &StudyStore, id: &str) {
    let mut req = CreateStudy::new(20, 7);
    req.id = Some(id.into());
    req.catalog = Some(AttributeCatalog::binary(6));
    store.create_study(&req).unwrap();
}

/// Answers the current set of `sid`: first member most, last member least.
fn answer(store: &StudyStore, sid: &str) -> choicescore_service::store::Ack {
    let next = store.next_set(sid).unwrap();
    let ids: Vec<_> = next.profiles.iter().map(|p| p.id).collect();
    store
        .submit(sid, Submission { set_index: next.set_index.unwrap(), most_id: ids[0], least_id: ids[ids.len() - 1] })
        .unwrap()
}

#[test]
fn creation_is_deterministic_and_checks_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    small_study(&store, "a");
    small_study(&store, "b");
    assert_eq!(store.design("a").unwrap().profiles(), store.design("b").unwrap().profiles());
    assert_eq!(store.questionnaires("a").unwrap(), store.questionnaires("b").unwrap());
    let summary = store.summary("a").unwrap();
    assert_eq!((summary.p, summary.primes, summary.status), (5, [7, 11, 13], StudyStatus::Draft));

    let err = store.create_study(&CreateStudy::new(24, 1)).unwrap_err();
    assert_eq!(err.code(), "plan_infeasible");
    let mut dup = CreateStudy::new(20, 7);
    dup.id = Some("a".into());
    assert_eq!(store.create_study(&dup).unwrap_err().code(), "conflict");
}

#[test]
fn full_size_study_has_47_questionnaires_of_47_sets() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    let mut req = CreateStudy::new(188, 3);
    req.restarts = 1;
    let s = store.create_study(&req).unwrap();
    assert_eq!((s.questionnaires, s.p, s.set_size), (47, 47, 4));
    for q in store.questionnaires(&s.id).unwrap() {
        assert_eq!(q.sets.len(), 47);
    }
}

#[test]
fn status_only_moves_forward() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    small_study(&store, "s");
    assert_eq!(store.assign("s", "ann").unwrap_err().code(), "invalid_state");
    assert_eq!(store.aggregate("s", None).unwrap_err().code(), "invalid_state");
    store.open_study("s").unwrap();
    assert_eq!(store.open_study("s").unwrap_err().code(), "invalid_state");
}

#[test]
fn assignment_is_lowest_first_idempotent_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    small_study(&store, "s");
    store.open_study("s").unwrap();
    let first = store.assign("s", "l0").unwrap();
    assert_eq!((first.questionnaire_index, first.cursor), (0, 0));
    assert_eq!(store.assign("s", "l0").unwrap(), first);
    for i in 1..5 {
        assert_eq!(store.assign("s", &format!("l{i}")).unwrap().questionnaire_index, i);
    }
    assert_eq!(store.assign("s", "l5").unwrap_err().code(), "capacity");
}

#[test]
fn submissions_are_ordered_validated_and_never_duplicated() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    small_study(&store, "s");
    store.open_study("s").unwrap();
    let sid = store.assign("s", "ann").unwrap().session_id;

    let next = store.next_set(&sid).unwrap();
    assert_eq!((next.set_index, next.profiles.len(), next.done), (Some(0), 4, false));
    assert_eq!(next.profiles[0].levels.len(), 6);
    let ids: Vec<_> = next.profiles.iter().map(|p| p.id).collect();
    let expect = |sub: Submission, code: &str| assert_eq!(store.submit(&sid, sub).unwrap_err().code(), code);
    expect(Submission { set_index: 0, most_id: ids[0], least_id: ids[0] }, "invalid_response");
    expect(Submission { set_index: 0, most_id: ids[0], least_id: 9_999 }, "invalid_response");
    expect(Submission { set_index: 1, most_id: ids[0], least_id: ids[1] }, "sequence");
    assert_eq!(store.next_set(&sid).unwrap().set_index, Some(0), "rejections leave the cursor alone");

    let ok = Submission { set_index: 0, most_id: ids[0], least_id: ids[1] };
    assert_eq!(store.submit(&sid, ok).unwrap().cursor, 1);
    expect(ok, "conflict");
    assert_eq!(store.responses("s").unwrap().len(), 1);

    for _ in 1..5 {
        answer(&store, &sid);
    }
    let done = store.next_set(&sid).unwrap();
    assert!(done.done && done.set_index.is_none());
    assert!(store.session(&sid).unwrap().completed);
    expect(Submission { set_index: 5, most_id: ids[0], least_id: ids[1] }, "invalid_response");
}

#[test]
fn aggregation_uses_only_completed_questionnaires() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    small_study(&store, "s");
    store.open_study("s").unwrap();
    assert_eq!(store.aggregate("s", Some(1)).unwrap_err().code(), "not_ready");
    for l in 0..3 {
        let sid = store.assign("s", &format!("l{l}")).unwrap().session_id;
        let sets = if l == 2 { 2 } else { 5 };
        for _ in 0..sets {
            answer(&store, &sid);
        }
    }
    assert_eq!(store.aggregate("s", Some(3)).unwrap_err().code(), "not_ready");
    let manifest = store.aggregate("s", Some(2)).unwrap();
    assert_eq!(manifest.questionnaire_indices, vec![0, 1]);
    assert_eq!(manifest.partial_questionnaires, vec![2]);
    assert_eq!(manifest.labeler_ids, vec!["l0", "l1"]);
    let scores = store.scores("s").unwrap();
    assert_eq!(scores.q, 2);

    let qs = store.questionnaires("s").unwrap();
    let responses: Vec<_> = store
        .responses("s")
        .unwrap()
        .into_iter()
        .map(|r| r.response)
        .filter(|r| r.questionnaire_index < 2)
        .collect();
    let offline = scores_from_study(&responses, &qs[..2], &store.prior("s").unwrap(), 4).unwrap();
    assert_eq!(offline, scores);
    assert_eq!(store.summary("s").unwrap().status, StudyStatus::Aggregated);
    assert!(dir.path().join("studies/s/scores.csv").exists());
    assert!(dir.path().join("studies/s/manifest.json").exists());
}

#[test]
fn replaying_the_logs_restores_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let (sessions, responses, scores) = {
        let store = StudyStore::open(dir.path()).unwrap();
        small_study(&store, "s");
        store.open_study("s").unwrap();
        for l in 0..5 {
            let sid = store.assign("s", &format!("l{l}")).unwrap().session_id;
            for _ in 0..(l + 1).min(5) {
                answer(&store, &sid);
            }
        }
        store.aggregate("s", Some(1)).unwrap();
        (store.sessions("s").unwrap(), store.responses("s").unwrap(), store.scores("s").unwrap())
    };
    let store = StudyStore::open(dir.path()).unwrap();
    assert_eq!(store.sessions("s").unwrap(), sessions);
    assert_eq!(store.responses("s").unwrap(), responses);
    assert_eq!(store.scores("s").unwrap(), scores);
    assert_eq!(store.summary("s").unwrap().status, StudyStatus::Aggregated);
}

#[test]
fn corrupt_log_is_refused_on_start() {
    let dir = tempfile::tempdir().unwrap();
    {
        let store = StudyStore::open(dir.path()).unwrap();
        small_study(&store, "s");
        store.open_study("s").unwrap();
        let sid = store.assign("s", "ann").unwrap().session_id;
        answer(&store, &sid);
    }
    let log = dir.path().join("studies/s/responses.log");
    let line = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, format!("{line}{line}")).unwrap();
    let err = StudyStore::open(dir.path()).err().expect("duplicate response must be rejected");
    assert!(err.to_string().contains("responses.log line 2"), "{err}");
}

#[test]
fn import_goes_through_the_same_checks_and_matches_live_scores() {
    let dir = tempfile::tempdir().unwrap();
    let store = StudyStore::open(dir.path()).unwrap();
    small_study(&store, "live");
    small_study(&store, "file");
    store.open_study("live").unwrap();
    store.open_study("file").unwrap();
    for l in 0..5 {
        let sid = store.assign("live", &format!("l{l}")).unwrap().session_id;
        for _ in 0..5 {
            answer(&store, &sid);
        }
    }
    let out = dir.path().join("export");
    store.export("live", &out).unwrap();
    let mut records = choicescore_core::io::read_response_log(&out.join("responses.tsv")).unwrap();
    records.reverse();
    let mut bad = records[0].clone();
    bad.timestamp = "yesterday".into();
    records.insert(0, bad);
    let dup: LogRecord = records[records.len() - 1].clone();
    records.push(dup);

    let report = store.import_responses("file", &records).unwrap();
    // Reversed order breaks the per-questionnaire sequence; re-importing the
    // rejected lines in log order completes the study.
    assert!(report.rejected.iter().any(|r| r.code == "sequence"));
    assert!(report.rejected.iter().any(|r| r.code == "bad_request"));
    let ordered = choicescore_core::io::read_response_log(&out.join("responses.tsv")).unwrap();
    let second = store.import_responses("file", &ordered).unwrap();
    assert_eq!(report.accepted + second.accepted, 25);
    assert!(second.rejected.iter().all(|r| r.code == "conflict"));

    store.aggregate("live", Some(5)).unwrap();
    store.aggregate("file", Some(5)).unwrap();
    let (a, b) = (store.scores("live").unwrap(), store.scores("file").unwrap());
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.label.to_bits(), y.label.to_bits());
    }
}
