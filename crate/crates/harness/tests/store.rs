mod common;

use std::fs;
use std::io::Write;

use common::*;
use intent_grasp::agents::Polarity;
use intent_grasp::dialogue::Policy;
use intent_grasp::world::Split;
use intent_grasp_harness::api::{AnswerRequest, CreateSessionRequest, SessionStatus, SessionView};
use intent_grasp_harness::{ErrorCode, ServiceConfig, Store};
use proptest::prelude::*;

fn yes() -> AnswerRequest {
    AnswerRequest::Structured { polarity: Polarity::Yes, correction: None }
}

fn no() -> AnswerRequest {
    AnswerRequest::Structured { polarity: Polarity::No, correction: None }
}

fn logged(dir: &tempfile::TempDir) -> ServiceConfig {
    ServiceConfig { log: Some(dir.path().join("sessions.jsonl")), ..Default::default() }
}

/// A fixed workload touching every kind of log record.
fn workload(store: &Store) -> Vec<String> {
    let mut ids = Vec::new();
    for (i, policy) in Policy::ALL.into_iter().enumerate() {
        let v = store.create_session(CreateSessionRequest::generated(Split::ALL[i % 3], i as u64, policy)).unwrap();
        ids.push(v.session_id);
    }
    store.answer(&ids[0], yes()).unwrap();
    store.answer(&ids[0], no()).unwrap();
    store.answer(&ids[1], AnswerRequest::Text { text: "No".into() }).unwrap();
    store.finalize(&ids[1]).ok();
    store.finalize(&ids[3]).unwrap();
    store.add_scene(two_drinks()).unwrap();
    store.delete_scene("two-drinks").unwrap();
    ids
}

fn views(store: &Store, ids: &[String]) -> Vec<SessionView> {
    ids.iter().map(|id| store.get_session(id).unwrap()).collect()
}

#[test]
fn restart_replays_every_session() {
    let dir = tempfile::tempdir().unwrap();
    let (ids, before) = {
        let store = Store::open(logged(&dir)).unwrap();
        let ids = workload(&store);
        (ids.clone(), views(&store, &ids))
    };
    let reopened = Store::open(logged(&dir)).unwrap();
    assert_eq!(views(&reopened, &ids), before);
    assert_eq!(reopened.scene("two-drinks").unwrap_err().code, ErrorCode::NotFound);

    // Continuing after the restart matches a store that never stopped.
    let memory = Store::open(ServiceConfig::default()).unwrap();
    let same_ids = workload(&memory);
    assert_eq!(same_ids, ids);
    for store in [&reopened, &memory] {
        store.answer(&ids[0], yes()).unwrap();
        store.answer(&ids[2], no()).unwrap();
    }
    assert_eq!(views(&reopened, &ids), views(&memory, &ids));

    let fresh = reopened.create_session(CreateSessionRequest::generated(Split::Seen, 50, Policy::Literal)).unwrap();
    assert!(!ids.contains(&fresh.session_id));
}

#[test]
fn torn_final_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    let (ids, before) = {
        let store = Store::open(logged(&dir)).unwrap();
        let ids = workload(&store);
        (ids.clone(), views(&store, &ids))
    };
    let intact = fs::read_to_string(&path).unwrap();
    fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(br#"{"op":"answer","session_id":"s0"#).unwrap();
    let store = Store::open(logged(&dir)).unwrap();
    assert_eq!(views(&store, &ids), before);
    assert_eq!(fs::read_to_string(&path).unwrap(), intact);
    store.answer(&ids[0], yes()).unwrap();
    let after = views(&store, &ids);
    drop(store);
    assert_eq!(views(&Store::open(logged(&dir)).unwrap(), &ids), after);
}

#[test]
fn corrupt_interior_line_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    workload(&Store::open(logged(&dir)).unwrap());
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(2, "not a record");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = Store::open(logged(&dir)).err().expect("corrupt log accepted").to_string();
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn rejected_calls_leave_the_log_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.jsonl");
    let store = Store::open(logged(&dir)).unwrap();
    let v = store.create_session(CreateSessionRequest::generated(Split::Seen, 3, Policy::Pragmatic)).unwrap();
    let len = fs::metadata(&path).unwrap().len();
    assert!(store.finalize(&v.session_id).is_err());
    assert!(store.answer(&v.session_id, AnswerRequest::Text { text: "perhaps".into() }).is_err());
    assert!(store.answer("s424242", yes()).is_err());
    assert!(store.delete_scene("nope").is_err());
    let mut bad = CreateSessionRequest::generated(Split::Seen, 3, Policy::Pragmatic);
    bad.rounds = 0;
    assert!(store.create_session(bad).is_err());
    assert_eq!(fs::metadata(&path).unwrap().len(), len);
    assert_eq!(store.get_session(&v.session_id).unwrap(), v);
}

#[derive(Debug, Clone)]
enum Op {
    Yes,
    No,
    Text,
    Garbage,
    Finalize,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::Yes), Just(Op::No), Just(Op::Text), Just(Op::Garbage), Just(Op::Finalize)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Random call sequences against a model of the lifecycle: created, then
    /// question and answer up to T times, then finalized. Every rejected call
    /// is invalid_state or bad_request and leaves the session unchanged.
    #[test]
    fn lifecycle_is_a_strict_state_machine(
        seed in 0u64..1000,
        policy in 0usize..5,
        rounds in 1usize..4,
        ops in prop::collection::vec(op(), 1..12),
    ) {
        let store = Store::open(ServiceConfig::default()).unwrap();
        let policy = Policy::ALL[policy];
        let mut req = CreateSessionRequest::generated(Split::ALL[(seed % 3) as usize], seed, policy);
        req.rounds = rounds;
        let v = match store.create_session(req) {
            Ok(v) => v,
            // Some generated scenes leave the grounder nothing to detect.
            Err(e) => {
                prop_assert_eq!(e.code, ErrorCode::EngineError);
                return Ok(());
            }
        };
        let id = v.session_id.clone();
        let mut answered = 0;
        let mut finalized = false;
        for op in ops {
            let before = store.get_session(&id).unwrap();
            let asking = policy != Policy::Silent && answered < rounds && !finalized;
            let result = match op {
                Op::Yes => store.answer(&id, yes()),
                Op::No => store.answer(&id, no()),
                Op::Text => store.answer(&id, AnswerRequest::Text { text: "no".into() }),
                Op::Garbage => store.answer(&id, AnswerRequest::Text { text: "what?".into() }),
                Op::Finalize => store.finalize(&id),
            };
            match (&op, result) {
                (Op::Finalize, Ok(after)) => {
                    prop_assert!(!finalized && before.estimate.is_some());
                    prop_assert_eq!(after.status, SessionStatus::Finalized);
                    finalized = true;
                }
                (Op::Finalize, Err(e)) => {
                    let expect_invalid = finalized || before.estimate.is_none();
                    prop_assert_eq!(e.code, if expect_invalid { ErrorCode::InvalidState } else { ErrorCode::EngineError });
                    prop_assert_eq!(store.get_session(&id).unwrap(), before);
                }
                (Op::Garbage, r) => {
                    let e = r.unwrap_err();
                    prop_assert_eq!(e.code, if asking { ErrorCode::BadRequest } else { ErrorCode::InvalidState });
                    prop_assert_eq!(store.get_session(&id).unwrap(), before);
                }
                (_, Ok(after)) => {
                    prop_assert!(asking);
                    answered += 1;
                    prop_assert_eq!(after.round, answered);
                    prop_assert_eq!(after.done, answered == rounds);
                    prop_assert_eq!(after.question.is_some(), answered < rounds);
                    prop_assert_eq!(after.transcript.len(), answered);
                }
                (_, Err(e)) => {
                    prop_assert!(!asking, "{e}");
                    prop_assert_eq!(e.code, ErrorCode::InvalidState);
                    prop_assert_eq!(store.get_session(&id).unwrap(), before);
                }
            }
        }
    }
}
