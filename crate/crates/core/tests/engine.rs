mod common;

use std::collections::BTreeMap;

use proofdoc::document::{Edit, SpanId};
use proofdoc::engine::{Engine, TaskKey};
use proofdoc::env::ProofStatus;
use proofdoc::protocol::{ClientMessage, QueryParams, QueryStatus, ServerMessage};
use proofdoc::scheduler::LogKind;
use proofdoc::stm::{MemoKey, SpanState};
use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn incremental_agrees_with_batch(seed in any::<u64>()) {
        let s = run_scenario(seed, 2, 25, 6, 4);
        prop_assert_eq!(check_against_batch(&s), Ok(()));
        assert_monotone(&s.messages);
        assert_all_versions_terminal(&s.messages);
    }

    #[test]
    fn worker_count_does_not_change_results(seed in any::<u64>()) {
        let one = run_scenario(seed, 1, 20, 4, 4);
        let many = run_scenario(seed, 8, 20, 4, 4);
        prop_assert_eq!(&one.final_text, &many.final_text);
        prop_assert_eq!(one.statuses, many.statuses);
    }
}

#[test]
fn exactly_one_result_per_query() {
    for seed in 0..30 {
        let s = run_scenario(seed, 3, 15, 6, 3);
        let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
        for m in &s.messages {
            if let ServerMessage::QueryResult { query_id, .. } = m {
                *seen.entry(*query_id).or_default() += 1;
            }
        }
        assert!(seen.values().all(|n| *n == 1), "seed {seed}: {seen:?}");
    }
}

#[test]
fn superseded_versions_end_cancelled() {
    let mut e = Engine::new(1).unwrap();
    e.handle(full_text(1, "lemma a : p -> p. proof. search 3. qed. lemma b : q -> q. proof. search 3. qed."));
    // No results processed yet: every span of version 1 is still open.
    e.handle(full_text(2, "lemma a : p -> p. proof. search 3. qed."));
    e.run_until_quiescent();
    let msgs = e.take_outbox();
    let v1 = last_statuses(&msgs, 1);
    assert_eq!(v1.len(), 8);
    assert!(v1.values().all(|s| s.state.is_terminal()));
    assert!(v1.values().any(|s| s.state == SpanState::Cancelled
        && s.messages[0].text == "superseded by version 2"));
    assert!(last_statuses(&msgs, 2).values().all(|s| s.state == SpanState::Finished));
    assert_monotone(&msgs);
}

#[test]
fn reuse_after_edit_below() {
    let mut e = Engine::new(2).unwrap();
    run_quiescent(&mut e, full_text(1, "def a := p. lemma x : a -> a. proof. intro h. exact h. qed."));
    let before = e.stats();
    let chain = e.plan().state_chain();
    let msgs = run_quiescent(
        &mut e,
        full_text(2, "def a := p. lemma x : a -> a. proof. intro h. exact h. qed. lemma y : q -> q. proof. search 2. qed."),
    );
    let after = e.stats();
    assert_eq!(after.env_runs - before.env_runs, 1);
    assert_eq!(after.region_runs - before.region_runs, 1);
    assert_eq!(&e.plan().state_chain()[..chain.len()], &chain[..]);
    // Reused spans are reported terminal right after `assigned`.
    let ServerMessage::Assigned { spans, .. } = &msgs[0] else { panic!("{:?}", msgs[0]) };
    assert_eq!(spans.len(), 10);
    for (i, m) in msgs[1..7].iter().enumerate() {
        assert!(
            matches!(m, ServerMessage::Status { state: SpanState::Finished, span, .. } if *span == spans[i].id),
            "{m:?}"
        );
    }
}

#[test]
fn header_edit_reruns_dependents_only() {
    let mut e = Engine::new(1).unwrap();
    let doc = "lemma a : p -> p. proof. intro h. exact h. qed.\nlemma b : q -> q. proof. intro h. apply a. qed.\nlemma c : r -> r. proof. intro h. exact h. qed.";
    run_quiescent(&mut e, full_text(1, doc));
    let failed: Vec<_> = e.statuses().iter().filter(|s| s.state == SpanState::Failed).collect();
    assert_eq!(failed.len(), 1, "{failed:?}");
    let before = e.stats();
    // Rename `a`: the chain changes from the first header on.
    run_quiescent(&mut e, full_text(2, &doc.replacen("lemma a", "lemma a2", 1)));
    let d = e.stats();
    assert_eq!(d.env_runs - before.env_runs, 3);
    assert_eq!(d.region_runs - before.region_runs, 3);
}

#[test]
fn proof_status_cells_follow_results() {
    let mut e = Engine::new(1).unwrap();
    run_quiescent(&mut e, full_text(1, "lemma a : p -> p. proof. intro h. exact h. qed. lemma b : p. proof. qed."));
    let header = |e: &Engine, pos: usize| {
        let key = match e.plan().entries[pos].assignment {
            proofdoc::stm::Assignment::Reused(k) | proofdoc::stm::Assignment::EnvTask(k) => k,
            ref other => panic!("{other:?}"),
        };
        e.memo().env(&key).unwrap().lemma.clone().unwrap()
    };
    assert_eq!(header(&e, 0).proof_status.get(), ProofStatus::Proved);
    assert_eq!(header(&e, 5).proof_status.get(), ProofStatus::Failed);
}

#[test]
fn perspective_runs_focused_region_first() {
    let mut e = Engine::new(1).unwrap();
    let text: String = (0..6)
        .map(|i| format!("lemma l{i} : p -> p. proof. intro h. exact h. qed.\n"))
        .collect();
    e.handle_batch([format!(r#"{{"type":"full_text","new_version":1,"text":{}}}"#, serde_json::to_string(&text).unwrap()).as_str()]);
    // Focus the last lemma before any region has been dispatched.
    let last_qed = *e.doc().ids().last().unwrap();
    e.handle(ClientMessage::Perspective { version: 1, spans: vec![last_qed] });
    e.run_until_quiescent();
    let regions: Vec<MemoKey> = e
        .scheduler_log()
        .iter()
        .filter_map(|ev| match &ev.kind {
            LogKind::Dispatch { key: TaskKey::Memo(k @ MemoKey::Region { .. }), .. } => Some(*k),
            _ => None,
        })
        .collect();
    assert_eq!(regions.len(), 6);
    assert_eq!(regions[0], e.plan().regions[5].key);
    // Priority respect: nothing strictly more urgent was left waiting.
    for ev in e.scheduler_log() {
        if let LogKind::Dispatch { priority, waiting_min, .. } = ev.kind {
            assert!(waiting_min.is_none_or(|w| w >= priority), "{ev:?}");
        }
    }
}

#[test]
fn protocol_errors_keep_state() {
    let mut e = Engine::new(1).unwrap();
    run_quiescent(&mut e, full_text(1, "lemma a : p -> p. proof. qed."));
    let ids = e.doc().ids();
    let cases: Vec<(&str, String)> = vec![
        ("{oops", "invalid json".into()),
        (r#"{"type":"frobnicate"}"#, "unknown message type frobnicate".into()),
        (r#"{"type":"full_text","new_version":1,"text":""}"#, "version mismatch".into()),
        (r#"{"type":"perspective","version":7,"spans":[]}"#, "version mismatch".into()),
        (r#"{"type":"perspective","version":1,"spans":[42]}"#, "unknown span 42".into()),
        (r#"{"type":"query","query_id":1,"agent":"oracle","span":1}"#, "unknown agent oracle".into()),
        (r#"{"type":"query","query_id":0,"agent":"hammer","span":1}"#, "query id must be positive".into()),
        (r#"{"type":"query","query_id":3,"agent":"hammer","span":99}"#, "unknown span 99".into()),
        (r#"{"type":"cancel_query","query_id":5}"#, "unknown query 5".into()),
    ];
    for (line, reason) in cases {
        e.handle_line(line);
        assert_eq!(e.take_outbox(), vec![ServerMessage::protocol_error(reason)], "{line}");
    }
    assert_eq!(e.doc().ids(), ids);
    assert_eq!(e.doc().version, 1);
}

#[test]
fn duplicate_inflight_query_is_rejected() {
    let mut e = Engine::new(1).unwrap();
    run_quiescent(&mut e, full_text(1, "lemma a : (p -> q) -> (q -> r) -> (r -> s) -> t. proof. qed."));
    let span = e.doc().ids()[2];
    let q = |id| ClientMessage::Query {
        query_id: id,
        agent: "hammer".into(),
        span,
        params: QueryParams { depth: 12 },
    };
    e.handle(q(9));
    e.handle(q(9));
    e.handle(ClientMessage::CancelQuery { query_id: 9 });
    e.run_until_quiescent();
    let msgs = e.take_outbox();
    assert_eq!(msgs[0], ServerMessage::protocol_error("duplicate query id 9"));
    assert!(matches!(msgs[1], ServerMessage::QueryResult { query_id: 9, status: QueryStatus::Cancelled, .. }));
    assert_eq!(msgs.len(), 2);
}

#[test]
fn query_uses_successful_prefix() {
    let mut e = Engine::new(1).unwrap();
    run_quiescent(&mut e, full_text(1, "lemma a : p /\\ q -> q /\\ p. proof. intro h. cases h. exact zzz. qed."));
    let ids = e.doc().ids();
    let ask = |e: &mut Engine, id: u64, span: SpanId| {
        run_quiescent(
            e,
            ClientMessage::Query {
                query_id: id,
                agent: "hammer".into(),
                span,
                params: QueryParams { depth: 4 },
            },
        )
    };
    // At the failing step: intro and cases succeeded.
    let msgs = ask(&mut e, 1, ids[4]);
    assert_eq!(
        msgs,
        vec![ServerMessage::QueryResult {
            query_id: 1,
            status: QueryStatus::Ok,
            suggestion: "split. exact h2. exact h1.".into()
        }]
    );
    // At qed the failed step is skipped as well.
    let msgs = ask(&mut e, 2, ids[5]);
    assert!(matches!(&msgs[0], ServerMessage::QueryResult { status: QueryStatus::Ok, .. }));
    // The proof-open span has no goal to work on.
    let msgs = ask(&mut e, 3, ids[1]);
    assert!(matches!(&msgs[0], ServerMessage::QueryResult { status: QueryStatus::Failed, .. }));
}

#[test]
fn edits_referencing_unknown_spans_are_atomic() {
    let mut e = Engine::new(1).unwrap();
    run_quiescent(&mut e, full_text(1, "def a := p. def b := q."));
    let ids = e.doc().ids();
    e.handle(ClientMessage::Update {
        old_version: 1,
        new_version: 2,
        edits: vec![Edit::Remove { id: ids[0] }, Edit::Remove { id: SpanId(77) }],
    });
    assert_eq!(e.take_outbox(), vec![ServerMessage::protocol_error("unknown span 77")]);
    assert_eq!(e.doc().ids(), ids);
}
