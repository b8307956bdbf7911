//! Generators and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use proofdoc::cancel::CancelToken;
use proofdoc::document::{DocumentVersion, Edit, SpanId};
use proofdoc::engine::Engine;
use proofdoc::env::Environment;
use proofdoc::kernel::Formula;
use proofdoc::protocol::{ClientMessage, ServerMessage};
use proofdoc::stm::{SpanState, SpanStatus};
use proofdoc::syntax::ProofStep;
use proofdoc::tactics::{apply_step, ProofState, StepErrorKind};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub const ATOMS: [&str; 6] = ["p", "q", "r", "s", "t", "u"];

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus dir")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "prf"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).expect("read corpus file"))
        })
        .collect();
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Formulas

pub fn random_formula(rng: &mut StdRng, atoms: usize, depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        return if rng.gen_bool(0.05) {
            Formula::False
        } else {
            Formula::atom(ATOMS[rng.gen_range(0..atoms)])
        };
    }
    let a = random_formula(rng, atoms, depth - 1);
    match rng.gen_range(0..4) {
        0 => Formula::not(a),
        1 => Formula::and(a, random_formula(rng, atoms, depth - 1)),
        2 => Formula::or(a, random_formula(rng, atoms, depth - 1)),
        _ => Formula::imp(a, random_formula(rng, atoms, depth - 1)),
    }
}

// ---------------------------------------------------------------------------
// Reference IDDFS, written directly from the search contract: candidates in
// canonical order, each tried through `apply_step`, depth = total steps.

fn oracle_fresh(hyps: &[(std::sync::Arc<str>, Formula)]) -> String {
    (1..)
        .map(|i| format!("h{i}"))
        .find(|n| hyps.iter().all(|(h, _)| &**h != n.as_str()))
        .unwrap()
}

fn oracle_candidates(state: &ProofState, env: &Environment) -> Vec<ProofStep> {
    let goal = state.goals().next().expect("open goal");
    let mut out = Vec::new();
    let hyp_names: Vec<&str> = goal.hyps.iter().map(|(n, _)| &**n).collect();
    let env_names: Vec<String> = env.facts().map(|f| f.name.to_string()).collect();
    for n in &hyp_names {
        out.push(ProofStep::Exact((*n).into()));
    }
    for n in &env_names {
        out.push(ProofStep::Exact(n.as_str().into()));
    }
    out.push(ProofStep::Intro(oracle_fresh(&goal.hyps).into()));
    for n in &hyp_names {
        out.push(ProofStep::Apply((*n).into()));
    }
    for n in &env_names {
        out.push(ProofStep::Apply(n.as_str().into()));
    }
    out.push(ProofStep::Split);
    out.push(ProofStep::Left);
    out.push(ProofStep::Right);
    for n in &hyp_names {
        out.push(ProofStep::Cases((*n).into()));
    }
    out.push(ProofStep::Exfalso);
    let neg = Formula::imp(goal.target.clone(), Formula::False);
    if !goal.hyps.iter().any(|(_, f)| *f == neg) {
        out.push(ProofStep::ByContra(oracle_fresh(&goal.hyps).into()));
    }
    out
}

fn oracle_dfs(state: &ProofState, budget: usize, env: &Environment, path: &mut Vec<ProofStep>) -> bool {
    if state.num_goals() == 0 {
        return true;
    }
    if budget == 0 {
        return false;
    }
    let never = CancelToken::new();
    for step in oracle_candidates(state, env) {
        match apply_step(state, &step, env, &never) {
            Ok(next) => {
                path.push(step);
                if oracle_dfs(&next, budget - 1, env, path) {
                    return true;
                }
                path.pop();
            }
            Err(e) => assert_ne!(e.kind, StepErrorKind::Cancelled),
        }
    }
    false
}

/// First solution in canonical order with at most `depth` steps.
pub fn reference_search(state: &ProofState, depth: usize, env: &Environment) -> Option<Vec<ProofStep>> {
    for limit in 1..=depth {
        let mut path = Vec::new();
        if oracle_dfs(state, limit, env, &mut path) {
            return Some(path);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Documents and edit scripts

fn formula_text(rng: &mut StdRng, atoms: usize) -> String {
    random_formula(rng, atoms, 3).to_string()
}

fn comment(rng: &mut StdRng) -> &'static str {
    ["", "", "", "(* note *) ", "(* a. b (* nested. *) *) "][rng.gen_range(0..5)]
}

/// One or more complete, terminated commands.
pub fn random_chunk(rng: &mut StdRng, atoms: usize, names: &mut usize) -> String {
    let c = comment(rng);
    let fresh = |names: &mut usize| {
        *names += 1;
        format!("l{names}")
    };
    match rng.gen_range(0..20) {
        0..=2 => format!("{c}def {} := {}.", fresh(names), formula_text(rng, atoms)),
        3..=12 => {
            let name = if rng.gen_bool(0.08) {
                "l1".to_string()
            } else {
                fresh(names)
            };
            let (stmt, body) = match rng.gen_range(0..6) {
                0 => {
                    let a = ATOMS[rng.gen_range(0..atoms)];
                    (format!("{a} -> {a}"), "intro h. exact h.".to_string())
                }
                1 => {
                    let a = formula_text(rng, atoms);
                    (format!("({a}) -> ({a})"), format!("search {}.", rng.gen_range(1..4)))
                }
                2 => (formula_text(rng, atoms), format!("search {}.", rng.gen_range(1..4))),
                3 => {
                    let a = ATOMS[rng.gen_range(0..atoms)];
                    let b = ATOMS[rng.gen_range(0..atoms)];
                    (format!("{a} /\\ {b} -> {b} /\\ {a}"), "intro h. cases h. split. exact h2. exact h1.".into())
                }
                4 => (formula_text(rng, atoms), "intro h. exact h.".into()),
                _ => {
                    let cited = format!("l{}", rng.gen_range(1..=(*names).max(1)));
                    (format!("{} -> q", ATOMS[rng.gen_range(0..atoms)]), format!("intro h. apply {cited}. exact h."))
                }
            };
            format!("{c}lemma {name} : {stmt}.\nproof. {body} qed.")
        }
        13 => format!("{c}lemma {} : p.", fresh(names)),
        14 => "qed.".into(),
        15 => "intro h.".into(),
        16 => "def := p.".into(),
        17 => format!("lemma {} : p -> .", fresh(names)),
        18 => "(* stray *) proof.".into(),
        _ => {
            let a = ATOMS[rng.gen_range(0..atoms)];
            format!("lemma {} : {a} -> {a}.\nproof. intro h. {}exact h. qed.", fresh(names), comment(rng))
        }
    }
}

pub fn random_document(rng: &mut StdRng, max_spans: usize, atoms: usize, names: &mut usize) -> String {
    let mut text = String::new();
    let mut spans = 0;
    while spans < max_spans {
        let chunk = random_chunk(rng, atoms, names);
        let n = proofdoc::syntax::split_spans(&chunk).len();
        if spans + n > max_spans {
            if spans == 0 {
                continue;
            }
            break;
        }
        spans += n;
        text.push_str(&chunk);
        text.push('\n');
        if rng.gen_bool(0.15) {
            break;
        }
    }
    text
}

/// A random edit batch against `v`; every referenced id exists in `v`.
pub fn random_edits(rng: &mut StdRng, v: &DocumentVersion, atoms: usize, names: &mut usize) -> Vec<Edit> {
    let mut ids: Vec<SpanId> = v.ids();
    let mut edits = Vec::new();
    for _ in 0..rng.gen_range(1..4) {
        let op = rng.gen_range(0..3);
        if ids.is_empty() || op == 0 {
            let anchor = if ids.is_empty() || rng.gen_bool(0.2) {
                SpanId::START
            } else {
                *ids.choose(rng).unwrap()
            };
            edits.push(Edit::InsertAfter {
                anchor,
                text: random_chunk(rng, atoms, names),
            });
            // New ids are unknown to the client until `assigned`.
        } else if op == 1 {
            let i = rng.gen_range(0..ids.len());
            edits.push(Edit::Remove { id: ids.remove(i) });
        } else {
            let i = rng.gen_range(0..ids.len());
            let id = ids.remove(i);
            let text = if rng.gen_bool(0.5) {
                // Small perturbation of a single command.
                let raw = &v.get(id).unwrap().text.raw;
                match rng.gen_range(0..3) {
                    0 => format!("(* edited *) {raw}"),
                    1 => raw.replace("exact h.", "exact g."),
                    _ => raw.replace('p', "q"),
                }
            } else {
                random_chunk(rng, atoms, names)
            };
            edits.push(Edit::Replace { id, text });
        }
    }
    edits
}

// ---------------------------------------------------------------------------
// Engine helpers

pub fn full_text(version: u64, text: &str) -> ClientMessage {
    ClientMessage::FullText {
        new_version: version,
        text: text.to_string(),
    }
}

/// Last status per span of `version`, in the order spans were first seen.
pub fn last_statuses(msgs: &[ServerMessage], version: u64) -> BTreeMap<SpanId, SpanStatus> {
    let mut out = BTreeMap::new();
    for m in msgs {
        if let ServerMessage::Status {
            version: v,
            span,
            state,
            messages,
        } = m
        {
            if *v == version {
                out.insert(
                    *span,
                    SpanStatus {
                        state: *state,
                        messages: messages.clone(),
                    },
                );
            }
        }
    }
    out
}

/// Checks that statuses per (version, span) only move forward.
pub fn assert_monotone(msgs: &[ServerMessage]) {
    let rank = |s: SpanState| match s {
        SpanState::Pending => 0,
        SpanState::Running => 1,
        _ => 2,
    };
    let mut seen: BTreeMap<(u64, SpanId), SpanState> = BTreeMap::new();
    for m in msgs {
        if let ServerMessage::Status {
            version, span, state, ..
        } = m
        {
            if let Some(prev) = seen.get(&(*version, *span)) {
                assert!(
                    rank(*state) > rank(*prev),
                    "non-monotone status for span {span} of version {version}: {prev:?} -> {state:?}"
                );
            }
            seen.insert((*version, *span), *state);
        }
    }
}

pub fn run_quiescent(engine: &mut Engine, msg: ClientMessage) -> Vec<ServerMessage> {
    engine.handle(msg);
    engine.run_until_quiescent();
    engine.take_outbox()
}

/// Every version announced by `assigned` ends with a terminal status for
/// each of its spans.
pub fn assert_all_versions_terminal(msgs: &[ServerMessage]) {
    for m in msgs {
        if let ServerMessage::Assigned { version, spans } = m {
            let last = last_statuses(msgs, *version);
            for s in spans {
                let st = last.get(&s.id).unwrap_or_else(|| panic!("no status for span {} of version {version}", s.id));
                assert!(st.state.is_terminal(), "span {} of version {version} ended {:?}", s.id, st.state);
            }
        }
    }
}

pub struct Scenario {
    pub final_text: String,
    pub statuses: Vec<SpanStatus>,
    pub messages: Vec<ServerMessage>,
    pub versions: u64,
}

/// Drives an engine through a random document and random edit batches,
/// interleaving worker results at random points.
pub fn run_scenario(seed: u64, workers: usize, max_spans: usize, max_batches: usize, atoms: usize) -> Scenario {
    let mut rng = <StdRng as rand::SeedableRng>::seed_from_u64(seed);
    let mut names = 0;
    let mut engine = Engine::new(workers).expect("engine");
    let mut msgs = Vec::new();
    let mut version = 1;
    let mut next_query = 1;
    engine.handle(full_text(version, &random_document(&mut rng, max_spans, atoms, &mut names)));
    let batches = rng.gen_range(0..=max_batches);
    for _ in 0..batches {
        match rng.gen_range(0..3) {
            0 => engine.run_until_quiescent(),
            1 => loop {
                let c = engine.completions().try_recv();
                match c {
                    Ok(c) => engine.on_completion(c),
                    Err(_) => break,
                }
            },
            _ => {}
        }
        msgs.extend(engine.take_outbox());
        let doc = engine.doc().clone();
        if rng.gen_bool(0.2) && !doc.spans().is_empty() {
            let ids = doc.ids();
            let span = *ids.choose(&mut rng).unwrap();
            engine.handle(ClientMessage::Query {
                query_id: next_query,
                agent: "hammer".into(),
                span,
                params: proofdoc::protocol::QueryParams { depth: 3 },
            });
            if rng.gen_bool(0.5) {
                engine.handle(ClientMessage::CancelQuery { query_id: next_query });
            }
            next_query += 1;
        }
        if rng.gen_bool(0.2) && !doc.spans().is_empty() {
            let ids = doc.ids();
            let spans = ids.choose_multiple(&mut rng, 3).copied().collect();
            engine.handle(ClientMessage::Perspective { version, spans });
        }
        if rng.gen_bool(0.25) {
            // Whole-text edit, as the frontend sends it.
            let mut text = doc.text();
            if rng.gen_bool(0.5) {
                text = text.replacen("proof.", "proof. (* c *)", 1);
            } else {
                text.push_str(&random_chunk(&mut rng, atoms, &mut names));
            }
            engine.handle(full_text(version + 1, &text));
        } else {
            let edits = random_edits(&mut rng, &doc, atoms, &mut names);
            engine.handle(ClientMessage::Update {
                old_version: version,
                new_version: version + 1,
                edits,
            });
        }
        version += 1;
    }
    engine.run_until_quiescent();
    msgs.extend(engine.take_outbox());
    Scenario {
        final_text: engine.doc().text(),
        statuses: engine.statuses().to_vec(),
        messages: msgs,
        versions: version,
    }
}

/// Compares a scenario's final statuses with a from-scratch check.
pub fn check_against_batch(s: &Scenario) -> Result<(), String> {
    let fresh = proofdoc::document::init_document(&s.final_text, &mut proofdoc::document::IdAllocator::new());
    let (expected, _, _) = proofdoc::stm::batch_check(&fresh);
    if expected != s.statuses {
        let diff = expected
            .iter()
            .zip(&s.statuses)
            .enumerate()
            .find(|(_, (a, b))| a != b)
            .map(|(i, (a, b))| format!("span {i}: batch {a:?} vs incremental {b:?}"))
            .unwrap_or_else(|| format!("{} vs {} spans", expected.len(), s.statuses.len()));
        return Err(diff);
    }
    Ok(())
}
