//! Batch checking and the dn(n) benchmark behind the `check` and `bench`
//! subcommands.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::document::SpanId;
use crate::engine::Engine;
use crate::protocol::ClientMessage;
use crate::scheduler::{LogKind, SchedulerError};
use crate::stm::{Message, SpanState};
use crate::syntax::{lex, normalize_text, Command};

#[derive(Clone, Debug, Serialize)]
pub struct SpanReport {
    pub id: SpanId,
    pub line: usize,
    pub text: String,
    pub state: SpanState,
    pub messages: Vec<Message>,
    /// Run time of the task that produced the status.
    pub ms: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub name: String,
    pub proved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub workers: usize,
    pub spans: Vec<SpanReport>,
    pub lemmas: Vec<LemmaReport>,
    pub wall_ms: f64,
    /// Every span finished and every lemma proved.
    pub ok: bool,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn load(engine: &mut Engine, text: &str) {
    engine.handle(ClientMessage::FullText {
        new_version: 1,
        text: text.to_string(),
    });
    engine.run_until_quiescent();
}

/// Checks `text` from scratch with `workers` workers.
pub fn check_text(text: &str, workers: usize) -> Result<CheckReport, SchedulerError> {
    let mut engine = Engine::new(workers)?;
    let start = Instant::now();
    load(&mut engine, text);
    let wall = start.elapsed();

    let mut started = HashMap::new();
    let mut ran = HashMap::new();
    for ev in engine.scheduler_log() {
        match &ev.kind {
            LogKind::Dispatch { key, .. } => {
                started.insert(*key, ev.at);
            }
            LogKind::Complete { key, .. } => {
                if let Some(t0) = started.get(key) {
                    ran.insert(*key, ev.at - *t0);
                }
            }
            _ => {}
        }
    }

    let doc = engine.doc();
    let full = doc.text();
    let spans = doc
        .spans()
        .iter()
        .zip(engine.statuses())
        .enumerate()
        .map(|(pos, (s, st))| SpanReport {
            id: s.id,
            line: {
                let first = lex(&s.text.raw).first().map_or(0, |t| t.offset);
                full[..s.text.start + first].matches('\n').count() + 1
            },
            text: normalize_text(&s.text.raw),
            state: st.state,
            messages: st.messages.clone(),
            ms: engine
                .task_key(pos)
                .and_then(|k| ran.get(&k))
                .map(|d| ms(*d)),
        })
        .collect::<Vec<_>>();
    let plan = engine.plan();
    let lemmas = plan
        .regions
        .iter()
        .map(|r| {
            let name = match &doc.spans()[r.header].command {
                Command::LemmaHeader { name, .. } => name.to_string(),
                other => unreachable!("region header {other:?}"),
            };
            let proved = engine.memo().region(&r.key).is_some_and(|res| res.proved);
            LemmaReport { name, proved }
        })
        .collect::<Vec<_>>();
    let ok = spans.iter().all(|s| s.state == SpanState::Finished) && lemmas.iter().all(|l| l.proved);
    Ok(CheckReport {
        workers,
        spans,
        lemmas,
        wall_ms: ms(wall),
        ok,
    })
}

impl CheckReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.spans {
            let state = serde_json::to_value(s.state).expect("state serializes");
            let _ = write!(out, "{:>4}  {:<9}  {}", s.line, state.as_str().unwrap_or("?"), s.text);
            for m in &s.messages {
                let _ = write!(out, "  -- {}", m.text);
            }
            out.push('\n');
        }
        let count = |st: SpanState| self.spans.iter().filter(|s| s.state == st).count();
        let _ = writeln!(
            out,
            "{} spans: {} finished, {} failed, {} cancelled; {}/{} lemmas proved; {:.1} ms",
            self.spans.len(),
            count(SpanState::Finished),
            count(SpanState::Failed),
            count(SpanState::Cancelled),
            self.lemmas.iter().filter(|l| l.proved).count(),
            self.lemmas.len(),
            self.wall_ms,
        );
        out
    }
}

/// `k` lemmas `~^{2n} p_i -> p_i`, each closed by `search (2n+2)`. Every
/// lemma gets its own atom so that search cannot shortcut through an earlier one.
pub fn dn_document(k: usize, n: usize) -> String {
    let negs = "~".repeat(2 * n);
    (1..=k)
        .map(|i| format!("lemma dn{i} : {negs}p{i} -> p{i}.\nproof. search {}. qed.\n", 2 * n + 2))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub workers: usize,
    pub lemmas: usize,
    pub wall_ms: f64,
    pub cpu_ms: f64,
    #[serde(skip)]
    pub proved: usize,
}

/// User plus system CPU time of this process.
pub fn process_cpu_time() -> Duration {
    // SAFETY: getrusage only writes into the zeroed struct we pass.
    let usage = unsafe {
        let mut usage: libc::rusage = std::mem::zeroed();
        libc::getrusage(libc::RUSAGE_SELF, &mut usage);
        usage
    };
    let tv = |t: libc::timeval| Duration::new(t.tv_sec as u64, t.tv_usec as u32 * 1000);
    tv(usage.ru_utime) + tv(usage.ru_stime)
}

pub fn bench(lemmas: usize, neg: usize, workers: usize) -> Result<BenchReport, SchedulerError> {
    let text = dn_document(lemmas, neg);
    let mut engine = Engine::new(workers)?;
    let cpu0 = process_cpu_time();
    let start = Instant::now();
    load(&mut engine, &text);
    let wall = start.elapsed();
    let cpu = process_cpu_time() - cpu0;
    let proved = engine
        .plan()
        .regions
        .iter()
        .filter(|r| engine.memo().region(&r.key).is_some_and(|res| res.proved))
        .count();
    Ok(BenchReport {
        workers,
        lemmas,
        wall_ms: ms(wall),
        cpu_ms: ms(cpu),
        proved,
    })
}
