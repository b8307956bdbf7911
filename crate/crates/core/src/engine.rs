//! The coordinator: owns the document, plan, memo table and scheduler, turns
//! client messages into tasks and task results into status messages.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver};

use crate::cancel::CancelToken;
use crate::document::{apply_edits, apply_full_text, DocumentVersion, IdAllocator, SpanId};
use crate::env::{Environment, ProofStatus};
use crate::kernel::Formula;
use crate::protocol::{parse_client_line, AssignedSpan, ClientMessage, QueryStatus, ServerMessage};
use crate::scheduler::{
    Completion, LogEvent, Priority, Scheduler, SchedulerError, Task, PRIORITY_BACKGROUND, PRIORITY_ENV,
    PRIORITY_FOCUS, PRIORITY_QUERY,
};
use crate::stm::{
    check_proof_region, exec_transaction, invalidate, plan, resolve_status, Assignment, Cancelled, EnvResult,
    MemoKey, MemoStore, MemoValue, Plan, RegionResult, SpanState, SpanStatus, StateId,
};
use crate::syntax::Command;
use crate::tactics::{apply_step, initial_proof_state, render_steps, search, StepErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKey {
    Memo(MemoKey),
    Query(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryOutcome {
    Ok(String),
    Failed(String),
    Cancelled,
}

pub enum TaskOutput {
    Env { state: StateId, result: EnvResult },
    Region(Result<RegionResult, Cancelled>),
    Query(QueryOutcome),
}

/// Counts of task executions, for reuse and cancellation checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub env_runs: usize,
    pub region_runs: usize,
    pub query_runs: usize,
    /// Tasks whose token was set by an invalidation or `cancel_query`.
    pub cancellations: usize,
}

struct QueryTask {
    span: SpanId,
    order: usize,
    depth: usize,
    header_parent: StateId,
    header: Command,
    prefix: Vec<Command>,
    token: Option<CancelToken>,
}

/// Reconstructs the proof state before the queried span from the
/// successful prefix of steps and searches for the rest.
pub fn hammer(
    env: &Environment,
    statement: Formula,
    prefix: &[Command],
    depth: usize,
    cancel: &CancelToken,
) -> QueryOutcome {
    let mut state = initial_proof_state(statement);
    for cmd in prefix {
        let Command::Step(step) = cmd else { break };
        match apply_step(&state, step, env, cancel) {
            Ok(next) => state = next,
            Err(e) if e.kind == StepErrorKind::Cancelled => return QueryOutcome::Cancelled,
            Err(_) => break,
        }
    }
    if state.num_goals() == 0 {
        return QueryOutcome::Failed("span has no open goal".into());
    }
    match search(&state, depth, env, cancel) {
        Ok(steps) => QueryOutcome::Ok(render_steps(&steps)),
        Err(e) if e.kind == StepErrorKind::Cancelled => QueryOutcome::Cancelled,
        Err(e) => QueryOutcome::Failed(e.message),
    }
}

pub struct Engine {
    ids: IdAllocator,
    doc: DocumentVersion,
    plan: Plan,
    memo: MemoStore,
    envs: HashMap<StateId, Environment>,
    statuses: Vec<SpanStatus>,
    key_positions: HashMap<MemoKey, Vec<usize>>,
    scheduler: Scheduler<TaskKey, TaskOutput>,
    completions: Receiver<Completion<TaskKey, TaskOutput>>,
    perspective: HashSet<SpanId>,
    queries: BTreeMap<u64, QueryTask>,
    outbox: Vec<ServerMessage>,
    hold_dispatch: bool,
    progress_sent: bool,
    shutdown: bool,
    stats: EngineStats,
}

impl Engine {
    pub fn new(workers: usize) -> Result<Engine, SchedulerError> {
        let (tx, rx) = unbounded();
        let mut scheduler = Scheduler::new(move |c| {
            let _ = tx.send(c);
        });
        scheduler.set_workers(workers)?;
        scheduler.start();
        let mut envs = HashMap::new();
        envs.insert(StateId::initial(), Environment::new());
        Ok(Engine {
            ids: IdAllocator::new(),
            doc: DocumentVersion::empty(),
            plan: Plan::default(),
            memo: MemoStore::new(),
            envs,
            statuses: Vec::new(),
            key_positions: HashMap::new(),
            scheduler,
            completions: rx,
            perspective: HashSet::new(),
            queries: BTreeMap::new(),
            outbox: Vec::new(),
            hold_dispatch: false,
            progress_sent: true,
            shutdown: false,
            stats: EngineStats::default(),
        })
    }

    pub fn doc(&self) -> &DocumentVersion {
        &self.doc
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn memo(&self) -> &MemoStore {
        &self.memo
    }

    pub fn statuses(&self) -> &[SpanStatus] {
        &self.statuses
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn workers(&self) -> usize {
        self.scheduler.workers()
    }

    pub fn scheduler_log(&self) -> &[LogEvent<TaskKey>] {
        self.scheduler.log()
    }

    /// Time since the scheduler started, on the clock of its event log.
    pub fn now(&self) -> Duration {
        self.scheduler.now()
    }

    pub fn completions(&self) -> &Receiver<Completion<TaskKey, TaskOutput>> {
        &self.completions
    }

    pub fn shutdown_requested(&self) -> bool {
        self.shutdown
    }

    pub fn take_outbox(&mut self) -> Vec<ServerMessage> {
        std::mem::take(&mut self.outbox)
    }

    /// No task registered, no query in flight, every span terminal.
    pub fn is_quiescent(&self) -> bool {
        self.scheduler.is_idle()
            && self.queries.is_empty()
            && self.statuses.iter().all(|s| s.state.is_terminal())
    }

    pub fn handle_line(&mut self, line: &str) {
        match parse_client_line(line) {
            Ok(msg) => self.handle(msg),
            Err(reason) => self.outbox.push(ServerMessage::protocol_error(reason)),
        }
    }

    /// Handles several lines as one unit: nothing is dispatched to workers
    /// until the last one has been processed.
    pub fn handle_batch<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) {
        self.hold_dispatch = true;
        for line in lines {
            self.handle_line(line);
        }
        self.hold_dispatch = false;
        self.dispatch();
        self.check_quiescent();
    }

    pub fn handle(&mut self, msg: ClientMessage) {
        if self.shutdown {
            return;
        }
        match msg {
            ClientMessage::FullText { new_version, text } => {
                if new_version <= self.doc.version {
                    return self.error("version mismatch");
                }
                let (next, _) = apply_full_text(&self.doc, &text, &mut self.ids);
                self.set_document(next.with_version(new_version));
            }
            ClientMessage::Update {
                old_version,
                new_version,
                edits,
            } => {
                if old_version != self.doc.version || new_version <= old_version {
                    return self.error("version mismatch");
                }
                match apply_edits(&self.doc, &edits, &mut self.ids) {
                    Ok(next) => self.set_document(next.with_version(new_version)),
                    Err(e) => self.error(e.to_string()),
                }
            }
            ClientMessage::Perspective { version, spans } => {
                if version != self.doc.version {
                    return self.error("version mismatch");
                }
                if let Some(id) = spans.iter().find(|id| self.doc.position(**id).is_none()) {
                    return self.error(format!("unknown span {id}"));
                }
                self.perspective = spans.into_iter().collect();
                let mut prios = HashMap::new();
                for (k, _) in self.scheduler.registered() {
                    prios.insert(*k, self.priority_of(k));
                }
                self.scheduler.reprioritize(|k| prios[k]);
            }
            ClientMessage::Query {
                query_id,
                agent,
                span,
                params,
            } => self.query(query_id, &agent, span, params.depth),
            ClientMessage::CancelQuery { query_id } => self.cancel_query(query_id),
            ClientMessage::Shutdown => self.shutdown = true,
        }
        self.advance();
        self.dispatch();
        self.check_quiescent();
    }

    /// Processes one worker result.
    pub fn on_completion(&mut self, c: Completion<TaskKey, TaskOutput>) {
        self.scheduler.complete(&c.key, c.worker, c.cancelled);
        match (c.key, c.output) {
            (TaskKey::Memo(key), TaskOutput::Env { state, result }) => {
                self.stats.env_runs += 1;
                self.envs.entry(state).or_insert_with(|| result.env.clone());
                self.memo.insert(key, MemoValue::Env(Arc::new(result)));
                self.refresh(key);
            }
            (TaskKey::Memo(key), TaskOutput::Region(Ok(result))) => {
                self.stats.region_runs += 1;
                self.memo.insert(key, MemoValue::Region(Arc::new(result)));
                self.refresh(key);
            }
            (TaskKey::Memo(_), TaskOutput::Region(Err(Cancelled))) => {}
            (TaskKey::Query(id), TaskOutput::Query(outcome)) => {
                self.stats.query_runs += 1;
                if let Some(q) = self.queries.remove(&id) {
                    let cancelled = q.token.is_some_and(|t| t.is_cancelled());
                    let outcome = if cancelled { QueryOutcome::Cancelled } else { outcome };
                    self.query_result(id, outcome);
                }
            }
            (key, _) => unreachable!("mismatched output for {key:?}"),
        }
        self.advance();
        self.dispatch();
        self.check_quiescent();
    }

    /// Blocks on worker results until the current version is quiescent.
    pub fn run_until_quiescent(&mut self) {
        while !self.is_quiescent() {
            assert!(!self.scheduler.is_idle(), "engine stalled with idle scheduler");
            let c = self.completions.recv().expect("workers alive while engine exists");
            self.on_completion(c);
        }
    }

    fn error(&mut self, reason: impl Into<String>) {
        self.outbox.push(ServerMessage::protocol_error(reason));
    }

    fn set_document(&mut self, next: DocumentVersion) {
        let new_plan = plan(&next, &self.memo);
        let registered: Vec<(MemoKey, CancelToken)> = self
            .scheduler
            .registered()
            .filter_map(|(k, t)| match k {
                TaskKey::Memo(m) => Some((*m, t.clone())),
                TaskKey::Query(_) => None,
            })
            .collect();
        for token in invalidate(&new_plan, registered.iter().map(|(k, t)| (k, t))) {
            if token.is_cancelled() {
                continue;
            }
            self.scheduler.cancel(&token);
            self.stats.cancellations += 1;
        }

        let superseded = format!("superseded by version {}", next.version);
        for (pos, st) in self.statuses.iter().enumerate() {
            if !st.state.is_terminal() {
                let c = SpanStatus::cancelled(superseded.clone());
                self.outbox.push(ServerMessage::Status {
                    version: self.doc.version,
                    span: self.doc.spans()[pos].id,
                    state: c.state,
                    messages: c.messages,
                });
            }
        }
        let waiting: Vec<u64> = self
            .queries
            .iter()
            .filter(|(_, q)| q.token.is_none())
            .map(|(id, _)| *id)
            .collect();
        for id in waiting {
            self.queries.remove(&id);
            self.query_result(id, QueryOutcome::Cancelled);
        }

        self.doc = next;
        self.plan = new_plan;
        self.perspective.retain(|id| self.doc.position(*id).is_some());
        self.progress_sent = false;
        self.key_positions.clear();
        for (pos, e) in self.plan.entries.iter().enumerate() {
            if let Assignment::EnvTask(k) = e.assignment {
                self.key_positions.entry(k).or_default().push(pos);
            }
        }
        for r in self.plan.regions.iter().filter(|r| !r.reused) {
            self.key_positions.insert(r.key, r.body.clone().collect());
        }

        self.outbox.push(ServerMessage::Assigned {
            version: self.doc.version,
            spans: self
                .doc
                .spans()
                .iter()
                .map(|s| AssignedSpan {
                    id: s.id,
                    text: s.text.raw.clone(),
                })
                .collect(),
        });

        for r in self.plan.regions.iter().filter(|r| r.reused) {
            let header = self.memo.env(&r.header_key(&self.plan)).and_then(|h| h.lemma.clone());
            if let (Some(lemma), Some(res)) = (header, self.memo.region(&r.key)) {
                lemma.proof_status.set(if res.proved {
                    ProofStatus::Proved
                } else {
                    ProofStatus::Failed
                });
            }
        }

        self.statuses = (0..self.plan.entries.len())
            .map(|pos| {
                resolve_status(&self.doc, &self.plan, &self.memo, pos).unwrap_or_else(|| {
                    let running = self
                        .task_key(pos)
                        .is_some_and(|k| self.scheduler.is_live(&k) && self.scheduler.is_running(&k));
                    if running {
                        SpanStatus::running()
                    } else {
                        SpanStatus::pending()
                    }
                })
            })
            .collect();
        for (pos, st) in self.statuses.iter().enumerate() {
            self.outbox.push(ServerMessage::Status {
                version: self.doc.version,
                span: self.doc.spans()[pos].id,
                state: st.state,
                messages: st.messages.clone(),
            });
        }
    }

    /// Key of the task computing the span at `pos` in the current plan.
    pub fn task_key(&self, pos: usize) -> Option<TaskKey> {
        match self.plan.entries[pos].assignment {
            Assignment::EnvTask(k) => Some(TaskKey::Memo(k)),
            Assignment::RegionTask(r) => Some(TaskKey::Memo(self.plan.regions[r].key)),
            _ => None,
        }
    }

    fn priority_of(&self, key: &TaskKey) -> Priority {
        let focused = |range: std::ops::Range<usize>| {
            range
                .into_iter()
                .any(|p| self.perspective.contains(&self.doc.spans()[p].id))
        };
        match key {
            TaskKey::Query(_) => PRIORITY_QUERY,
            TaskKey::Memo(k @ MemoKey::Env { .. }) => match self.key_positions.get(k) {
                Some(ps) if ps.iter().any(|&p| focused(p..p + 1)) => PRIORITY_FOCUS,
                _ => PRIORITY_ENV,
            },
            TaskKey::Memo(k @ MemoKey::Region { .. }) => {
                match self.plan.regions.iter().find(|r| r.key == *k) {
                    Some(r) if focused(r.spans()) => PRIORITY_FOCUS,
                    _ => PRIORITY_BACKGROUND,
                }
            }
        }
    }

    /// Submits every task whose inputs are available.
    fn advance(&mut self) {
        let mut tasks: Vec<Task<TaskKey, TaskOutput>> = Vec::new();
        for (pos, entry) in self.plan.entries.iter().enumerate() {
            match &entry.assignment {
                Assignment::Reused(k) | Assignment::EnvTask(k) if matches!(k, MemoKey::Env { .. }) => {
                    if let Some(r) = self.memo.env(k) {
                        self.envs.entry(entry.state).or_insert_with(|| r.env.clone());
                    } else if let Some(env) = self.envs.get(&entry.parent) {
                        let key = TaskKey::Memo(*k);
                        if !self.scheduler.is_registered(&key) {
                            let env = env.clone();
                            let cmd = self.doc.spans()[pos].command.clone();
                            let state = entry.state;
                            tasks.push(Task::new(key, self.priority_of(&key), pos, move |_| TaskOutput::Env {
                                state,
                                result: exec_transaction(&env, &cmd),
                            }));
                        }
                    }
                }
                Assignment::Rejected(_) => {
                    if let Some(env) = self.envs.get(&entry.parent) {
                        let env = env.clone();
                        self.envs.entry(entry.state).or_insert(env);
                    }
                }
                Assignment::RegionTask(r) if self.plan.regions[*r].body.start == pos => {
                    let region = &self.plan.regions[*r];
                    let key = TaskKey::Memo(region.key);
                    if self.memo.contains(&region.key) || self.scheduler.is_registered(&key) {
                        continue;
                    }
                    let header = self.memo.env(&region.header_key(&self.plan));
                    let env = self.envs.get(&region.header_parent(&self.plan));
                    if let (Some(header), Some(env)) = (header, env) {
                        let lemma = header.lemma.clone().expect("region header is a lemma");
                        let env = env.clone();
                        let body: Vec<Command> = self.doc.spans()[region.body.clone()]
                            .iter()
                            .map(|s| s.command.clone())
                            .collect();
                        tasks.push(Task::new(key, self.priority_of(&key), pos, move |tok| {
                            TaskOutput::Region(check_proof_region(&env, &lemma, &body, tok))
                        }));
                    }
                }
                _ => {}
            }
        }
        for (id, q) in self.queries.iter_mut() {
            if q.token.is_some() {
                continue;
            }
            let Some(env) = self.envs.get(&q.header_parent) else { continue };
            let Command::LemmaHeader { statement, .. } = &q.header else {
                unreachable!("query header is a lemma")
            };
            let env = env.clone();
            let statement = env.expand(statement);
            let prefix = std::mem::take(&mut q.prefix);
            let depth = q.depth;
            let task = Task::new(TaskKey::Query(*id), PRIORITY_QUERY, q.order, move |tok| {
                TaskOutput::Query(hammer(&env, statement, &prefix, depth, tok))
            });
            q.token = Some(task.cancel.clone());
            tasks.push(task);
        }
        for t in tasks {
            self.scheduler.submit(t).expect("advance only submits unregistered keys");
        }
    }

    fn dispatch(&mut self) {
        if self.hold_dispatch {
            return;
        }
        for (key, _) in self.scheduler.dispatch() {
            let TaskKey::Memo(k) = key else { continue };
            let Some(ps) = self.key_positions.get(&k) else { continue };
            for pos in ps.clone() {
                if self.statuses[pos].state == SpanState::Pending {
                    self.emit_status(pos, SpanStatus::running());
                }
            }
        }
    }

    /// Emits terminal statuses for the current-version spans computed by `key`.
    fn refresh(&mut self, key: MemoKey) {
        let Some(ps) = self.key_positions.get(&key).cloned() else { return };
        for pos in ps {
            if let Some(st) = resolve_status(&self.doc, &self.plan, &self.memo, pos) {
                self.emit_status(pos, st);
            }
        }
    }

    fn emit_status(&mut self, pos: usize, st: SpanStatus) {
        let cur = &self.statuses[pos];
        if *cur == st || cur.state.is_terminal() {
            return;
        }
        self.outbox.push(ServerMessage::Status {
            version: self.doc.version,
            span: self.doc.spans()[pos].id,
            state: st.state,
            messages: st.messages.clone(),
        });
        self.statuses[pos] = st;
    }

    fn check_quiescent(&mut self) {
        if self.progress_sent || self.hold_dispatch || !self.is_quiescent() {
            return;
        }
        self.progress_sent = true;
        let count = |s: SpanState| self.statuses.iter().filter(|x| x.state == s).count();
        self.outbox.push(ServerMessage::Progress {
            version: self.doc.version,
            total: self.statuses.len(),
            finished: count(SpanState::Finished),
            failed: count(SpanState::Failed),
            cancelled: count(SpanState::Cancelled),
        });
    }

    fn query_result(&mut self, query_id: u64, outcome: QueryOutcome) {
        let (status, suggestion) = match outcome {
            QueryOutcome::Ok(s) => (QueryStatus::Ok, s),
            QueryOutcome::Failed(s) => (QueryStatus::Failed, s),
            QueryOutcome::Cancelled => (QueryStatus::Cancelled, String::new()),
        };
        self.outbox.push(ServerMessage::QueryResult {
            query_id,
            status,
            suggestion,
        });
    }

    fn query(&mut self, query_id: u64, agent: &str, span: SpanId, depth: u32) {
        if query_id == 0 {
            return self.error("query id must be positive");
        }
        if self.queries.contains_key(&query_id) {
            return self.error(format!("duplicate query id {query_id}"));
        }
        if agent != "hammer" {
            return self.error(format!("unknown agent {agent}"));
        }
        let Some(pos) = self.doc.position(span) else {
            return self.error(format!("unknown span {span}"));
        };
        let region = self.plan.entries[pos]
            .region
            .map(|r| &self.plan.regions[r])
            .filter(|r| pos > r.body.start);
        let Some(region) = region else {
            return self.query_result(query_id, QueryOutcome::Failed("span has no open goal".into()));
        };
        let prefix = self.doc.spans()[region.body.start + 1..pos]
            .iter()
            .map(|s| s.command.clone())
            .collect();
        let q = QueryTask {
            span,
            order: pos,
            depth: depth as usize,
            header_parent: region.header_parent(&self.plan),
            header: self.doc.spans()[region.header].command.clone(),
            prefix,
            token: None,
        };
        self.queries.insert(query_id, q);
    }

    fn cancel_query(&mut self, query_id: u64) {
        let Some(q) = self.queries.get(&query_id) else {
            return self.error(format!("unknown query {query_id}"));
        };
        match q.token.clone() {
            None => {
                self.queries.remove(&query_id);
                self.query_result(query_id, QueryOutcome::Cancelled);
            }
            Some(token) => {
                if token.is_cancelled() {
                    return;
                }
                self.stats.cancellations += 1;
                if !self.scheduler.cancel(&token).is_empty() {
                    self.queries.remove(&query_id);
                    self.query_result(query_id, QueryOutcome::Cancelled);
                }
            }
        }
    }

    /// Span a query in flight refers to.
    pub fn query_span(&self, query_id: u64) -> Option<SpanId> {
        self.queries.get(&query_id).map(|q| q.span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(engine: &mut Engine, lines: &[&str]) -> Vec<ServerMessage> {
        engine.handle_batch(lines.iter().copied());
        engine.run_until_quiescent();
        engine.take_outbox()
    }

    fn terminal(msgs: &[ServerMessage], version: u64) -> Vec<SpanState> {
        let mut last: BTreeMap<SpanId, SpanState> = BTreeMap::new();
        for m in msgs {
            if let ServerMessage::Status {
                version: v, span, state, ..
            } = m
            {
                if *v == version {
                    last.insert(*span, *state);
                }
            }
        }
        last.into_values().collect()
    }

    #[test]
    fn full_text_reaches_quiescence() {
        let mut e = Engine::new(2).unwrap();
        let msgs = run(
            &mut e,
            &[r#"{"type":"full_text","new_version":1,"text":"def a := p. lemma I : a -> a. proof. intro h. exact h. qed."}"#],
        );
        assert!(matches!(&msgs[0], ServerMessage::Assigned { version: 1, spans } if spans.len() == 6));
        assert_eq!(terminal(&msgs, 1), vec![SpanState::Finished; 6]);
        assert!(matches!(
            msgs.last(),
            Some(ServerMessage::Progress { version: 1, total: 6, finished: 6, .. })
        ));
        assert_eq!(e.stats().region_runs, 1);
    }

    #[test]
    fn version_errors_leave_state() {
        let mut e = Engine::new(1).unwrap();
        run(&mut e, &[r#"{"type":"full_text","new_version":3,"text":"def a := p."}"#]);
        let msgs = run(
            &mut e,
            &[r#"{"type":"update","old_version":2,"new_version":4,"edits":[]}"#],
        );
        assert_eq!(msgs, vec![ServerMessage::protocol_error("version mismatch")]);
        assert_eq!(e.doc().version, 3);
        let msgs = run(&mut e, &[r#"{"type":"update","old_version":3,"new_version":4,"edits":[{"op":"remove","id":99}]}"#]);
        assert_eq!(msgs, vec![ServerMessage::protocol_error("unknown span 99")]);
    }

    #[test]
    fn hammer_suggests_and_fails() {
        let mut e = Engine::new(1).unwrap();
        run(
            &mut e,
            &[r#"{"type":"full_text","new_version":1,"text":"lemma I : p -> p. proof. qed. lemma J : p -> q. proof. qed."}"#],
        );
        let ids = e.doc().ids();
        let q1 = format!(r#"{{"type":"query","query_id":1,"agent":"hammer","span":{},"params":{{"depth":3}}}}"#, ids[2].0);
        let q2 = format!(r#"{{"type":"query","query_id":2,"agent":"hammer","span":{},"params":{{"depth":3}}}}"#, ids[5].0);
        let q3 = format!(r#"{{"type":"query","query_id":3,"agent":"hammer","span":{}}}"#, ids[0].0);
        let msgs = run(&mut e, &[&q1, &q2, &q3]);
        let results: BTreeMap<u64, (QueryStatus, String)> = msgs
            .into_iter()
            .filter_map(|m| match m {
                ServerMessage::QueryResult {
                    query_id,
                    status,
                    suggestion,
                } => Some((query_id, (status, suggestion))),
                _ => None,
            })
            .collect();
        assert_eq!(results[&1], (QueryStatus::Ok, "intro h1. exact h1.".to_string()));
        assert_eq!(results[&2].0, QueryStatus::Failed);
        assert_eq!(results[&3].0, QueryStatus::Failed);
    }

    #[test]
    fn cancel_before_dispatch() {
        let mut e = Engine::new(1).unwrap();
        run(&mut e, &[r#"{"type":"full_text","new_version":1,"text":"lemma I : p -> p. proof. qed."}"#]);
        let id = e.doc().ids()[2].0;
        let q = format!(r#"{{"type":"query","query_id":7,"agent":"hammer","span":{id}}}"#);
        let msgs = run(&mut e, &[&q, r#"{"type":"cancel_query","query_id":7}"#]);
        assert_eq!(
            msgs,
            vec![ServerMessage::QueryResult {
                query_id: 7,
                status: QueryStatus::Cancelled,
                suggestion: String::new()
            }]
        );
        let msgs = run(&mut e, &[r#"{"type":"cancel_query","query_id":7}"#]);
        assert_eq!(msgs, vec![ServerMessage::protocol_error("unknown query 7")]);
    }
}
