//! State-transaction machine.
//!
//! Prover states are identified by a hash chain over the environment effects
//! of the commands leading to them. Proof bodies do not contribute to the
//! chain, so editing a proof never changes a downstream `StateId`. Results
//! are memoized under content-addressed keys:
//!
//! * environment transactions under `(parent StateId, normalized span hash)`,
//! * proof regions under `(StateId after the lemma header, body hash)`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cancel::CancelToken;
use crate::document::{DocumentVersion, SpanId};
use crate::env::{Environment, Fact, FactKind, ProofStatus};
use crate::hash::Digest;
use crate::kernel::{Formula, Thm};
use crate::syntax::Command;
use crate::tactics::{apply_step, initial_proof_state, replay, StepErrorKind};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub Digest);

impl StateId {
    pub fn initial() -> StateId {
        StateId(Digest::of(b"init"))
    }

    pub fn advance(self, effect: EffectHash) -> StateId {
        StateId(Digest::of_fields([&self.0 .0[..], &effect.0 .0[..]]))
    }
}

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{:?}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct EffectHash(pub Digest);

impl EffectHash {
    pub fn none() -> EffectHash {
        EffectHash(Digest::of_fields(["none"]))
    }

    pub fn error(norm_hash: &Digest) -> EffectHash {
        EffectHash(Digest::of_fields([&b"error"[..], &norm_hash.0[..]]))
    }

    /// Effect of a command on the environment. A lemma's effect is its
    /// statement alone; its proof is not part of it.
    pub fn of(command: &Command, norm_hash: &Digest) -> EffectHash {
        match command {
            Command::Def { name, body } => {
                EffectHash(Digest::of_fields(["def", name, &body.to_string()]))
            }
            Command::LemmaHeader { name, statement } => {
                EffectHash(Digest::of_fields(["lemma", name, &statement.to_string()]))
            }
            Command::SyntaxError { .. } => EffectHash::error(norm_hash),
            Command::ProofOpen | Command::Step(_) | Command::Qed => EffectHash::none(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum MemoKey {
    Env { parent: StateId, norm: Digest },
    Region { header: StateId, body: Digest },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanState {
    Pending,
    Running,
    Finished,
    Failed,
    Cancelled,
}

impl SpanState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SpanState::Finished | SpanState::Failed | SpanState::Cancelled)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub severity: Severity,
    pub text: String,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpanStatus {
    pub state: SpanState,
    pub messages: Vec<Message>,
}

impl SpanStatus {
    pub fn pending() -> SpanStatus {
        SpanStatus::bare(SpanState::Pending)
    }

    pub fn running() -> SpanStatus {
        SpanStatus::bare(SpanState::Running)
    }

    pub fn finished() -> SpanStatus {
        SpanStatus::bare(SpanState::Finished)
    }

    fn bare(state: SpanState) -> SpanStatus {
        SpanStatus {
            state,
            messages: Vec::new(),
        }
    }

    pub fn with(state: SpanState, severity: Severity, text: impl Into<String>, offset: usize) -> SpanStatus {
        SpanStatus {
            state,
            messages: vec![Message {
                severity,
                text: text.into(),
                offset,
            }],
        }
    }

    pub fn failed(text: impl Into<String>) -> SpanStatus {
        SpanStatus::with(SpanState::Failed, Severity::Error, text, 0)
    }

    pub fn cancelled(text: impl Into<String>) -> SpanStatus {
        SpanStatus::with(SpanState::Cancelled, Severity::Info, text, 0)
    }
}

#[derive(Clone, Debug)]
pub struct EnvResult {
    pub env: Environment,
    pub status: SpanStatus,
    /// The fact a lemma header introduces (also present when the name was
    /// taken and the environment was left unchanged).
    pub lemma: Option<Fact>,
}

#[derive(Clone, Debug)]
pub struct RegionResult {
    /// One status per region span, from `proof` to `qed`.
    pub statuses: Vec<SpanStatus>,
    pub proved: bool,
    pub thm: Option<Thm>,
}

#[derive(Clone, Debug)]
pub enum MemoValue {
    Env(Arc<EnvResult>),
    Region(Arc<RegionResult>),
}

/// Unbounded content-addressed result store for one session.
#[derive(Clone, Debug, Default)]
pub struct MemoStore {
    entries: HashMap<MemoKey, MemoValue>,
}

impl MemoStore {
    pub fn new() -> MemoStore {
        MemoStore::default()
    }

    pub fn contains(&self, key: &MemoKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &MemoKey) -> Option<&MemoValue> {
        self.entries.get(key)
    }

    pub fn env(&self, key: &MemoKey) -> Option<&Arc<EnvResult>> {
        match self.entries.get(key) {
            Some(MemoValue::Env(r)) => Some(r),
            _ => None,
        }
    }

    pub fn region(&self, key: &MemoKey) -> Option<&Arc<RegionResult>> {
        match self.entries.get(key) {
            Some(MemoValue::Region(r)) => Some(r),
            _ => None,
        }
    }

    pub fn insert(&mut self, key: MemoKey, value: MemoValue) {
        self.entries.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assignment {
    /// Result is taken from the memo store under this key.
    Reused(MemoKey),
    EnvTask(MemoKey),
    /// Index into `Plan::regions`.
    RegionTask(usize),
    /// Structural violation: failed without running anything.
    Rejected(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanEntry {
    pub id: SpanId,
    pub parent: StateId,
    pub state: StateId,
    pub assignment: Assignment,
    /// Region this span belongs to, header included.
    pub region: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionPlan {
    pub key: MemoKey,
    /// Position of the lemma header.
    pub header: usize,
    /// Positions of `proof` .. `qed`.
    pub body: Range<usize>,
    pub body_hash: Digest,
    pub reused: bool,
}

impl RegionPlan {
    pub fn header_parent(&self, plan: &Plan) -> StateId {
        plan.entries[self.header].parent
    }

    pub fn header_key(&self, plan: &Plan) -> MemoKey {
        match &plan.entries[self.header].assignment {
            Assignment::Reused(k) | Assignment::EnvTask(k) => *k,
            other => unreachable!("region header assigned {other:?}"),
        }
    }

    pub fn spans(&self) -> Range<usize> {
        self.header..self.body.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Plan {
    pub version: u64,
    pub entries: Vec<PlanEntry>,
    pub regions: Vec<RegionPlan>,
}

impl Plan {
    pub fn env_tasks(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.assignment, Assignment::EnvTask(_)))
            .count()
    }

    pub fn region_tasks(&self) -> usize {
        self.regions.iter().filter(|r| !r.reused).count()
    }

    /// Keys of every task this plan needs to run.
    pub fn task_keys(&self) -> HashSet<MemoKey> {
        let env = self.entries.iter().filter_map(|e| match e.assignment {
            Assignment::EnvTask(k) => Some(k),
            _ => None,
        });
        let regions = self.regions.iter().filter(|r| !r.reused).map(|r| r.key);
        env.chain(regions).collect()
    }

    pub fn state_chain(&self) -> Vec<StateId> {
        self.entries.iter().map(|e| e.state).collect()
    }
}

fn body_hash(v: &DocumentVersion, body: Range<usize>) -> Digest {
    Digest::of_fields(v.spans()[body].iter().map(|s| s.norm_hash.0))
}

fn is_body_command(c: &Command) -> bool {
    matches!(c, Command::Step(_) | Command::SyntaxError { .. })
}

/// Computes the state chain and the task assignment for a version.
pub fn plan(v: &DocumentVersion, memo: &MemoStore) -> Plan {
    let spans = v.spans();
    let n = spans.len();
    let mut entries: Vec<PlanEntry> = Vec::with_capacity(n);
    let mut regions = Vec::new();
    let mut state = StateId::initial();

    let push = |entries: &mut Vec<PlanEntry>, state: &mut StateId, i: usize, assignment: Option<String>, region| {
        let s = &spans[i];
        let parent = *state;
        let (effect, assignment) = match assignment {
            Some(msg) => (EffectHash::error(&s.norm_hash), Assignment::Rejected(msg)),
            None => {
                let key = MemoKey::Env {
                    parent,
                    norm: s.norm_hash,
                };
                let a = if memo.contains(&key) {
                    Assignment::Reused(key)
                } else {
                    Assignment::EnvTask(key)
                };
                (EffectHash::of(&s.command, &s.norm_hash), a)
            }
        };
        *state = parent.advance(effect);
        entries.push(PlanEntry {
            id: s.id,
            parent,
            state: *state,
            assignment,
            region,
        });
    };

    let mut i = 0;
    while i < n {
        match &spans[i].command {
            Command::Def { .. } | Command::SyntaxError { .. } => {
                push(&mut entries, &mut state, i, None, None);
                i += 1;
            }
            Command::LemmaHeader { .. } => {
                if !matches!(spans.get(i + 1).map(|s| &s.command), Some(Command::ProofOpen)) {
                    push(&mut entries, &mut state, i, Some("lemma without proof".into()), None);
                    i += 1;
                    continue;
                }
                let mut j = i + 2;
                while j < n && is_body_command(&spans[j].command) {
                    j += 1;
                }
                if j < n && spans[j].command == Command::Qed {
                    let r = regions.len();
                    push(&mut entries, &mut state, i, None, Some(r));
                    let header = state;
                    let body = i + 1..j + 1;
                    let bh = body_hash(v, body.clone());
                    let key = MemoKey::Region { header, body: bh };
                    let reused = memo.contains(&key);
                    for k in body.clone() {
                        entries.push(PlanEntry {
                            id: spans[k].id,
                            parent: state,
                            state,
                            assignment: if reused {
                                Assignment::Reused(key)
                            } else {
                                Assignment::RegionTask(r)
                            },
                            region: Some(r),
                        });
                    }
                    regions.push(RegionPlan {
                        key,
                        header: i,
                        body,
                        body_hash: bh,
                        reused,
                    });
                    i = j + 1;
                } else {
                    for k in i..j {
                        push(&mut entries, &mut state, k, Some("proof not closed by qed".into()), None);
                    }
                    i = j;
                }
            }
            Command::ProofOpen => {
                push(&mut entries, &mut state, i, Some("proof without lemma".into()), None);
                i += 1;
            }
            Command::Step(_) => {
                push(&mut entries, &mut state, i, Some("step outside of a proof".into()), None);
                i += 1;
            }
            Command::Qed => {
                push(&mut entries, &mut state, i, Some("qed without open proof".into()), None);
                i += 1;
            }
        }
    }
    Plan {
        version: v.version,
        entries,
        regions,
    }
}

/// Executes an environment-affecting command.
pub fn exec_transaction(env: &Environment, cmd: &Command) -> EnvResult {
    let unchanged = |status| EnvResult {
        env: env.clone(),
        status,
        lemma: None,
    };
    match cmd {
        Command::Def { name, body } => {
            let fact = Fact::new(name.clone(), env.expand(body), FactKind::Def);
            match env.extend(fact) {
                Some(env) => EnvResult {
                    env,
                    status: SpanStatus::finished(),
                    lemma: None,
                },
                None => unchanged(SpanStatus::failed(format!("duplicate name {name}"))),
            }
        }
        Command::LemmaHeader { name, statement } => {
            let fact = Fact::new(name.clone(), env.expand(statement), FactKind::Lemma);
            match env.extend(fact.clone()) {
                Some(next) => {
                    let lemma = next.get(name).map(|f| (**f).clone());
                    EnvResult {
                        env: next,
                        status: SpanStatus::finished(),
                        lemma,
                    }
                }
                None => EnvResult {
                    env: env.clone(),
                    status: SpanStatus::failed(format!("duplicate name {name}")),
                    lemma: Some(fact),
                },
            }
        }
        Command::SyntaxError { message, offset } => unchanged(SpanStatus::with(
            SpanState::Failed,
            Severity::Error,
            message.clone(),
            *offset,
        )),
        _ => unchanged(SpanStatus::failed("not an environment command")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cancelled;

fn open_goals(n: usize) -> String {
    if n == 1 {
        "1 open goal".to_string()
    } else {
        format!("{n} open goals")
    }
}

/// Checks `proof ... qed` for `lemma` against the environment in force at
/// its header. The derivation is replayed through the kernel at `qed`.
pub fn check_proof_region(
    env_at_header: &Environment,
    lemma: &Fact,
    body: &[Command],
    cancel: &CancelToken,
) -> Result<RegionResult, Cancelled> {
    let mut statuses = Vec::with_capacity(body.len());
    let mut state = initial_proof_state(lemma.statement.clone());
    let mut broken = false;
    let mut proved = false;
    let mut thm = None;
    for cmd in body {
        if cancel.is_cancelled() {
            return Err(Cancelled);
        }
        if broken {
            statuses.push(SpanStatus::cancelled("unreachable after failed step"));
            continue;
        }
        let status = match cmd {
            Command::ProofOpen => SpanStatus::finished(),
            Command::Step(step) => match apply_step(&state, step, env_at_header, cancel) {
                Ok(next) => {
                    state = next;
                    SpanStatus::finished()
                }
                Err(e) if e.kind == StepErrorKind::Cancelled => return Err(Cancelled),
                Err(e) => {
                    broken = true;
                    SpanStatus::failed(e.message)
                }
            },
            Command::Qed => {
                if state.num_goals() > 0 {
                    SpanStatus::failed(open_goals(state.num_goals()))
                } else {
                    match replay(state.derivation(), env_at_header) {
                        Ok(t) => {
                            proved = true;
                            thm = Some(t);
                            SpanStatus::finished()
                        }
                        Err(e) => SpanStatus::failed(format!("kernel rejected proof: {e}")),
                    }
                }
            }
            Command::SyntaxError { message, offset } => {
                broken = true;
                SpanStatus::with(SpanState::Failed, Severity::Error, message.clone(), *offset)
            }
            other => {
                broken = true;
                SpanStatus::failed(format!("unexpected command in proof: {other:?}"))
            }
        };
        statuses.push(status);
    }
    lemma.proof_status.set(if proved {
        ProofStatus::Proved
    } else {
        ProofStatus::Failed
    });
    Ok(RegionResult {
        statuses,
        proved,
        thm,
    })
}

/// Tokens of registered tasks whose keys the new plan no longer needs.
pub fn invalidate<'a>(
    new_plan: &Plan,
    registered: impl IntoIterator<Item = (&'a MemoKey, &'a CancelToken)>,
) -> Vec<CancelToken> {
    let keep = new_plan.task_keys();
    registered
        .into_iter()
        .filter(|(k, _)| !keep.contains(k))
        .map(|(_, t)| t.clone())
        .collect()
}

/// Resolves the final status of every span of `v` from a plan whose results
/// are all present in `memo`. Message offsets of syntax errors are taken
/// from the current span text.
pub fn resolve_status(v: &DocumentVersion, plan: &Plan, memo: &MemoStore, pos: usize) -> Option<SpanStatus> {
    let entry = &plan.entries[pos];
    let status = match &entry.assignment {
        Assignment::Rejected(msg) => SpanStatus::failed(msg.clone()),
        Assignment::Reused(key) | Assignment::EnvTask(key) => match memo.get(key)? {
            MemoValue::Env(r) => r.status.clone(),
            MemoValue::Region(r) => {
                let region = &plan.regions[entry.region?];
                r.statuses[pos - region.body.start].clone()
            }
        },
        Assignment::RegionTask(r) => {
            let region = &plan.regions[*r];
            memo.region(&region.key)?.statuses[pos - region.body.start].clone()
        }
    };
    Some(with_current_offsets(status, &v.spans()[pos].command))
}

pub fn with_current_offsets(mut status: SpanStatus, cmd: &Command) -> SpanStatus {
    if let Command::SyntaxError { message, offset } = cmd {
        for m in &mut status.messages {
            if &m.text == message {
                m.offset = *offset;
            }
        }
    }
    status
}

/// Statement of the lemma introduced by the header at `pos`, expanded in `env`.
pub fn header_statement(v: &DocumentVersion, pos: usize, env: &Environment) -> Option<Formula> {
    match &v.spans()[pos].command {
        Command::LemmaHeader { statement, .. } => Some(env.expand(statement)),
        _ => None,
    }
}

/// Sequential from-scratch check without any scheduler: every task of the
/// plan runs in document order on the calling thread.
pub fn batch_check(v: &DocumentVersion) -> (Vec<SpanStatus>, MemoStore, Plan) {
    let mut memo = MemoStore::new();
    let plan = plan(v, &memo);
    let mut envs: HashMap<StateId, Environment> = HashMap::new();
    envs.insert(StateId::initial(), Environment::new());
    let never = CancelToken::new();
    for (pos, entry) in plan.entries.iter().enumerate() {
        let env = envs[&entry.parent].clone();
        match &entry.assignment {
            Assignment::EnvTask(key) => {
                let r = exec_transaction(&env, &v.spans()[pos].command);
                envs.insert(entry.state, r.env.clone());
                memo.insert(*key, MemoValue::Env(Arc::new(r)));
            }
            Assignment::Rejected(_) => {
                envs.insert(entry.state, env);
            }
            Assignment::RegionTask(r) => {
                let region = &plan.regions[*r];
                if pos != region.body.start {
                    continue;
                }
                let header = memo
                    .env(&region.header_key(&plan))
                    .expect("header runs before its region");
                let lemma = header.lemma.clone().expect("header is a lemma");
                let body: Vec<Command> = v.spans()[region.body.clone()]
                    .iter()
                    .map(|s| s.command.clone())
                    .collect();
                let header_env = &envs[&region.header_parent(&plan)];
                let res = check_proof_region(header_env, &lemma, &body, &never).expect("not cancelled");
                memo.insert(region.key, MemoValue::Region(Arc::new(res)));
            }
            Assignment::Reused(_) => unreachable!("empty memo"),
        }
    }
    let statuses = (0..plan.entries.len())
        .map(|pos| resolve_status(v, &plan, &memo, pos).expect("all results present"))
        .collect();
    (statuses, memo, plan)
}
