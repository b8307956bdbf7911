//! Untrusted proof engine: goals, proof steps, bounded search, and replay of
//! finished derivations through the kernel.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::cancel::CancelToken;
use crate::env::Environment;
use crate::kernel::{infer, Formula, KernelError, Rule, Thm};
use crate::syntax::ProofStep;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Goal {
    pub hyps: Vec<(Arc<str>, Formula)>,
    pub target: Formula,
}

impl Goal {
    pub fn new(target: Formula) -> Goal {
        Goal {
            hyps: Vec::new(),
            target,
        }
    }

    fn hyp(&self, name: &str) -> Option<&Formula> {
        self.hyps.iter().find(|(n, _)| &**n == name).map(|(_, f)| f)
    }

    fn has_name(&self, name: &str) -> bool {
        self.hyps.iter().any(|(n, _)| &**n == name)
    }

    /// First of `h1, h2, ...` not used as a hypothesis name.
    pub fn fresh_name(&self) -> Arc<str> {
        (1..)
            .map(|i| format!("h{i}"))
            .find(|n| !self.has_name(n))
            .map(Arc::from)
            .unwrap()
    }

    fn fresh_pair(&self) -> (Arc<str>, Arc<str>) {
        let mut names = (1..).map(|i| format!("h{i}")).filter(|n| !self.has_name(n));
        (names.next().unwrap().into(), names.next().unwrap().into())
    }

    fn with_hyp(&self, name: Arc<str>, f: Formula, target: Formula) -> Goal {
        let mut hyps = self.hyps.clone();
        hyps.push((name, f));
        Goal { hyps, target }
    }
}

impl fmt::Debug for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, h) in &self.hyps {
            write!(f, "{n}: {h}, ")?;
        }
        write!(f, "|- {}", self.target)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepErrorKind {
    NoOpenGoal,
    WrongTargetShape,
    UnknownName,
    DuplicateHypName,
    NotFound,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct StepError {
    pub kind: StepErrorKind,
    pub message: String,
}

impl StepError {
    fn new(kind: StepErrorKind, message: impl Into<String>) -> StepError {
        StepError {
            kind,
            message: message.into(),
        }
    }
}

/// Where a cited name was found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Local,
    Fact,
}

/// One recorded step of a derivation. `formula` is the formula the step
/// consumed (cited hypothesis/fact, or cased hypothesis), when there is one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivationNode {
    pub step: ProofStep,
    pub target: Formula,
    pub formula: Option<Formula>,
    pub source: Option<Source>,
    pub children: Vec<Option<usize>>,
}

/// Arena-allocated derivation tree. Holes are `None` children.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Derivation {
    pub nodes: Vec<DerivationNode>,
    pub root: Option<usize>,
}

impl Derivation {
    pub fn is_complete(&self) -> bool {
        self.root.is_some() && self.nodes.iter().all(|n| n.children.iter().all(Option::is_some))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Hole {
    Root,
    Child(usize, usize),
}

#[derive(Clone, Debug)]
pub struct ProofState {
    goals: Vec<(Goal, Hole)>,
    derivation: Derivation,
}

impl ProofState {
    pub fn goals(&self) -> impl ExactSizeIterator<Item = &Goal> {
        self.goals.iter().map(|(g, _)| g)
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn derivation(&self) -> &Derivation {
        &self.derivation
    }

    pub fn into_derivation(self) -> Derivation {
        self.derivation
    }

    fn holes(&self) -> usize {
        let inner: usize = self
            .derivation
            .nodes
            .iter()
            .map(|n| n.children.iter().filter(|c| c.is_none()).count())
            .sum();
        inner + usize::from(self.derivation.root.is_none())
    }
}

pub fn initial_proof_state(statement: Formula) -> ProofState {
    ProofState {
        goals: vec![(Goal::new(statement), Hole::Root)],
        derivation: Derivation::default(),
    }
}

struct Expansion {
    subgoals: Vec<Goal>,
    formula: Option<Formula>,
    source: Option<Source>,
}

fn resolve<'a>(goal: &'a Goal, env: &'a Environment, name: &str) -> Option<(Formula, Source)> {
    if let Some(f) = goal.hyp(name) {
        return Some((f.clone(), Source::Local));
    }
    env.lemma(name).map(|f| (f.statement.clone(), Source::Fact))
}

/// Splits `chi` as `phi_1 -> ... -> phi_k -> target` for the smallest `k`.
fn peel(chi: &Formula, target: &Formula) -> Option<Vec<Formula>> {
    let mut premises = Vec::new();
    let mut cur = chi;
    loop {
        if cur == target {
            return Some(premises);
        }
        let (a, b) = cur.as_impl()?;
        premises.push(a.clone());
        cur = b;
    }
}

fn wrong_shape(msg: impl Into<String>) -> StepError {
    StepError::new(StepErrorKind::WrongTargetShape, msg)
}

/// Effect of a single non-search step on one goal.
fn expand_goal(goal: &Goal, step: &ProofStep, env: &Environment) -> Result<Expansion, StepError> {
    let plain = |subgoals| Expansion {
        subgoals,
        formula: None,
        source: None,
    };
    let target = &goal.target;
    match step {
        ProofStep::Intro(h) => {
            let (a, b) = target
                .as_impl()
                .ok_or_else(|| wrong_shape(format!("intro: goal `{target}` is not an implication")))?;
            if goal.has_name(h) {
                return Err(StepError::new(
                    StepErrorKind::DuplicateHypName,
                    format!("hypothesis name {h} already in use"),
                ));
            }
            Ok(plain(vec![goal.with_hyp(h.clone(), a.clone(), b.clone())]))
        }
        ProofStep::Exact(n) => {
            let (f, source) = resolve(goal, env, n)
                .ok_or_else(|| StepError::new(StepErrorKind::UnknownName, format!("unknown name {n}")))?;
            if f != *target {
                return Err(wrong_shape(format!("exact: `{f}` does not match goal `{target}`")));
            }
            Ok(Expansion {
                subgoals: vec![],
                formula: Some(f),
                source: Some(source),
            })
        }
        ProofStep::Apply(n) => {
            let (f, source) = resolve(goal, env, n)
                .ok_or_else(|| StepError::new(StepErrorKind::UnknownName, format!("unknown name {n}")))?;
            let premises = peel(&f, target)
                .ok_or_else(|| wrong_shape(format!("apply: `{f}` does not conclude `{target}`")))?;
            let subgoals = premises
                .into_iter()
                .map(|p| Goal {
                    hyps: goal.hyps.clone(),
                    target: p,
                })
                .collect();
            Ok(Expansion {
                subgoals,
                formula: Some(f),
                source: Some(source),
            })
        }
        ProofStep::Split => {
            let (a, b) = target
                .as_and()
                .ok_or_else(|| wrong_shape(format!("split: goal `{target}` is not a conjunction")))?;
            let sub = |t: &Formula| Goal {
                hyps: goal.hyps.clone(),
                target: t.clone(),
            };
            Ok(plain(vec![sub(a), sub(b)]))
        }
        ProofStep::Left | ProofStep::Right => {
            let (a, b) = target
                .as_or()
                .ok_or_else(|| wrong_shape(format!("{step}: goal `{target}` is not a disjunction")))?;
            let t = if *step == ProofStep::Left { a } else { b };
            Ok(plain(vec![Goal {
                hyps: goal.hyps.clone(),
                target: t.clone(),
            }]))
        }
        ProofStep::Cases(n) => {
            let f = goal
                .hyp(n)
                .ok_or_else(|| StepError::new(StepErrorKind::UnknownName, format!("unknown hypothesis {n}")))?
                .clone();
            let mut rest = goal.clone();
            rest.hyps.retain(|(m, _)| m != n);
            let (x, y) = rest.fresh_pair();
            let subgoals = if let Some((a, b)) = f.as_and() {
                let mut g = rest.with_hyp(x, a.clone(), target.clone());
                g.hyps.push((y, b.clone()));
                vec![g]
            } else if let Some((a, b)) = f.as_or() {
                vec![
                    rest.with_hyp(x.clone(), a.clone(), target.clone()),
                    rest.with_hyp(x, b.clone(), target.clone()),
                ]
            } else {
                return Err(wrong_shape(format!(
                    "cases: hypothesis {n} : `{f}` is neither a conjunction nor a disjunction"
                )));
            };
            Ok(Expansion {
                subgoals,
                formula: Some(f),
                source: Some(Source::Local),
            })
        }
        ProofStep::ByContra(h) => {
            if goal.has_name(h) {
                return Err(StepError::new(
                    StepErrorKind::DuplicateHypName,
                    format!("hypothesis name {h} already in use"),
                ));
            }
            Ok(plain(vec![goal.with_hyp(
                h.clone(),
                Formula::not(target.clone()),
                Formula::False,
            )]))
        }
        ProofStep::Exfalso => Ok(plain(vec![Goal {
            hyps: goal.hyps.clone(),
            target: Formula::False,
        }])),
        ProofStep::Search(_) => unreachable!("search is expanded by apply_step"),
    }
}

fn apply_single(state: &ProofState, step: &ProofStep, env: &Environment) -> Result<ProofState, StepError> {
    let Some(((goal, hole), rest)) = state.goals.split_first() else {
        return Err(StepError::new(StepErrorKind::NoOpenGoal, "no open goal"));
    };
    let exp = expand_goal(goal, step, env)?;
    let mut derivation = state.derivation.clone();
    let id = derivation.nodes.len();
    derivation.nodes.push(DerivationNode {
        step: step.clone(),
        target: goal.target.clone(),
        formula: exp.formula,
        source: exp.source,
        children: vec![None; exp.subgoals.len()],
    });
    match *hole {
        Hole::Root => derivation.root = Some(id),
        Hole::Child(parent, i) => derivation.nodes[parent].children[i] = Some(id),
    }
    let mut goals: Vec<(Goal, Hole)> = exp
        .subgoals
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, Hole::Child(id, i)))
        .collect();
    goals.extend(rest.iter().cloned());
    let next = ProofState { goals, derivation };
    debug_assert_eq!(next.holes(), next.goals.len());
    Ok(next)
}

/// Runs one proof step against the first open goal.
pub fn apply_step(
    state: &ProofState,
    step: &ProofStep,
    env: &Environment,
    cancel: &CancelToken,
) -> Result<ProofState, StepError> {
    match step {
        ProofStep::Search(depth) => {
            if state.goals.is_empty() {
                return Err(StepError::new(StepErrorKind::NoOpenGoal, "no open goal"));
            }
            let steps = search(state, *depth as usize, env, cancel)?;
            let mut s = state.clone();
            for st in &steps {
                s = apply_single(&s, st, env)?;
            }
            Ok(s)
        }
        _ => apply_single(state, step, env),
    }
}

/// Candidate steps for `goal`, in canonical search order.
fn candidates(goal: &Goal, env: &Environment) -> Vec<ProofStep> {
    let target = &goal.target;
    let mut out = Vec::new();
    for (n, f) in &goal.hyps {
        if f == target {
            out.push(ProofStep::Exact(n.clone()));
        }
    }
    for fact in env.lemmas() {
        if fact.statement == *target && !goal.has_name(&fact.name) {
            out.push(ProofStep::Exact(fact.name.clone()));
        }
    }
    if target.as_impl().is_some() {
        out.push(ProofStep::Intro(goal.fresh_name()));
    }
    for (n, f) in &goal.hyps {
        if f != target && peel(f, target).is_some() {
            out.push(ProofStep::Apply(n.clone()));
        }
    }
    for fact in env.lemmas() {
        if fact.statement != *target
            && !goal.has_name(&fact.name)
            && peel(&fact.statement, target).is_some()
        {
            out.push(ProofStep::Apply(fact.name.clone()));
        }
    }
    if target.as_and().is_some() {
        out.push(ProofStep::Split);
    }
    if target.as_or().is_some() {
        out.push(ProofStep::Left);
        out.push(ProofStep::Right);
    }
    for (n, f) in &goal.hyps {
        if f.as_and().is_some() || f.as_or().is_some() {
            out.push(ProofStep::Cases(n.clone()));
        }
    }
    if *target != Formula::False {
        out.push(ProofStep::Exfalso);
    }
    let negated = Formula::not(target.clone());
    if !goal.hyps.iter().any(|(_, f)| *f == negated) {
        out.push(ProofStep::ByContra(goal.fresh_name()));
    }
    out
}

struct Searcher<'a> {
    env: &'a Environment,
    cancel: &'a CancelToken,
    path: Vec<ProofStep>,
}

impl Searcher<'_> {
    /// Depth-first search for a closing sequence of at most `budget` steps.
    fn dfs(&mut self, goals: &[Goal], budget: usize) -> Result<bool, StepError> {
        if self.cancel.is_cancelled() {
            return Err(StepError::new(StepErrorKind::Cancelled, "search cancelled"));
        }
        let Some((goal, rest)) = goals.split_first() else {
            return Ok(true);
        };
        // every open goal needs at least one more step
        if budget < goals.len() {
            return Ok(false);
        }
        for step in candidates(goal, self.env) {
            let exp = match expand_goal(goal, &step, self.env) {
                Ok(e) => e,
                Err(_) => continue,
            };
            let mut next = exp.subgoals;
            next.extend_from_slice(rest);
            self.path.push(step);
            if self.dfs(&next, budget - 1)? {
                return Ok(true);
            }
            self.path.pop();
        }
        Ok(false)
    }
}

/// Iterative-deepening search for a step sequence closing every open goal.
pub fn search(
    state: &ProofState,
    depth: usize,
    env: &Environment,
    cancel: &CancelToken,
) -> Result<Vec<ProofStep>, StepError> {
    let goals: Vec<Goal> = state.goals().cloned().collect();
    let mut s = Searcher {
        env,
        cancel,
        path: Vec::new(),
    };
    for limit in 1..=depth {
        s.path.clear();
        if s.dfs(&goals, limit)? {
            return Ok(s.path);
        }
    }
    Err(StepError::new(
        StepErrorKind::NotFound,
        format!("search: no proof within depth {depth}"),
    ))
}

/// Renders steps as concrete syntax, e.g. `intro h1. exact h1.`
pub fn render_steps(steps: &[ProofStep]) -> String {
    steps
        .iter()
        .map(|s| format!("{s}."))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("derivation is incomplete")]
    Incomplete,
    #[error("kernel rejected step `{step}`: {source}")]
    Kernel { step: String, source: KernelError },
    #[error("step `{step}` proves `{got}` instead of `{expected}`")]
    Mismatch {
        step: String,
        expected: Formula,
        got: Formula,
    },
    #[error("step `{step}` lacks its recorded formula")]
    MissingFormula { step: String },
    #[error("undischarged hypothesis `{0}` is not an environment fact")]
    StrayHypothesis(Formula),
}

struct Replayer<'a> {
    d: &'a Derivation,
}

impl Replayer<'_> {
    fn node(&self, id: usize) -> Result<Thm, ReplayError> {
        let n = &self.d.nodes[id];
        let step = || n.step.to_string();
        let k = |r: Result<Thm, KernelError>| r.map_err(|source| ReplayError::Kernel { step: step(), source });
        let child = |i: usize| -> Result<Thm, ReplayError> {
            match n.children.get(i).copied().flatten() {
                Some(c) => self.node(c),
                None => Err(ReplayError::Incomplete),
            }
        };
        let recorded = || n.formula.clone().ok_or_else(|| ReplayError::MissingFormula { step: step() });
        let target = &n.target;
        let thm = match &n.step {
            ProofStep::Intro(_) => {
                let (a, _) = target.as_impl().ok_or_else(|| ReplayError::Mismatch {
                    step: step(),
                    expected: target.clone(),
                    got: target.clone(),
                })?;
                k(infer(Rule::ImplIntro, &[child(0)?], &[a.clone()]))?
            }
            ProofStep::Exact(_) => k(infer(Rule::Assume, &[], &[recorded()?]))?,
            ProofStep::Apply(_) => {
                let mut acc = k(infer(Rule::Assume, &[], &[recorded()?]))?;
                for i in 0..n.children.len() {
                    acc = k(infer(Rule::ImplElim, &[acc, child(i)?], &[]))?;
                }
                acc
            }
            ProofStep::Split => k(infer(Rule::AndIntro, &[child(0)?, child(1)?], &[]))?,
            ProofStep::Left | ProofStep::Right => {
                let (a, b) = target.as_or().ok_or_else(|| ReplayError::Mismatch {
                    step: step(),
                    expected: target.clone(),
                    got: target.clone(),
                })?;
                if n.step == ProofStep::Left {
                    k(infer(Rule::OrIntroL, &[child(0)?], &[b.clone()]))?
                } else {
                    k(infer(Rule::OrIntroR, &[child(0)?], &[a.clone()]))?
                }
            }
            ProofStep::Cases(_) => {
                let f = recorded()?;
                let h = k(infer(Rule::Assume, &[], &[f.clone()]))?;
                if let Some((a, b)) = f.as_and() {
                    let body = k(infer(Rule::ImplIntro, &[child(0)?], &[b.clone()]))?;
                    let body = k(infer(Rule::ImplIntro, &[body], &[a.clone()]))?;
                    let left = k(infer(Rule::AndElimL, &[h.clone()], &[]))?;
                    let right = k(infer(Rule::AndElimR, &[h], &[]))?;
                    let t = k(infer(Rule::ImplElim, &[body, left], &[]))?;
                    k(infer(Rule::ImplElim, &[t, right], &[]))?
                } else {
                    k(infer(Rule::OrElim, &[h, child(0)?, child(1)?], &[]))?
                }
            }
            ProofStep::ByContra(_) => {
                let neg = Formula::not(target.clone());
                let refute = k(infer(Rule::ImplIntro, &[child(0)?], &[neg]))?;
                let dne = k(infer(Rule::DoubleNegElim, &[], &[target.clone()]))?;
                k(infer(Rule::ImplElim, &[dne, refute], &[]))?
            }
            ProofStep::Exfalso => k(infer(Rule::FalseElim, &[child(0)?], &[target.clone()]))?,
            ProofStep::Search(_) => return Err(ReplayError::MissingFormula { step: step() }),
        };
        if thm.conclusion() != target {
            return Err(ReplayError::Mismatch {
                step: step(),
                expected: target.clone(),
                got: thm.conclusion().clone(),
            });
        }
        Ok(thm)
    }
}

/// Rebuilds the derivation bottom-up through the kernel. The resulting
/// theorem may only depend on lemma statements of `env`.
pub fn replay(derivation: &Derivation, env: &Environment) -> Result<Thm, ReplayError> {
    let root = derivation.root.ok_or(ReplayError::Incomplete)?;
    if !derivation.is_complete() {
        return Err(ReplayError::Incomplete);
    }
    let thm = Replayer { d: derivation }.node(root)?;
    for h in thm.hypotheses() {
        if !env.lemmas().any(|f| f.statement == *h) {
            return Err(ReplayError::StrayHypothesis(h.clone()));
        }
    }
    Ok(thm)
}
