//! Persistent prover environment: an insertion-ordered map from names to
//! facts, structurally shared between snapshots.

use std::fmt;
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;

use crate::kernel::Formula;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactKind {
    Def,
    Lemma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProofStatus {
    Pending,
    Proved,
    Failed,
}

/// Shared proof-status cell of a lemma. Reads and writes are atomic.
#[derive(Clone, Default)]
pub struct ProofCell(Arc<AtomicU8>);

impl ProofCell {
    pub fn get(&self) -> ProofStatus {
        match self.0.load(Ordering::Acquire) {
            0 => ProofStatus::Pending,
            1 => ProofStatus::Proved,
            _ => ProofStatus::Failed,
        }
    }

    pub fn set(&self, status: ProofStatus) {
        let v = match status {
            ProofStatus::Pending => 0,
            ProofStatus::Proved => 1,
            ProofStatus::Failed => 2,
        };
        self.0.store(v, Ordering::Release);
    }
}

impl fmt::Debug for ProofCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.get())
    }
}

#[derive(Clone, Debug)]
pub struct Fact {
    pub name: Arc<str>,
    /// Definition-expanded.
    pub statement: Formula,
    pub kind: FactKind,
    pub proof_status: ProofCell,
}

impl Fact {
    pub fn new(name: Arc<str>, statement: Formula, kind: FactKind) -> Fact {
        let proof_status = ProofCell::default();
        if kind == FactKind::Def {
            proof_status.set(ProofStatus::Proved);
        }
        Fact {
            name,
            statement,
            kind,
            proof_status,
        }
    }
}

#[derive(Clone, Default)]
pub struct Environment {
    order: im::Vector<Arc<Fact>>,
    index: im::HashMap<Arc<str>, usize>,
}

impl Environment {
    pub fn new() -> Environment {
        Environment::default()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Fact>> {
        self.index.get(name).map(|&i| &self.order[i])
    }

    /// Returns the extended environment, or `None` if the name is taken.
    pub fn extend(&self, fact: Fact) -> Option<Environment> {
        if self.index.contains_key(&fact.name) {
            return None;
        }
        let mut next = self.clone();
        next.index.insert(fact.name.clone(), next.order.len());
        next.order.push_back(Arc::new(fact));
        Some(next)
    }

    pub fn facts(&self) -> impl Iterator<Item = &Arc<Fact>> {
        self.order.iter()
    }

    /// Lemma facts in insertion order; these are what tactics may cite.
    pub fn lemmas(&self) -> impl Iterator<Item = &Arc<Fact>> {
        self.order.iter().filter(|f| f.kind == FactKind::Lemma)
    }

    pub fn lemma(&self, name: &str) -> Option<&Arc<Fact>> {
        self.get(name).filter(|f| f.kind == FactKind::Lemma)
    }

    /// Replaces atoms naming a `def` by the definition's (already expanded) body.
    pub fn expand(&self, f: &Formula) -> Formula {
        match f {
            Formula::Atom(n) => match self.get(n) {
                Some(fact) if fact.kind == FactKind::Def => fact.statement.clone(),
                _ => f.clone(),
            },
            Formula::False => Formula::False,
            Formula::Impl(a, b) => Formula::imp(self.expand(a), self.expand(b)),
            Formula::And(a, b) => Formula::and(self.expand(a), self.expand(b)),
            Formula::Or(a, b) => Formula::or(self.expand(a), self.expand(b)),
        }
    }
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.order.iter().map(|x| (&x.name, &x.statement)))
            .finish()
    }
}
