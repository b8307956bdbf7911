//! Trusted inference kernel for classical propositional logic.
//!
//! `Thm` values can only be produced by [`infer`]; everything else in the
//! crate (tactics, search, the document engine) is untrusted and has to go
//! through this module to obtain a certified judgment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Propositional formula. Negation is `Impl(phi, False)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(Arc<str>),
    False,
    Impl(Arc<Formula>, Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Or(Arc<Formula>, Arc<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(Arc::from(name))
    }

    pub fn imp(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Impl(Arc::new(lhs), Arc::new(rhs))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And(Arc::new(lhs), Arc::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Or(Arc::new(lhs), Arc::new(rhs))
    }

    pub fn not(f: Formula) -> Formula {
        Formula::imp(f, Formula::False)
    }

    /// `true` for identifiers of the form `[a-zA-Z_][a-zA-Z0-9_]*`.
    pub fn is_valid_atom_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return false,
        }
        chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    }

    /// Distinct atom names, in sorted order.
    pub fn atoms(&self) -> BTreeSet<Arc<str>> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Arc<str>>) {
        match self {
            Formula::Atom(n) => {
                out.insert(n.clone());
            }
            Formula::False => {}
            Formula::Impl(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn eval(&self, assignment: &BTreeMap<Arc<str>, bool>) -> bool {
        match self {
            Formula::Atom(n) => assignment.get(n).copied().unwrap_or(false),
            Formula::False => false,
            Formula::Impl(a, b) => !a.eval(assignment) || b.eval(assignment),
            Formula::And(a, b) => a.eval(assignment) && b.eval(assignment),
            Formula::Or(a, b) => a.eval(assignment) || b.eval(assignment),
        }
    }

    pub fn as_impl(&self) -> Option<(&Formula, &Formula)> {
        match self {
            Formula::Impl(a, b) => Some((a, b)),
            _ => None,
        }
    }

    pub fn as_and(&self) -> Option<(&Formula, &Formula)> {
        match self {
            Formula::And(a, b) => Some((a, b)),
            _ => None,
        }
    }

    pub fn as_or(&self) -> Option<(&Formula, &Formula)> {
        match self {
            Formula::Or(a, b) => Some((a, b)),
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Atom(_) | Formula::False => 4,
            Formula::Impl(_, b) if **b == Formula::False => 3,
            Formula::And(..) => 2,
            Formula::Or(..) => 1,
            Formula::Impl(..) => 0,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        if prec < min {
            f.write_str("(")?;
        }
        match self {
            Formula::Atom(n) => f.write_str(n)?,
            Formula::False => f.write_str("false")?,
            Formula::Impl(a, b) if **b == Formula::False => {
                f.write_str("~")?;
                a.fmt_prec(f, 3)?;
            }
            Formula::And(a, b) => {
                a.fmt_prec(f, 2)?;
                f.write_str(" /\\ ")?;
                b.fmt_prec(f, 3)?;
            }
            Formula::Or(a, b) => {
                a.fmt_prec(f, 1)?;
                f.write_str(" \\/ ")?;
                b.fmt_prec(f, 2)?;
            }
            Formula::Impl(a, b) => {
                a.fmt_prec(f, 1)?;
                f.write_str(" -> ")?;
                b.fmt_prec(f, 0)?;
            }
        }
        if prec < min {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Prints in the concrete syntax accepted by `syntax::parse_formula`.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{self}`")
    }
}

/// A kernel-certified judgment `hypotheses |- conclusion`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Thm(Arc<ThmInner>);

#[derive(PartialEq, Eq, Hash)]
struct ThmInner {
    hyps: BTreeSet<Formula>,
    concl: Formula,
}

impl Thm {
    fn mk(hyps: BTreeSet<Formula>, concl: Formula) -> Thm {
        Thm(Arc::new(ThmInner { hyps, concl }))
    }

    pub fn hypotheses(&self) -> &BTreeSet<Formula> {
        &self.0.hyps
    }

    pub fn conclusion(&self) -> &Formula {
        &self.0.concl
    }
}

impl fmt::Debug for Thm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hyps: Vec<String> = self.0.hyps.iter().map(|h| h.to_string()).collect();
        write!(f, "{{{}}} |- {}", hyps.join(", "), self.0.concl)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Assume,
    ImplIntro,
    ImplElim,
    AndIntro,
    AndElimL,
    AndElimR,
    OrIntroL,
    OrIntroR,
    OrElim,
    FalseElim,
    DoubleNegElim,
}

impl Rule {
    pub const ALL: [Rule; 11] = [
        Rule::Assume,
        Rule::ImplIntro,
        Rule::ImplElim,
        Rule::AndIntro,
        Rule::AndElimL,
        Rule::AndElimR,
        Rule::OrIntroL,
        Rule::OrIntroR,
        Rule::OrElim,
        Rule::FalseElim,
        Rule::DoubleNegElim,
    ];

    /// `(premise count, formula-argument count)`.
    pub fn arity(self) -> (usize, usize) {
        match self {
            Rule::Assume => (0, 1),
            Rule::ImplIntro => (1, 1),
            Rule::ImplElim => (2, 0),
            Rule::AndIntro => (2, 0),
            Rule::AndElimL | Rule::AndElimR => (1, 0),
            Rule::OrIntroL | Rule::OrIntroR => (1, 1),
            Rule::OrElim => (3, 0),
            Rule::FalseElim => (1, 1),
            Rule::DoubleNegElim => (0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("{rule:?}: expected {expected_premises} premises and {expected_args} arguments, got {premises} and {args}")]
    ArityMismatch {
        rule: Rule,
        expected_premises: usize,
        expected_args: usize,
        premises: usize,
        args: usize,
    },
    #[error("{rule:?}: premise {position} is malformed: {reason}")]
    MalformedPremise {
        rule: Rule,
        position: usize,
        reason: &'static str,
    },
}

fn union(a: &BTreeSet<Formula>, b: &BTreeSet<Formula>) -> BTreeSet<Formula> {
    a.union(b).cloned().collect()
}

fn without(a: &BTreeSet<Formula>, f: &Formula) -> BTreeSet<Formula> {
    let mut out = a.clone();
    out.remove(f);
    out
}

/// Applies one primitive inference rule. This is the only way to build a `Thm`.
pub fn infer(rule: Rule, premises: &[Thm], args: &[Formula]) -> Result<Thm, KernelError> {
    let (np, na) = rule.arity();
    if premises.len() != np || args.len() != na {
        return Err(KernelError::ArityMismatch {
            rule,
            expected_premises: np,
            expected_args: na,
            premises: premises.len(),
            args: args.len(),
        });
    }
    let malformed = |position, reason| KernelError::MalformedPremise {
        rule,
        position,
        reason,
    };
    let thm = match rule {
        Rule::Assume => Thm::mk([args[0].clone()].into(), args[0].clone()),
        Rule::ImplIntro => {
            let p = &premises[0];
            Thm::mk(
                without(p.hypotheses(), &args[0]),
                Formula::imp(args[0].clone(), p.conclusion().clone()),
            )
        }
        Rule::ImplElim => {
            let (f, x) = (&premises[0], &premises[1]);
            let (lhs, rhs) = f
                .conclusion()
                .as_impl()
                .ok_or_else(|| malformed(0, "not an implication"))?;
            if lhs != x.conclusion() {
                return Err(malformed(1, "does not match the antecedent"));
            }
            Thm::mk(union(f.hypotheses(), x.hypotheses()), rhs.clone())
        }
        Rule::AndIntro => {
            let (a, b) = (&premises[0], &premises[1]);
            Thm::mk(
                union(a.hypotheses(), b.hypotheses()),
                Formula::and(a.conclusion().clone(), b.conclusion().clone()),
            )
        }
        Rule::AndElimL | Rule::AndElimR => {
            let p = &premises[0];
            let (l, r) = p
                .conclusion()
                .as_and()
                .ok_or_else(|| malformed(0, "not a conjunction"))?;
            let concl = if rule == Rule::AndElimL { l } else { r };
            Thm::mk(p.hypotheses().clone(), concl.clone())
        }
        Rule::OrIntroL => {
            let p = &premises[0];
            Thm::mk(
                p.hypotheses().clone(),
                Formula::or(p.conclusion().clone(), args[0].clone()),
            )
        }
        Rule::OrIntroR => {
            let p = &premises[0];
            Thm::mk(
                p.hypotheses().clone(),
                Formula::or(args[0].clone(), p.conclusion().clone()),
            )
        }
        Rule::OrElim => {
            let (d, l, r) = (&premises[0], &premises[1], &premises[2]);
            let (phi, psi) = d
                .conclusion()
                .as_or()
                .ok_or_else(|| malformed(0, "not a disjunction"))?;
            if l.conclusion() != r.conclusion() {
                return Err(malformed(2, "case conclusions differ"));
            }
            let hyps = union(
                &union(d.hypotheses(), &without(l.hypotheses(), phi)),
                &without(r.hypotheses(), psi),
            );
            Thm::mk(hyps, l.conclusion().clone())
        }
        Rule::FalseElim => {
            let p = &premises[0];
            if *p.conclusion() != Formula::False {
                return Err(malformed(0, "not false"));
            }
            Thm::mk(p.hypotheses().clone(), args[0].clone())
        }
        Rule::DoubleNegElim => {
            let phi = args[0].clone();
            let dn = Formula::not(Formula::not(phi.clone()));
            Thm::mk(BTreeSet::new(), Formula::imp(dn, phi))
        }
    };
    Ok(thm)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("truth-table oracle inapplicable: {atoms} distinct atoms exceed the limit of {max}")]
pub struct TooManyAtoms {
    pub atoms: usize,
    pub max: usize,
}

/// Exhaustive truth-table check of `premises |= conclusion`.
pub fn tautology_check(
    premises: &[Formula],
    conclusion: &Formula,
    max_atoms: usize,
) -> Result<bool, TooManyAtoms> {
    let mut atoms = conclusion.atoms();
    for p in premises {
        atoms.extend(p.atoms());
    }
    if atoms.len() > max_atoms || atoms.len() >= usize::BITS as usize {
        return Err(TooManyAtoms {
            atoms: atoms.len(),
            max: max_atoms,
        });
    }
    let atoms: Vec<Arc<str>> = atoms.into_iter().collect();
    let mut assignment = BTreeMap::new();
    for bits in 0u64..(1u64 << atoms.len()) {
        for (i, a) in atoms.iter().enumerate() {
            assignment.insert(a.clone(), bits & (1 << i) != 0);
        }
        if premises.iter().all(|p| p.eval(&assignment)) && !conclusion.eval(&assignment) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Formula {
        Formula::atom("p")
    }
    fn q() -> Formula {
        Formula::atom("q")
    }

    #[test]
    fn assume_and_discharge() {
        let t = infer(Rule::Assume, &[], &[p()]).unwrap();
        assert_eq!(t.hypotheses().len(), 1);
        assert_eq!(t.conclusion(), &p());
        let t = infer(Rule::ImplIntro, &[t], &[p()]).unwrap();
        assert!(t.hypotheses().is_empty());
        assert_eq!(t.conclusion(), &Formula::imp(p(), p()));
    }

    #[test]
    fn modus_ponens() {
        let pq = Formula::imp(p(), q());
        let f = infer(Rule::Assume, &[], &[pq.clone()]).unwrap();
        let x = infer(Rule::Assume, &[], &[p()]).unwrap();
        let t = infer(Rule::ImplElim, &[f, x], &[]).unwrap();
        assert_eq!(t.conclusion(), &q());
        assert_eq!(t.hypotheses(), &[pq, p()].into_iter().collect());
    }

    #[test]
    fn impl_elim_rejects_non_implication() {
        let f = infer(Rule::Assume, &[], &[Formula::atom("r")]).unwrap();
        let f = infer(Rule::ImplIntro, &[f], &[Formula::atom("r")]).unwrap();
        let conj = infer(Rule::Assume, &[], &[Formula::and(p(), q())]).unwrap();
        let x = infer(Rule::Assume, &[], &[p()]).unwrap();
        let err = infer(Rule::ImplElim, &[conj, x.clone()], &[]).unwrap_err();
        assert!(matches!(
            err,
            KernelError::MalformedPremise { rule: Rule::ImplElim, position: 0, .. }
        ));
        // antecedent mismatch is reported on the second premise
        let err = infer(Rule::ImplElim, &[f, x], &[]).unwrap_err();
        assert!(matches!(err, KernelError::MalformedPremise { position: 1, .. }));
    }

    #[test]
    fn arity_is_exact() {
        for rule in Rule::ALL {
            let (np, na) = rule.arity();
            let prem = infer(Rule::Assume, &[], &[p()]).unwrap();
            let err = infer(rule, &vec![prem; np + 1], &vec![p(); na]).unwrap_err();
            assert!(matches!(err, KernelError::ArityMismatch { .. }), "{rule:?}");
        }
    }

    #[test]
    fn or_elim_discharges_case_hypotheses() {
        let d = infer(Rule::Assume, &[], &[Formula::or(p(), q())]).unwrap();
        let l = infer(Rule::Assume, &[], &[p()]).unwrap();
        let l = infer(Rule::OrIntroL, &[l], &[q()]).unwrap();
        let r = infer(Rule::Assume, &[], &[q()]).unwrap();
        let r = infer(Rule::OrIntroR, &[r], &[p()]).unwrap();
        let t = infer(Rule::OrElim, &[d, l, r], &[]).unwrap();
        assert_eq!(t.hypotheses().len(), 1);
        assert_eq!(t.conclusion(), &Formula::or(p(), q()));
    }

    #[test]
    fn oracle_examples() {
        assert!(tautology_check(&[], &Formula::imp(p(), p()), 10).unwrap());
        assert!(!tautology_check(&[], &Formula::or(p(), q()), 10).unwrap());
        assert!(tautology_check(&[Formula::imp(p(), q()), p()], &q(), 10).unwrap());
        assert!(tautology_check(&[], &Formula::or(p(), q()), 1).is_err());
    }

    #[test]
    fn display_uses_concrete_syntax() {
        let f = Formula::or(Formula::not(p()), Formula::and(q(), Formula::atom("r")));
        assert_eq!(f.to_string(), "~p \\/ q /\\ r");
        let f = Formula::imp(Formula::imp(p(), q()), p());
        assert_eq!(f.to_string(), "(p -> q) -> p");
        assert_eq!(Formula::not(Formula::not(p())).to_string(), "~~p");
    }
}
