use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::subst::Substitution;
use crate::term::Term;

/// `target : terms`, the attacker must derive the target from the terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub target: Term,
    pub terms: BTreeSet<Term>,
}

impl Constraint {
    pub fn new(target: Term, terms: impl IntoIterator<Item = Term>) -> Constraint {
        Constraint { target: target.normalize(), terms: terms.into_iter().map(|t| t.normalize()).collect() }
    }

    pub fn is_simple(&self) -> bool {
        self.target.is_var()
    }

    /// Normal: the target is no sequence and the term set holds neither
    /// sequences nor bare variables. A `zero` target is only normal when
    /// the term set is empty.
    pub fn is_normal(&self) -> bool {
        !matches!(self.target, Term::Seq(_))
            && !(self.target == Term::Zero && !self.terms.is_empty())
            && self.terms.iter().all(|t| !matches!(t, Term::Seq(_) | Term::Var(..)))
    }

    pub fn apply(&self, s: &Substitution) -> Constraint {
        Constraint { target: s.apply(&self.target), terms: self.terms.iter().map(|t| s.apply(t)).collect() }
    }

    /// Splits sequence targets and flattens sequences in the term set.
    /// Bare variables are dropped from the term set: each was an earlier
    /// target, so whatever it stands for is derivable anyway. A `zero`
    /// target is dropped too, as any known term XORed with itself gives it.
    pub fn normalize(&self) -> Vec<Constraint> {
        let mut terms = BTreeSet::new();
        let mut stack: Vec<Term> = self.terms.iter().cloned().collect();
        while let Some(t) = stack.pop() {
            match t {
                Term::Seq(ts) => stack.extend(ts),
                Term::Var(..) => {}
                other => {
                    terms.insert(other);
                }
            }
        }
        let mut out = Vec::new();
        split_target(&self.target, &terms, &mut out);
        out
    }
}

fn split_target(target: &Term, terms: &BTreeSet<Term>, out: &mut Vec<Constraint>) {
    match target {
        Term::Seq(ts) => ts.iter().for_each(|t| split_target(t, terms, out)),
        Term::Zero if !terms.is_empty() => {}
        _ => out.push(Constraint { target: target.clone(), terms: terms.clone() }),
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {{", self.target.to_dsl())?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&t.to_dsl())?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConstraintSequence {
    pub constraints: Vec<Constraint>,
    pub substitution: Substitution,
}

impl ConstraintSequence {
    pub fn new(constraints: Vec<Constraint>) -> Self {
        ConstraintSequence { constraints, substitution: Substitution::new() }
    }

    pub fn is_simple(&self) -> bool {
        self.constraints.iter().all(Constraint::is_simple)
    }

    /// Index of the first non-simple constraint.
    pub fn active(&self) -> Option<usize> {
        self.constraints.iter().position(|c| !c.is_simple())
    }

    pub fn is_normal(&self) -> bool {
        self.active().is_none_or(|i| self.constraints[i].is_normal())
    }

    pub fn vars(&self) -> BTreeSet<(String, crate::term::Sort)> {
        let mut out = BTreeSet::new();
        for c in &self.constraints {
            c.target.collect_vars(&mut out);
            for t in &c.terms {
                t.collect_vars(&mut out);
            }
        }
        out
    }

    /// Normalizes at the active constraint until the sequence is normal.
    pub fn normalize(&self) -> ConstraintSequence {
        let mut cs = self.clone();
        while let Some(i) = cs.active() {
            if cs.constraints[i].is_normal() {
                break;
            }
            let replacement = cs.constraints[i].normalize();
            cs.constraints.splice(i..=i, replacement);
        }
        cs
    }

    /// Applies `tau` to every constraint and records it in the accumulated
    /// substitution.
    pub fn instantiate(&self, tau: &Substitution) -> ConstraintSequence {
        ConstraintSequence {
            constraints: self.constraints.iter().map(|c| c.apply(tau)).collect(),
            substitution: self.substitution.then(tau),
        }
    }

    /// The constraints with fresh (`#`) variables renamed by first
    /// occurrence; equal for sequences that `canonical_key` identifies.
    pub fn canonical_form(&self) -> Vec<Constraint> {
        let fresh: BTreeSet<(String, crate::term::Sort)> = self.vars().into_iter().filter(|(n, _)| n.starts_with('#')).collect();
        if fresh.is_empty() {
            return self.constraints.clone();
        }
        let mut order: Vec<(String, crate::term::Sort)> = Vec::new();
        for c in &self.constraints {
            for t in std::iter::once(&c.target).chain(&c.terms) {
                collect_fresh(t, &mut order);
            }
        }
        let mut rename = Substitution::new();
        for (i, (n, s)) in order.into_iter().enumerate() {
            rename.insert(n, Term::var(format!("#k{i}"), s));
        }
        self.constraints.iter().map(|c| c.apply(&rename)).collect()
    }

    /// Printed form with fresh (`#`) variables numbered by first occurrence,
    /// so that sequences differing only in those names share a key.
    pub fn canonical_key(&self) -> String {
        let mut names: BTreeMap<String, usize> = BTreeMap::new();
        let mut out = String::new();
        for c in &self.constraints {
            write_renamed(&c.target, &mut names, &mut out);
            out.push(':');
            for t in &c.terms {
                write_renamed(t, &mut names, &mut out);
                out.push(',');
            }
            out.push(';');
        }
        out
    }
}

fn collect_fresh(t: &Term, order: &mut Vec<(String, crate::term::Sort)>) {
    match t {
        Term::Var(n, s) if n.starts_with('#') && !order.iter().any(|(m, _)| m == n) => order.push((n.clone(), *s)),
        _ => t.args().into_iter().for_each(|a| collect_fresh(a, order)),
    }
}

fn write_renamed(t: &Term, names: &mut BTreeMap<String, usize>, out: &mut String) {
    match t {
        Term::Var(n, s) if !n.starts_with('#') => out.push_str(&format!("{n}:{s}")),
        Term::Var(n, s) => {
            let next = names.len();
            let i = *names.entry(n.clone()).or_insert(next);
            out.push_str(&format!("${i}:{s}"));
        }
        Term::Const(..) | Term::Zero => out.push_str(&t.to_string()),
        _ => {
            out.push_str(match t {
                Term::Seq(_) => "seq(",
                Term::PEnc(..) => "penc(",
                Term::SEnc(..) => "senc(",
                Term::Pk(_) => "pk(",
                Term::Sh(..) => "sh(",
                _ => "xor(",
            });
            for a in t.args() {
                write_renamed(a, names, out);
                out.push(',');
            }
            out.push(')');
        }
    }
}

impl fmt::Display for ConstraintSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[ ")?;
        for (i, c) in self.constraints.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(" ]")
    }
}
