//! Elementary ACUN unification: XOR combinations of variables and opaque
//! atoms, solved as a linear system over GF(2).

use std::collections::{BTreeMap, BTreeSet};

use super::{UnificationProblem, UnifyError};
use crate::subst::Substitution;
use crate::term::{Sort, Term};

/// One equation `vars ⊕ atoms = 0`, i.e. the XOR of `vars` equals the XOR of `atoms`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    vars: BTreeSet<String>,
    atoms: BTreeSet<Term>,
}

impl Row {
    fn add(&mut self, other: &Row) {
        for v in &other.vars {
            if !self.vars.remove(v) {
                self.vars.insert(v.clone());
            }
        }
        for a in &other.atoms {
            if !self.atoms.remove(a) {
                self.atoms.insert(a.clone());
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct AcunSystem {
    rows: Vec<Row>,
    sorts: BTreeMap<String, Sort>,
}

impl AcunSystem {
    /// Builds the GF(2) system for `l ≟ r` pairs. Atoms are constants and
    /// ground compound terms; a compound term with variables is rejected.
    pub(crate) fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a Term, &'a Term)>) -> Result<Self, UnifyError> {
        let mut sys = AcunSystem::default();
        for (l, r) in pairs {
            let sum = Term::xor_normalized([l.normalize(), r.normalize()]);
            let mut row = Row { vars: BTreeSet::new(), atoms: BTreeSet::new() };
            for f in sum.xor_factors() {
                match &f {
                    Term::Var(n, s) => {
                        sys.sorts.insert(n.clone(), *s);
                        row.vars.insert(n.clone());
                    }
                    Term::Const(..) => {
                        row.atoms.insert(f);
                    }
                    _ if f.is_ground() => {
                        row.atoms.insert(f);
                    }
                    _ => return Err(UnifyError::NonPureAcun(f.to_dsl())),
                }
            }
            sys.rows.push(row);
        }
        Ok(sys)
    }

    pub(crate) fn is_ground(&self) -> bool {
        self.sorts.is_empty()
    }
}

/// Gaussian elimination; in every row the pivot is the variable with the
/// greatest `rank`. `None` if the system is inconsistent.
fn eliminate<K: Ord>(sys: &AcunSystem, rank: impl Fn(&str, Sort) -> K) -> Option<Vec<(String, Row)>> {
    let mut pivots: Vec<(String, Row)> = Vec::new();
    for row in &sys.rows {
        let mut row = row.clone();
        for (p, prow) in &pivots {
            if row.vars.contains(p) {
                row.add(prow);
            }
        }
        if row.vars.is_empty() {
            if row.atoms.is_empty() {
                continue;
            }
            return None;
        }
        let pivot = row.vars.iter().max_by_key(|v| rank(v, sys.sorts[v.as_str()])).expect("non-empty").clone();
        for (_, prow) in pivots.iter_mut() {
            if prow.vars.contains(&pivot) {
                prow.add(&row);
            }
        }
        pivots.push((pivot, row));
    }
    Some(pivots)
}

/// Whether the system has a solution when sorts are ignored.
pub(crate) fn acun_consistent(sys: &AcunSystem) -> bool {
    eliminate(sys, |v, _| v.to_string()).is_some()
}

/// The unique most general unifier in solved form, or `None` if the system
/// is inconsistent or a binding violates a variable's sort.
pub(crate) fn solve_acun<K: Ord>(sys: &AcunSystem, rank: impl Fn(&str, Sort) -> K) -> Option<Substitution> {
    let pivots = eliminate(sys, rank)?;
    let mut out = Substitution::new();
    for (p, row) in pivots {
        let sort = sys.sorts[p.as_str()];
        let factors =
            row.vars.iter().filter(|v| **v != p).map(|v| Term::var(v.clone(), sys.sorts[v.as_str()])).chain(row.atoms.iter().cloned());
        let value = Term::xor_normalized(factors);
        if !sort.admits(&value) {
            return None;
        }
        out.insert(p, value);
    }
    Some(out)
}

/// Variables that may stand for compound values are preferred as pivots.
pub(crate) fn default_rank(name: &str, sort: Sort) -> (bool, String) {
    (!matches!(sort, Sort::Agent | Sort::Tag), name.to_string())
}

/// Returns at most one unifier: the most general one when it exists.
pub fn unify_acun(p: &UnificationProblem) -> Result<Vec<Substitution>, UnifyError> {
    for e in &p.equations {
        for t in [&e.left, &e.right] {
            if t.is_std_rooted() && !t.is_ground() {
                return Err(UnifyError::NonPureAcun(t.to_dsl()));
            }
        }
    }
    let sys = AcunSystem::from_pairs(p.equations.iter().map(|e| (&e.left, &e.right)))?;
    Ok(solve_acun(&sys, default_rank).into_iter().collect())
}
