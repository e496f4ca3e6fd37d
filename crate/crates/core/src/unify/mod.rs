//! Unification modulo STD, ACUN and their combination.

mod acun;
mod bsca;
mod partitions;
mod std_theory;

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subst::Substitution;
use crate::term::{equal_mod, Sort, Term, Theory};

pub use acun::unify_acun;
pub use bsca::{bsca_unify, combine_unifiers, purify, Abstraction, BscaBudget, BscaTrace, SolvedConfig};
pub use partitions::{enumerate_identifications, Identifications, Partition};
pub use std_theory::unify_std;
pub(crate) use std_theory::{unify_std_pairs, XorMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("XOR term {0} in an STD problem")]
    MixedTheoryTerm(String),
    #[error("compound term {0} with variables is not an ACUN atom")]
    NonPureAcun(String),
    #[error("{vars} shared variables exceed the identification limit of {limit}")]
    PartitionSpaceExceeded { vars: usize, limit: usize },
    #[error("search budget exhausted after {configs} configurations")]
    BudgetExhausted { configs: usize },
    #[error("cyclic dependency between {0} and {1}")]
    OrderCycle(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Equation {
    pub left: Term,
    pub right: Term,
    pub theory: Theory,
}

impl Equation {
    pub fn new(left: Term, right: Term, theory: Theory) -> Self {
        Equation { left, right, theory }
    }

    pub fn holds_under(&self, s: &Substitution) -> bool {
        equal_mod(self.theory, &s.apply_raw(&self.left), &s.apply_raw(&self.right))
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} =?{} {}", self.left.to_dsl(), self.theory, self.right.to_dsl())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnificationProblem {
    pub equations: Vec<Equation>,
    pub theory: Theory,
}

impl UnificationProblem {
    pub fn new(theory: Theory) -> Self {
        UnificationProblem { equations: Vec::new(), theory }
    }

    pub fn single(left: Term, right: Term, theory: Theory) -> Self {
        UnificationProblem { equations: vec![Equation::new(left, right, theory)], theory }
    }

    pub fn push(&mut self, left: Term, right: Term) {
        self.equations.push(Equation::new(left, right, self.theory));
    }

    pub fn vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        for e in &self.equations {
            e.left.collect_vars(&mut out);
            e.right.collect_vars(&mut out);
        }
        out
    }

    pub fn var_names(&self) -> BTreeSet<String> {
        self.vars().into_iter().map(|(n, _)| n).collect()
    }

    /// Whether `s` solves every equation modulo the problem's theory.
    pub fn is_solved_by(&self, s: &Substitution) -> bool {
        self.equations.iter().all(|e| equal_mod(self.theory, &s.apply_raw(&e.left), &s.apply_raw(&e.right)))
    }
}

impl fmt::Display for UnificationProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{ ")?;
        for (i, e) in self.equations.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(" }")
    }
}

/// Unifies two terms modulo STD ∪ ACUN, dispatching to the cheapest
/// complete procedure for the shape of the input.
const SUA_MEMO_LIMIT: usize = 50_000;

type SuaKey = (Term, Term, BscaBudget);

thread_local! {
    static SUA_MEMO: RefCell<HashMap<SuaKey, Result<Vec<Substitution>, UnifyError>>> = RefCell::new(HashMap::new());
}

pub fn unify_sua(left: &Term, right: &Term, budget: &BscaBudget) -> Result<Vec<Substitution>, UnifyError> {
    let (l, r) = (left.normalize(), right.normalize());
    if l == r {
        return Ok(vec![Substitution::new()]);
    }
    if !l.contains_xor() && !r.contains_xor() {
        return Ok(unify_std_pairs(vec![(l, r)], XorMode::Reject).unwrap_or_default());
    }
    let key = (l, r, *budget);
    if let Some(hit) = SUA_MEMO.with(|m| m.borrow().get(&key).cloned()) {
        return hit;
    }
    let problem = UnificationProblem::single(key.0.clone(), key.1.clone(), Theory::Sua);
    let result = bsca_unify(&problem, budget).map(|(u, _)| u);
    SUA_MEMO.with(|m| {
        let mut m = m.borrow_mut();
        if m.len() >= SUA_MEMO_LIMIT {
            m.clear();
        }
        m.insert(key, result.clone());
    });
    result
}

/// One-way matching: finds ρ with `pattern`ρ = `target`, XOR children
/// matched up to order.
pub fn match_into(pattern: &Term, target: &Term, rho: &mut Substitution) -> bool {
    match (pattern, target) {
        (Term::Var(n, s), _) => match rho.get(n) {
            Some(bound) => bound == target,
            None => {
                if !s.admits(target) {
                    return false;
                }
                rho.insert(n.clone(), target.clone());
                true
            }
        },
        (Term::Xor(ps), Term::Xor(ts)) if ps.len() == ts.len() && ps.len() <= 6 => {
            std_theory::permutations(ts.len()).into_iter().any(|perm| {
                let mut trial = rho.clone();
                let ok = ps.iter().zip(perm.iter().map(|&j| &ts[j])).all(|(p, t)| match_into(p, t, &mut trial));
                if ok {
                    *rho = trial;
                }
                ok
            })
        }
        _ => {
            let (ps, ts) = (pattern.args(), target.args());
            std::mem::discriminant(pattern) == std::mem::discriminant(target)
                && match (pattern, target) {
                    (Term::Const(..), Term::Const(..)) => pattern == target,
                    _ => ps.len() == ts.len() && ps.iter().zip(ts.iter()).all(|(p, t)| match_into(p, t, rho)),
                }
        }
    }
}

/// `specific` is a syntactic instance of `general` on the given variables.
pub(crate) fn is_instance_of(specific: &Substitution, general: &Substitution, vars: &BTreeSet<(String, Sort)>) -> bool {
    let mut rho = Substitution::new();
    vars.iter().all(|(n, s)| {
        let v = Term::var(n.clone(), *s);
        match_into(&general.apply(&v), &specific.apply(&v), &mut rho)
    })
}

/// Keeps only the most general members of `unifiers` (syntactic instance check).
pub(crate) fn prune_instances(unifiers: Vec<Substitution>, vars: &BTreeSet<(String, Sort)>) -> Vec<Substitution> {
    let unique: Vec<Substitution> = unifiers.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let mut keep = Vec::new();
    for (i, s) in unique.iter().enumerate() {
        let dominated =
            unique.iter().enumerate().any(|(j, g)| i != j && is_instance_of(s, g, vars) && (!is_instance_of(g, s, vars) || j < i));
        if !dominated {
            keep.push(s.clone());
        }
    }
    keep
}
