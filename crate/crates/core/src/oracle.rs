//! Ground Dolev-Yao derivability modulo XOR, used to cross-check the
//! symbolic solver.
//!
//! The attacker pairs and unpairs, encrypts with any known key, decrypts
//! symmetric encryptions with a known key and asymmetric ones only under
//! `pk(eps)`, and XORs known terms. `pk` and `sh` terms are never built.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::solver::ConstraintSequence;
use crate::subst::Substitution;
use crate::term::{Term, ATTACKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureStatus {
    Fixpoint,
    RoundLimit,
    SizeCapExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundKnowledge {
    pub terms: BTreeSet<Term>,
    pub depth: usize,
    pub status: ClosureStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("term {0} is not ground")]
    NonGround(String),
}

fn attacker_pk() -> Term {
    Term::pk(Term::attacker())
}

fn decompose(t: &Term, known: &BTreeSet<Term>) -> Vec<Term> {
    match t {
        Term::Seq(ts) => ts.clone(),
        Term::SEnc(m, k) if known.contains(k.as_ref()) => vec![(**m).clone()],
        Term::PEnc(m, k) if **k == attacker_pk() => vec![(**m).clone()],
        _ => Vec::new(),
    }
}

/// Saturates `initial` for up to `rounds` rounds. Each round applies every
/// rule once to every pair of known terms. Stops early at a fixpoint or
/// once the set exceeds `size_cap`.
pub fn dy_closure(initial: &BTreeSet<Term>, rounds: usize, size_cap: usize) -> Result<GroundKnowledge, OracleError> {
    if let Some(t) = initial.iter().find(|t| !t.is_ground()) {
        return Err(OracleError::NonGround(t.to_dsl()));
    }
    let mut known: BTreeSet<Term> = initial.iter().map(Term::normalize).collect();
    known.insert(Term::Zero);
    for depth in 0..rounds {
        let items: Vec<Term> = known.iter().cloned().collect();
        let mut added = BTreeSet::new();
        for t in &items {
            added.extend(decompose(t, &known));
        }
        for a in &items {
            for b in &items {
                added.insert(Term::seq(vec![a.clone(), b.clone()]));
                added.insert(Term::senc(a.clone(), b.clone()));
                added.insert(Term::penc(a.clone(), b.clone()));
                if a < b {
                    added.insert(Term::xor(vec![a.clone(), b.clone()]).normalize());
                }
                if known.len() + added.len() > size_cap {
                    known.extend(added);
                    return Ok(GroundKnowledge { terms: known, depth: depth + 1, status: ClosureStatus::SizeCapExceeded });
                }
            }
        }
        let before = known.len();
        known.extend(added.into_iter().map(|t| t.normalize()));
        if known.len() == before {
            return Ok(GroundKnowledge { terms: known, depth, status: ClosureStatus::Fixpoint });
        }
    }
    Ok(GroundKnowledge { terms: known, depth: rounds, status: ClosureStatus::RoundLimit })
}

/// Goal-directed derivability check: saturate the knowledge under analysis
/// (including XOR cancellation), then try to build `target`.
pub fn derives(knowledge: &BTreeSet<Term>, target: &Term) -> Result<bool, OracleError> {
    for t in knowledge.iter().chain(std::iter::once(target)) {
        if !t.is_ground() {
            return Err(OracleError::NonGround(t.to_dsl()));
        }
    }
    let known = analyze(knowledge.iter().map(Term::normalize).collect());
    Ok(Synth::new(&known).derivable(&target.normalize()))
}

fn analyze(mut known: BTreeSet<Term>) -> BTreeSet<Term> {
    known.insert(Term::Zero);
    loop {
        let mut added = BTreeSet::new();
        {
            let synth = Synth::new(&known);
            for t in &known {
                match t {
                    Term::Seq(ts) => added.extend(ts.iter().cloned()),
                    Term::SEnc(m, k) if synth.derivable(k) => {
                        added.insert((**m).clone());
                    }
                    Term::PEnc(m, k) if **k == attacker_pk() => {
                        added.insert((**m).clone());
                    }
                    _ => {}
                }
            }
            // non-XOR factors that cancel out of known XOR terms
            let factors: BTreeSet<Term> = known.iter().filter(|t| t.is_xor()).flat_map(Term::xor_factors).collect();
            for f in factors {
                if !known.contains(&f) && synth.in_span(&f) {
                    added.insert(f);
                }
            }
        }
        let before = known.len();
        known.extend(added);
        if known.len() == before {
            return known;
        }
    }
}

struct Synth<'a> {
    known: &'a BTreeSet<Term>,
    /// Goals under evaluation; a goal met again on its own path fails, as
    /// no finite derivation needs a term to build itself.
    pending: RefCell<BTreeSet<Term>>,
}

impl<'a> Synth<'a> {
    fn new(known: &'a BTreeSet<Term>) -> Self {
        Synth { known, pending: RefCell::new(BTreeSet::new()) }
    }

    fn derivable(&self, t: &Term) -> bool {
        if self.known.contains(t) {
            return true;
        }
        if !self.pending.borrow_mut().insert(t.clone()) {
            return false;
        }
        let ok = self.composable(t) || self.in_span(t);
        self.pending.borrow_mut().remove(t);
        ok
    }

    /// Known, or built by a constructor from derivable parts.
    fn composable(&self, t: &Term) -> bool {
        if self.known.contains(t) || *t == Term::Zero || matches!(t, Term::Const(n, _) if n == ATTACKER) {
            return true;
        }
        match t {
            Term::Seq(ts) => ts.iter().all(|u| self.derivable(u)),
            Term::SEnc(m, k) | Term::PEnc(m, k) => self.derivable(m) && self.derivable(k),
            _ => false,
        }
    }

    /// Whether `t` is an XOR combination of known terms and composable
    /// factors, decided by Gaussian elimination over GF(2).
    fn in_span(&self, t: &Term) -> bool {
        let target = t.xor_factors();
        let mut universe: BTreeSet<Term> = target.iter().cloned().collect();
        let xor_known: Vec<&Term> = self.known.iter().filter(|k| k.is_xor()).collect();
        for k in &xor_known {
            universe.extend(k.xor_factors());
        }
        let index: BTreeMap<&Term, usize> = universe.iter().enumerate().map(|(i, f)| (f, i)).collect();
        let vector = |fs: &[Term]| -> BTreeSet<usize> { fs.iter().map(|f| index[f]).collect() };
        let mut generators: Vec<BTreeSet<usize>> = xor_known.iter().map(|k| vector(&k.xor_factors())).collect();
        for f in &universe {
            if !f.is_xor() && (f != t || t.is_xor()) && self.composable(f) {
                generators.push([index[f]].into());
            }
        }
        let goal = vector(&target);
        let mut basis: Vec<(usize, BTreeSet<usize>)> = Vec::new();
        for mut g in generators {
            reduce(&mut g, &basis);
            if let Some(&pivot) = g.iter().next_back() {
                basis.push((pivot, g));
            }
        }
        let mut goal = goal;
        reduce(&mut goal, &basis);
        goal.is_empty()
    }
}

/// Eliminates basis pivots from `v`, largest first. Every basis row has
/// its largest element as pivot, so each step only introduces smaller ones.
fn reduce(v: &mut BTreeSet<usize>, basis: &[(usize, BTreeSet<usize>)]) {
    while let Some((_, row)) = basis.iter().filter(|(p, _)| v.contains(p)).max_by_key(|(p, _)| *p) {
        for x in row {
            if !v.remove(x) {
                v.insert(*x);
            }
        }
    }
}

/// Instantiates every variable left over by `solution` with the attacker's
/// name and checks every constraint of `cs` on ground terms.
pub fn verify_solution(cs: &ConstraintSequence, solution: &Substitution) -> bool {
    let applied: Vec<(Term, BTreeSet<Term>)> =
        cs.constraints.iter().map(|c| (solution.apply(&c.target), c.terms.iter().map(|t| solution.apply(t)).collect())).collect();
    let mut rest = Substitution::new();
    for (target, terms) in &applied {
        for (v, _) in std::iter::once(target).chain(terms).flat_map(Term::vars) {
            rest.insert(v, Term::attacker());
        }
    }
    applied.iter().all(|(target, terms)| {
        let terms: BTreeSet<Term> = terms.iter().map(|t| rest.apply(t)).collect();
        derives(&terms, &rest.apply(target)).unwrap_or(false)
    })
}
