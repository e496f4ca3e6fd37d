use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::constraint::{Constraint, ConstraintSequence};
use super::rules::{applicable_rules, apply_rule_traced, RuleName, Site};
use crate::oracle::derives;
use crate::subst::Substitution;
use crate::term::Term;
use crate::unify::BscaBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SolverBudget {
    /// Rule applications along one branch.
    pub max_depth: usize,
    /// Search nodes per constraint sequence.
    pub max_nodes: usize,
    pub unify: BscaBudget,
    /// Cut branches holding a ground constraint that is not derivable.
    pub ground_pruning: bool,
}

impl Default for SolverBudget {
    fn default() -> Self {
        SolverBudget { max_depth: 64, max_nodes: 200_000, unify: BscaBudget::default(), ground_pruning: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Satisfiable,
    Unsatisfiable,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStep {
    pub rule: RuleName,
    pub site: Site,
    /// Which of the rule's result sequences was followed.
    pub branch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unifier: Option<Substitution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub substitution: Substitution,
    pub rules: Vec<RuleStep>,
    pub final_sequence: ConstraintSequence,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes: usize,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverResult {
    pub status: SolverStatus,
    pub solutions: Vec<Solution>,
    pub stats: SearchStats,
}

struct Search<'a> {
    budget: &'a SolverBudget,
    visited: HashSet<Vec<Constraint>>,
    stats: SearchStats,
    exhausted: bool,
    trace: Vec<RuleStep>,
    found: Option<Solution>,
    accept: &'a dyn Fn(&Substitution) -> bool,
    ground: HashMap<u64, Vec<(BTreeSet<Term>, Term, bool)>>,
}

/// Exploration order: closing rules first, then analysis, then synthesis.
fn priority(rule: RuleName) -> u8 {
    match rule {
        RuleName::Un => 0,
        RuleName::Ksub => 1,
        RuleName::Concat | RuleName::Split => 2,
        RuleName::Pdec => 3,
        RuleName::Sdec => 4,
        RuleName::XorR => 5,
        RuleName::Penc => 6,
        RuleName::Senc => 7,
        RuleName::XorL => 8,
    }
}

/// Steps that lose no solutions when taken alone: closing a target that is
/// literally known, and opening a ciphertext under the attacker's key, which
/// only adds knowledge.
fn committed(cs: &ConstraintSequence) -> Option<Vec<(RuleName, Site)>> {
    let active = &cs.constraints[cs.active()?];
    if active.terms.contains(&active.target) {
        return Some(vec![(RuleName::Un, Site::Member(active.target.clone()))]);
    }
    applicable_rules(cs).into_iter().find(|(r, _)| *r == RuleName::Pdec).map(|step| vec![step])
}

impl Search<'_> {
    fn ground_dead_end(&mut self, cs: &ConstraintSequence) -> bool {
        for c in &cs.constraints {
            if c.target.is_var() || !c.target.is_ground() || !c.terms.iter().all(Term::is_ground) {
                continue;
            }
            let mut h = DefaultHasher::new();
            (&c.terms, &c.target).hash(&mut h);
            let bucket = self.ground.entry(h.finish()).or_default();
            let ok = match bucket.iter().find(|(t, m, _)| *t == c.terms && *m == c.target) {
                Some((_, _, ok)) => *ok,
                None => {
                    let ok = derives(&c.terms, &c.target).unwrap_or(true);
                    bucket.push((c.terms.clone(), c.target.clone(), ok));
                    ok
                }
            };
            if !ok {
                return true;
            }
        }
        false
    }

    fn dfs(&mut self, cs: ConstraintSequence, depth: usize) {
        if self.found.is_some() {
            return;
        }
        self.stats.nodes += 1;
        self.stats.max_depth = self.stats.max_depth.max(depth);
        if self.stats.nodes > self.budget.max_nodes {
            self.exhausted = true;
            return;
        }
        debug_assert!(cs.is_normal());
        if !(self.accept)(&cs.substitution) {
            return;
        }
        if cs.is_simple() {
            self.found = Some(Solution { substitution: cs.substitution.clone(), rules: self.trace.clone(), final_sequence: cs });
            return;
        }
        if depth >= self.budget.max_depth {
            self.exhausted = true;
            return;
        }
        if !self.visited.insert(cs.canonical_form()) {
            return;
        }
        if self.budget.ground_pruning && self.ground_dead_end(&cs) {
            return;
        }
        let mut rules = committed(&cs).unwrap_or_else(|| applicable_rules(&cs));
        rules.sort_by_key(|(r, _)| priority(*r));
        for (rule, site) in rules {
            for (branch, (next, unifier)) in apply_rule_traced(rule, &site, &cs, &self.budget.unify).into_iter().enumerate() {
                self.trace.push(RuleStep { rule, site: site.clone(), branch, unifier });
                self.dfs(next.normalize(), depth + 1);
                self.trace.pop();
                if self.found.is_some() || self.stats.nodes > self.budget.max_nodes {
                    return;
                }
            }
        }
    }
}

/// Depth-first search for a rule sequence that makes `cs` simple. Stops at
/// the first solution. Without a solution the status is `Unsatisfiable`
/// only if no branch hit a budget.
pub fn satisfiable(cs: &ConstraintSequence, budget: &SolverBudget) -> SolverResult {
    satisfiable_where(cs, budget, &|_| true)
}

/// Like `satisfiable`, but only substitutions satisfying `accept` count.
/// `accept` must stay false once false: it is checked at every node, and a
/// rejected node is not expanded.
pub fn satisfiable_where(cs: &ConstraintSequence, budget: &SolverBudget, accept: &dyn Fn(&Substitution) -> bool) -> SolverResult {
    let mut search = Search {
        budget,
        visited: HashSet::new(),
        stats: SearchStats::default(),
        exhausted: false,
        trace: Vec::new(),
        found: None,
        accept,
        ground: HashMap::new(),
    };
    search.dfs(cs.normalize(), 0);
    let status = match (&search.found, search.exhausted) {
        (Some(_), _) => SolverStatus::Satisfiable,
        (None, true) => SolverStatus::BudgetExhausted,
        (None, false) => SolverStatus::Unsatisfiable,
    };
    SolverResult { status, solutions: search.found.into_iter().collect(), stats: search.stats }
}

/// Re-applies a recorded rule trace; returns the final sequence.
pub fn replay(cs: &ConstraintSequence, steps: &[RuleStep], budget: &BscaBudget) -> Option<ConstraintSequence> {
    let mut cur = cs.normalize();
    for step in steps {
        let mut branches = apply_rule_traced(step.rule, &step.site, &cur, budget);
        if step.branch >= branches.len() {
            return None;
        }
        cur = branches.swap_remove(step.branch).0.normalize();
    }
    Some(cur)
}
