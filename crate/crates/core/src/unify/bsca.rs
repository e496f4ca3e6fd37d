//! Combined STD ∪ ACUN unification by theory combination.
//!
//! The stages mirror the classic combination procedure: purify terms and
//! equations, identify shared variables, split by theory, assign every
//! shared variable to the theory that may instantiate it (replacing it by a
//! fresh constant in the other one), choose a linear order, solve both
//! halves under the induced constant restrictions, and recombine.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::acun::{acun_consistent, solve_acun, AcunSystem};
use super::partitions::{enumerate_identifications, Partition};
use super::std_theory::{permutations, unify_std_pairs, XorMode};
use super::{prune_instances, Equation, UnificationProblem, UnifyError};
use crate::subst::Substitution;
use crate::term::{Sort, Term, Theory};

const FRESH_VAR_PREFIX: &str = "#v";
const FRESH_CONST_PREFIX: &str = "#c";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BscaBudget {
    /// Upper bound on shared variables handed to the identification step.
    pub max_shared_vars: usize,
    /// Upper bound on (identification, theory split, order) configurations.
    pub max_configs: usize,
    /// Upper bound on linear orders tried per split.
    pub max_orders: usize,
}

impl Default for BscaBudget {
    fn default() -> Self {
        BscaBudget { max_shared_vars: 12, max_configs: 200_000, max_orders: 720 }
    }
}

/// Fresh variable ↦ the alien subterm it abstracts.
pub type Abstraction = BTreeMap<String, Term>;

/// The configuration that produced the first validated unifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolvedConfig {
    pub var_idp: Partition,
    pub gamma3: Vec<Equation>,
    pub gamma4_1: Vec<Equation>,
    pub gamma4_2: Vec<Equation>,
    pub v1: Vec<String>,
    pub v2: Vec<String>,
    pub order: Vec<String>,
    pub beta: Substitution,
    pub gamma5_1: Vec<Equation>,
    pub gamma5_2: Vec<Equation>,
    pub std_unifier: Substitution,
    pub acun_unifier: Substitution,
    pub combined: Substitution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BscaTrace {
    pub input: UnificationProblem,
    pub gamma1: Vec<Equation>,
    pub gamma2: Vec<Equation>,
    pub abstraction: Abstraction,
    pub shared_vars: Vec<String>,
    #[serde(flatten)]
    pub solved: Option<SolvedConfig>,
    pub unifiers: Vec<Substitution>,
    pub configs_explored: usize,
    pub exhaustive: bool,
}

struct Purifier {
    next: usize,
    memo: BTreeMap<Term, String>,
    equations: Vec<Equation>,
    abstraction: Abstraction,
}

impl Purifier {
    fn fresh(&mut self) -> String {
        let name = format!("{FRESH_VAR_PREFIX}{}", self.next);
        self.next += 1;
        name
    }

    fn std_pure(&mut self, t: &Term) -> Term {
        match t {
            Term::Var(..) | Term::Const(..) => t.clone(),
            Term::Xor(_) | Term::Zero => self.alien(t),
            _ => t.map_args(|a| self.std_pure(a)),
        }
    }

    fn acun_pure(&mut self, t: &Term) -> Term {
        match t {
            Term::Var(..) | Term::Const(..) | Term::Zero => t.clone(),
            Term::Xor(ts) => Term::Xor(ts.iter().map(|c| self.acun_pure(c)).collect()),
            _ => self.alien(t),
        }
    }

    fn alien(&mut self, t: &Term) -> Term {
        if let Some(v) = self.memo.get(t) {
            return Term::var(v.clone(), Sort::Data);
        }
        let name = self.fresh();
        self.memo.insert(t.clone(), name.clone());
        let v = Term::var(name.clone(), Sort::Data);
        let eq = if t.is_std_rooted() {
            Equation::new(v.clone(), self.std_pure(t), Theory::Std)
        } else {
            Equation::new(v.clone(), self.acun_pure(t), Theory::Acun)
        };
        self.equations.push(eq);
        self.abstraction.insert(name, t.clone());
        v
    }

    fn equation(&mut self, l: &Term, r: &Term) {
        let (l, r) = if r.is_std_rooted() && l.is_acun_rooted() { (r, l) } else { (l, r) };
        if l.is_std_rooted() && r.is_acun_rooted() {
            let name = self.fresh();
            let v = Term::var(name, Sort::Data);
            let ls = self.std_pure(l);
            self.equations.push(Equation::new(v.clone(), ls, Theory::Std));
            let ra = self.acun_pure(r);
            self.equations.push(Equation::new(v, ra, Theory::Acun));
        } else if l.is_acun_rooted() || r.is_acun_rooted() {
            let (la, ra) = (self.acun_pure(l), self.acun_pure(r));
            self.equations.push(Equation::new(la, ra, Theory::Acun));
        } else {
            let (ls, rs) = (self.std_pure(l), self.std_pure(r));
            self.equations.push(Equation::new(ls, rs, Theory::Std));
        }
    }
}

/// Replaces alien subterms by fresh variables and splits every equation
/// into theory-homogeneous ones. Each returned equation carries the theory
/// its two sides are pure in.
pub fn purify(p: &UnificationProblem) -> (UnificationProblem, Abstraction) {
    let mut pur = Purifier { next: 0, memo: BTreeMap::new(), equations: Vec::new(), abstraction: BTreeMap::new() };
    for e in &p.equations {
        pur.equation(&e.left.normalize(), &e.right.normalize());
    }
    (UnificationProblem { equations: pur.equations, theory: Theory::Sua }, pur.abstraction)
}

/// Which variables each theory instantiates, and the Step-5 constants that
/// stand for the others.
#[derive(Debug, Clone, Default)]
pub struct VarSplit {
    pub v1: BTreeSet<String>,
    pub v2: BTreeSet<String>,
    /// constant name ↦ the variable it stands for
    pub constants: BTreeMap<String, String>,
    pub sorts: BTreeMap<String, Sort>,
}

/// Combines a STD unifier and an ACUN unifier along `order`: the least
/// variable takes its own theory's binding, every later one takes its
/// binding with the stand-in constants replaced by the already combined
/// values of their variables.
pub fn combine_unifiers(s1: &Substitution, s2: &Substitution, order: &[String], split: &VarSplit) -> Result<Substitution, UnifyError> {
    let mut combined = Substitution::new();
    let mut defined: BTreeMap<String, Term> = BTreeMap::new();
    let mut sequence: Vec<String> = order.to_vec();
    for v in split.v1.iter().chain(split.v2.iter()) {
        if !sequence.contains(v) {
            sequence.push(v.clone());
        }
    }
    for x in &sequence {
        let own = if split.v2.contains(x) { s2 } else { s1 };
        let sort = split.sorts.get(x).copied().unwrap_or(Sort::Data);
        let raw = own.get(x).cloned().unwrap_or_else(|| Term::var(x.clone(), sort));
        let value = replace_constants(&raw, &split.constants, &defined).map_err(|y| UnifyError::OrderCycle(x.clone(), y))?.normalize();
        defined.insert(x.clone(), value.clone());
        combined.insert(x.clone(), value);
    }
    Ok(combined)
}

fn replace_constants(t: &Term, constants: &BTreeMap<String, String>, defined: &BTreeMap<String, Term>) -> Result<Term, String> {
    match t {
        Term::Const(c, _) => match constants.get(c) {
            Some(y) => defined.get(y).cloned().ok_or_else(|| y.clone()),
            None => Ok(t.clone()),
        },
        Term::Var(..) | Term::Zero => Ok(t.clone()),
        _ => {
            let mut err = None;
            let out = t.map_args(|a| match replace_constants(a, constants, defined) {
                Ok(v) => v,
                Err(y) => {
                    err.get_or_insert(y);
                    a.clone()
                }
            });
            err.map_or(Ok(out), Err)
        }
    }
}

fn equation_vars(eqs: &[Equation]) -> BTreeMap<String, Sort> {
    let mut out = BTreeSet::new();
    for e in eqs {
        e.left.collect_vars(&mut out);
        e.right.collect_vars(&mut out);
    }
    out.into_iter().collect()
}

fn apply_eqs(s: &Substitution, eqs: &[Equation]) -> Vec<Equation> {
    eqs.iter().map(|e| Equation::new(s.apply(&e.left), s.apply(&e.right), e.theory)).collect()
}

fn eqs_key(eqs: &[Equation]) -> String {
    eqs.iter().map(|e| format!("{}={};", e.left, e.right)).collect()
}

fn is_fresh(name: &str) -> bool {
    name.starts_with(FRESH_VAR_PREFIX)
}

fn constant_vars(t: &Term, constants: &BTreeMap<String, String>, out: &mut Vec<String>) {
    match t {
        Term::Const(c, _) => {
            if let Some(v) = constants.get(c) {
                out.push(v.clone());
            }
        }
        _ => t.args().into_iter().for_each(|a| constant_vars(a, constants, out)),
    }
}

/// Every binding X ↦ t may only mention stand-ins for variables smaller than X.
fn respects_order(s: &Substitution, constants: &BTreeMap<String, String>, pos: &HashMap<String, usize>) -> bool {
    s.iter().all(|(x, t)| {
        let mut deps = Vec::new();
        constant_vars(t, constants, &mut deps);
        deps.iter().all(|y| pos[y] < pos[x])
    })
}

fn mentions_constants(t: &Term, constants: &BTreeMap<String, String>) -> bool {
    let mut v = Vec::new();
    constant_vars(t, constants, &mut v);
    !v.is_empty()
}

/// Unifies `p` modulo STD ∪ ACUN. Every returned unifier is re-checked
/// against the original equations. `exhaustive` in the trace is false when
/// the configuration budget ran out; with no unifier found that case is
/// reported as [`UnifyError::BudgetExhausted`].
pub fn bsca_unify(p: &UnificationProblem, budget: &BscaBudget) -> Result<(Vec<Substitution>, BscaTrace), UnifyError> {
    let original = UnificationProblem {
        equations: p.equations.iter().map(|e| Equation::new(e.left.normalize(), e.right.normalize(), Theory::Sua)).collect(),
        theory: Theory::Sua,
    };
    let orig_vars = original.vars();
    let (gamma2, abstraction) = purify(&original);

    let (std_eqs, acun_eqs): (Vec<Equation>, Vec<Equation>) = gamma2.equations.iter().cloned().partition(|e| e.theory == Theory::Std);
    let sorts: BTreeMap<String, Sort> = equation_vars(&gamma2.equations);
    let std_vars = equation_vars(&std_eqs);
    let acun_vars = equation_vars(&acun_eqs);
    let shared: Vec<String> = std_vars.keys().filter(|v| acun_vars.contains_key(*v)).cloned().collect();

    let mut trace = BscaTrace {
        input: original.clone(),
        gamma1: gamma2.equations.clone(),
        gamma2: gamma2.equations.clone(),
        abstraction,
        shared_vars: shared.clone(),
        solved: None,
        unifiers: Vec::new(),
        configs_explored: 0,
        exhaustive: true,
    };

    let mut found: BTreeSet<Substitution> = BTreeSet::new();
    let mut std_cache: HashMap<String, Option<Vec<Substitution>>> = HashMap::new();
    let mut configs = 0usize;

    'partitions: for partition in enumerate_identifications(&shared, budget.max_shared_vars)? {
        // Step 3: identify shared variables block-wise.
        let Some(rho) = identification(&partition, &sorts) else { continue };
        let gamma3 = apply_eqs(&rho, &gamma2.equations);
        // Step 4: split by theory.
        let (g41, g42): (Vec<Equation>, Vec<Equation>) = gamma3.iter().cloned().partition(|e| e.theory == Theory::Std);
        let vars41 = equation_vars(&g41);
        let vars42 = equation_vars(&g42);
        // Fixing variables to constants only narrows each side, so a side
        // with no solution while every variable is free rules out the block.
        let std_free = std_cache
            .entry(eqs_key(&g41))
            .or_insert_with(|| unify_std_pairs(g41.iter().map(|e| (e.left.clone(), e.right.clone())).collect(), XorMode::Reject));
        if std_free.is_none() {
            configs += 1;
            continue;
        }
        let free_sys = AcunSystem::from_pairs(g42.iter().map(|e| (&e.left, &e.right)))?;
        if !acun_consistent(&free_sys) {
            configs += 1;
            continue;
        }
        let shared_reps: Vec<String> = vars41.keys().filter(|v| vars42.contains_key(*v)).cloned().collect();
        let mut all_vars: BTreeMap<String, Sort> = vars41.clone();
        all_vars.extend(vars42.clone());
        let const_names: BTreeMap<String, Term> =
            all_vars.iter().enumerate().map(|(i, (v, s))| (v.clone(), Term::constant(format!("{FRESH_CONST_PREFIX}{i}"), *s))).collect();
        let constants: BTreeMap<String, String> = const_names
            .iter()
            .map(|(v, c)| {
                (
                    match c {
                        Term::Const(n, _) => n.clone(),
                        _ => unreachable!(),
                    },
                    v.clone(),
                )
            })
            .collect();

        // Step 5: theory assignment of shared variables.
        for mask in 0u64..(1u64 << shared_reps.len()) {
            let mut split = VarSplit { constants: constants.clone(), sorts: all_vars.clone(), ..VarSplit::default() };
            for v in all_vars.keys() {
                let acun_owned = match shared_reps.iter().position(|s| s == v) {
                    Some(i) => mask & (1 << i) != 0,
                    None => !vars41.contains_key(v),
                };
                if acun_owned {
                    split.v2.insert(v.clone());
                } else {
                    split.v1.insert(v.clone());
                }
            }
            let mut beta = Substitution::new();
            for v in split.v2.iter().filter(|v| vars41.contains_key(*v)) {
                beta.insert(v.clone(), const_names[v].clone());
            }
            let to_std = beta.clone();
            let mut to_acun = Substitution::new();
            for v in split.v1.iter().filter(|v| vars42.contains_key(*v)) {
                to_acun.insert(v.clone(), const_names[v].clone());
                beta.insert(v.clone(), const_names[v].clone());
            }
            let g51 = apply_eqs(&to_std, &g41);
            let g52 = apply_eqs(&to_acun, &g42);

            let std_solutions = std_cache
                .entry(eqs_key(&g51))
                .or_insert_with(|| unify_std_pairs(g51.iter().map(|e| (e.left.clone(), e.right.clone())).collect(), XorMode::Reject))
                .clone();
            let Some(std_solutions) = std_solutions else {
                configs += 1;
                continue;
            };
            let sys = AcunSystem::from_pairs(g52.iter().map(|e| (&e.left, &e.right)))?;

            let needs_order = std_solutions.iter().any(|s| s.iter().any(|(_, t)| mentions_constants(t, &constants)))
                || (!sys.is_ground()
                    && g52.iter().any(|e| mentions_constants(&e.left, &constants) || mentions_constants(&e.right, &constants)));
            let orders: Vec<Vec<String>> = if needs_order && shared_reps.len() > 1 {
                permutations(shared_reps.len())
                    .into_iter()
                    .take(budget.max_orders)
                    .map(|perm| perm.into_iter().map(|i| shared_reps[i].clone()).collect())
                    .collect()
            } else {
                vec![shared_reps.clone()]
            };

            for sigma1 in &std_solutions {
                for order in &orders {
                    configs += 1;
                    if configs > budget.max_configs {
                        trace.exhaustive = false;
                        break 'partitions;
                    }
                    let mut pos: HashMap<String, usize> = HashMap::new();
                    for (i, v) in order.iter().enumerate() {
                        pos.insert(v.clone(), i);
                    }
                    for v in all_vars.keys() {
                        let next = pos.len();
                        pos.entry(v.clone()).or_insert(next);
                    }
                    if !respects_order(sigma1, &constants, &pos) {
                        continue;
                    }
                    let rank = |v: &str, s: Sort| (!matches!(s, Sort::Agent | Sort::Tag), pos[v]);
                    let Some(sigma2) = solve_acun(&sys, rank) else { continue };
                    if !respects_order(&sigma2, &constants, &pos) {
                        continue;
                    }
                    // Step 6: combine.
                    let Ok(combined) = combine_unifiers(sigma1, &sigma2, order, &split) else { continue };
                    let Some(theta) = restrict_to_original(&combined, &rho, &orig_vars, &constants) else { continue };
                    if !original.is_solved_by(&theta) || !theta.is_idempotent() {
                        continue;
                    }
                    if found.insert(theta.clone()) && trace.solved.is_none() {
                        trace.solved = Some(SolvedConfig {
                            var_idp: full_partition(&partition, &sorts),
                            gamma3: gamma3.clone(),
                            gamma4_1: g41.clone(),
                            gamma4_2: g42.clone(),
                            v1: split.v1.iter().cloned().collect(),
                            v2: split.v2.iter().cloned().collect(),
                            order: order.clone(),
                            beta: beta.clone(),
                            gamma5_1: g51.clone(),
                            gamma5_2: g52.clone(),
                            std_unifier: sigma1.clone(),
                            acun_unifier: sigma2.clone(),
                            combined: theta.clone(),
                        });
                    }
                }
            }
        }
    }
    trace.configs_explored = configs.min(budget.max_configs);
    let unifiers = prune_instances(found.into_iter().collect(), &orig_vars);
    if !trace.exhaustive && unifiers.is_empty() {
        return Err(UnifyError::BudgetExhausted { configs: budget.max_configs });
    }
    trace.unifiers = unifiers.clone();
    Ok((unifiers, trace))
}

/// Maps every variable of a block to the block representative. Blocks that
/// mix incompatible sorts are rejected.
fn identification(partition: &Partition, sorts: &BTreeMap<String, Sort>) -> Option<Substitution> {
    let mut rho = Substitution::new();
    for block in partition {
        let specific: BTreeSet<Sort> = block.iter().map(|v| sorts[v]).filter(|s| *s != Sort::Data).collect();
        if specific.len() > 1 {
            return None;
        }
        let rep = block.iter().min_by_key(|v| (sorts[*v] == Sort::Data, is_fresh(v), (*v).clone())).expect("non-empty block");
        for v in block {
            if v != rep {
                rho.insert(v.clone(), Term::var(rep.clone(), sorts[rep]));
            }
        }
    }
    Some(rho)
}

fn full_partition(partition: &Partition, sorts: &BTreeMap<String, Sort>) -> Partition {
    let covered: BTreeSet<&String> = partition.iter().flatten().collect();
    let mut out: Partition = partition.clone();
    for v in sorts.keys() {
        if !covered.contains(v) {
            out.push(vec![v.clone()]);
        }
    }
    out.sort();
    out
}

fn restrict_to_original(
    combined: &Substitution,
    rho: &Substitution,
    orig_vars: &BTreeSet<(String, Sort)>,
    constants: &BTreeMap<String, String>,
) -> Option<Substitution> {
    let mut theta = Substitution::new();
    for (x, s) in orig_vars {
        let rep = rho.apply(&Term::var(x.clone(), *s));
        let value = combined.apply(&rep);
        let value = match (&value, &rep) {
            // an unbound representative keeps its own sort
            (Term::Var(n, _), Term::Var(m, rs)) if n == m => Term::var(n.clone(), *rs),
            _ => value,
        };
        if mentions_constants(&value, constants) || !s.admits(&value) {
            return None;
        }
        theta.insert(x.clone(), value);
    }
    Some(theta)
}
