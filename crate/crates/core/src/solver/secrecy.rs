use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::constraint::{Constraint, ConstraintSequence};
use super::search::{satisfiable_where, RuleStep, SolverBudget, SolverStatus};
use super::SolverError;
use crate::protocol::{build_iik, AnalysisSession, Iik, Naming, Node, Protocol, SemiBundle, Sign};
use crate::subst::Substitution;
use crate::term::{Sort, Term};

/// A position in the flattened strand list: (strand, node).
type NodePos = (usize, usize);

struct FlatStrand<'a> {
    id: &'a str,
    nodes: &'a [Node],
}

fn flatten(bundles: &[SemiBundle]) -> Vec<FlatStrand<'_>> {
    bundles.iter().flat_map(|b| b.strands.iter()).map(|i| FlatStrand { id: &i.id, nodes: &i.strand.nodes }).collect()
}

/// Every merge of the strands that keeps each strand's own order.
fn all_interleavings(lens: &[usize]) -> Vec<Vec<NodePos>> {
    fn go(lens: &[usize], next: &mut Vec<usize>, cur: &mut Vec<NodePos>, out: &mut Vec<Vec<NodePos>>) {
        if lens.iter().zip(next.iter()).all(|(l, n)| n == l) {
            out.push(cur.clone());
            return;
        }
        for s in 0..lens.len() {
            if next[s] < lens[s] {
                cur.push((s, next[s]));
                next[s] += 1;
                go(lens, next, cur, out);
                next[s] -= 1;
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(lens, &mut vec![0; lens.len()], &mut Vec::new(), &mut out);
    out
}

/// Merges where every send happens as early as its strand allows. Only the
/// relative order of receives varies; an earlier send only enlarges later
/// term sets, so these merges dominate all others.
fn eager_interleavings(strands: &[&[Node]]) -> Vec<Vec<NodePos>> {
    let recv_counts: Vec<usize> = strands.iter().map(|s| s.iter().filter(|n| n.sign == Sign::Recv).count()).collect();
    let mut out = Vec::new();
    for order in all_interleavings(&recv_counts) {
        let mut next = vec![0usize; strands.len()];
        let mut merged = Vec::new();
        let emit_sends = |s: usize, next: &mut Vec<usize>, merged: &mut Vec<NodePos>| {
            while next[s] < strands[s].len() && strands[s][next[s]].sign == Sign::Send {
                merged.push((s, next[s]));
                next[s] += 1;
            }
        };
        for s in 0..strands.len() {
            emit_sends(s, &mut next, &mut merged);
        }
        for (s, _) in order {
            merged.push((s, next[s]));
            next[s] += 1;
            emit_sends(s, &mut next, &mut merged);
        }
        out.push(merged);
    }
    out
}

fn build_sequence(strands: &[&[Node]], order: &[NodePos], iik: &Iik, secret: &Term) -> ConstraintSequence {
    let mut known: BTreeSet<Term> = iik.terms.clone();
    let mut constraints = Vec::new();
    for &(s, k) in order {
        let node = &strands[s][k];
        match node.sign {
            Sign::Send => {
                known.insert(node.term.clone());
            }
            Sign::Recv => constraints.push(Constraint::new(node.term.clone(), known.iter().cloned())),
        }
    }
    constraints.push(Constraint::new(secret.clone(), known));
    ConstraintSequence::new(constraints)
}

fn node_ids(flat: &[FlatStrand<'_>], order: &[NodePos]) -> Vec<String> {
    order.iter().map(|&(s, k)| format!("{}:{}{}", flat[s].id, k + 1, flat[s].nodes[k].sign)).collect()
}

/// One sequence per interleaving of all strands of all bundles, each ending
/// with the secrecy constraint `secret : T_final`. Interleavings that yield
/// the same sequence up to variable renaming are emitted once.
pub fn constraint_sequences(bundles: &[SemiBundle], iik: &Iik, secret: &Term) -> Vec<ConstraintSequence> {
    let flat = flatten(bundles);
    let strands: Vec<&[Node]> = flat.iter().map(|f| f.nodes).collect();
    let lens: Vec<usize> = strands.iter().map(|s| s.len()).collect();
    let mut seen = HashSet::new();
    all_interleavings(&lens)
        .into_iter()
        .map(|order| build_sequence(&strands, &order, iik, secret))
        .filter(|cs| seen.insert(cs.canonical_key()))
        .collect()
}

/// Cut points of a strand: before each receive, and the full strand. A
/// cut in the middle of a run of sends is dominated by the cut after it.
fn cut_points(nodes: &[Node]) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].sign == Sign::Recv).collect();
    cuts.push(nodes.len());
    cuts
}

/// Sequences for every combination of strand prefixes, with eager sends,
/// paired with the node ids of their interleaving.
fn prefix_sequences(flat: &[FlatStrand<'_>], iik: &Iik, secret: &Term, prefixes: bool) -> Vec<(Vec<String>, ConstraintSequence)> {
    let choices: Vec<Vec<usize>> = flat.iter().map(|f| if prefixes { cut_points(f.nodes) } else { vec![f.nodes.len()] }).collect();
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for c in &choices {
        combos = combos.into_iter().flat_map(|p| c.iter().map(move |&l| [p.clone(), vec![l]].concat())).collect();
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for lens in combos {
        let strands: Vec<&[Node]> = flat.iter().zip(&lens).map(|(f, &l)| &f.nodes[..l]).collect();
        let carries_secret = strands.iter().any(|s| s.iter().any(|n| n.sign == Sign::Send && n.term.subterms().contains(secret)));
        if !carries_secret {
            continue;
        }
        for order in eager_interleavings(&strands) {
            let cs = build_sequence(&strands, &order, iik, secret);
            if seen.insert(cs.canonical_key()) {
                out.push((node_ids(flat, &order), cs));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub protocols: Vec<String>,
    pub sessions: usize,
    pub secret: Term,
    pub interleaving: Vec<String>,
    pub sequence: ConstraintSequence,
    pub iik: Vec<Term>,
    pub rules: Vec<RuleStep>,
    pub substitution: Substitution,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Secure,
    Attack { trace: Box<AttackTrace> },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecrecyOutcome {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub protocols: Vec<String>,
    pub sessions: usize,
    pub secrets: Vec<Term>,
    pub sequences_checked: usize,
    pub sequences_exhausted: usize,
    pub nodes_explored: usize,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone)]
pub struct SecrecyConfig {
    pub sessions: usize,
    pub budget: SolverBudget,
    pub extra_iik: BTreeSet<Term>,
    /// Secret variable names to check; empty means every secret.
    pub secrets: Vec<String>,
    /// Also consider executions in which strands stop before a receive.
    pub prefixes: bool,
    /// Search nodes over all sequences; sequences past it count as over
    /// budget without being searched.
    pub max_total_nodes: usize,
    /// Only count a secret as leaked when the strand that created it is not
    /// talking to the attacker.
    pub honest_partners: bool,
}

impl Default for SecrecyConfig {
    fn default() -> Self {
        SecrecyConfig {
            sessions: 1,
            budget: SolverBudget::default(),
            extra_iik: BTreeSet::new(),
            secrets: Vec::new(),
            prefixes: true,
            max_total_nodes: 5_000_000,
            honest_partners: true,
        }
    }
}

/// Bounded secrecy check of one protocol, or of several run side by side
/// with shared intruder knowledge. `Attack` is reported on the first
/// satisfiable sequence; `Inconclusive` when some sequence hit the budget
/// and none was satisfiable.
pub fn check_secrecy(protocols: &[Protocol], config: &SecrecyConfig) -> Result<SecrecyOutcome, SolverError> {
    let start = Instant::now();
    if config.sessions == 0 {
        return Err(SolverError::Config("at least one session per role is required".into()));
    }
    if protocols.is_empty() {
        return Err(SolverError::Config("no protocol given".into()));
    }
    let mut session = AnalysisSession::new();
    let bundles =
        protocols.iter().map(|p| session.make_semibundle(p, config.sessions, &Naming::default())).collect::<Result<Vec<_>, _>>()?;
    let iik = build_iik(&bundles, &config.extra_iik)?;
    // Secret constant -> agent variables of the strand that created it.
    let mut secrets: BTreeMap<Term, BTreeSet<String>> = BTreeMap::new();
    for b in &bundles {
        for inst in &b.strands {
            let partners: BTreeSet<String> =
                inst.strand.vars().into_iter().filter(|(_, sort)| *sort == Sort::Agent).map(|(v, _)| v).collect();
            for v in &b.source.secret_vars {
                if !config.secrets.is_empty() && !config.secrets.contains(v) {
                    continue;
                }
                if let Some(c @ Term::Const(..)) = inst.substitution.get(v) {
                    secrets.entry(c.clone()).or_default().extend(partners.iter().cloned());
                }
            }
        }
    }
    if secrets.is_empty() {
        return Err(SolverError::Config(if config.secrets.is_empty() {
            "no secret constants to check".into()
        } else {
            format!("no secret constant instantiates {}", config.secrets.join(", "))
        }));
    }

    let flat = flatten(&bundles);
    let names: Vec<String> = protocols.iter().map(|p| p.name.clone()).collect();
    let mut checked = 0;
    let mut exhausted = 0;
    let mut nodes = 0;
    let mut verdict = Verdict::Secure;
    'secrets: for (secret, partners) in &secrets {
        let attacker = Term::attacker();
        let honest = |s: &Substitution| !config.honest_partners || partners.iter().all(|v| s.get(v) != Some(&attacker));
        for (ids, cs) in prefix_sequences(&flat, &iik, secret, config.prefixes) {
            checked += 1;
            let remaining = config.max_total_nodes.saturating_sub(nodes);
            if remaining == 0 {
                exhausted += 1;
                continue;
            }
            let budget = SolverBudget { max_nodes: config.budget.max_nodes.min(remaining), ..config.budget };
            let solve_start = Instant::now();
            let result = satisfiable_where(&cs, &budget, &honest);
            nodes += result.stats.nodes;
            match result.status {
                SolverStatus::Satisfiable => {
                    let solution = result.solutions.into_iter().next().expect("satisfiable has a solution");
                    verdict = Verdict::Attack {
                        trace: Box::new(AttackTrace {
                            protocols: names.clone(),
                            sessions: config.sessions,
                            secret: secret.clone(),
                            interleaving: ids,
                            sequence: cs,
                            iik: iik.terms.iter().cloned().collect(),
                            rules: solution.rules,
                            substitution: solution.substitution,
                            elapsed_ms: solve_start.elapsed().as_millis() as u64,
                        }),
                    };
                    break 'secrets;
                }
                SolverStatus::BudgetExhausted => exhausted += 1,
                SolverStatus::Unsatisfiable => {}
            }
        }
    }
    if verdict == Verdict::Secure && exhausted > 0 {
        verdict = Verdict::Inconclusive;
    }
    Ok(SecrecyOutcome {
        verdict,
        protocols: names,
        sessions: config.sessions,
        secrets: secrets.into_keys().collect(),
        sequences_checked: checked,
        sequences_exhausted: exhausted,
        nodes_explored: nodes,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}
