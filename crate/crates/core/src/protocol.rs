//! Protocols as role strands, their instantiation into semi-bundles, the
//! initial intruder knowledge, and the static design checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Report, Witness};
use crate::subst::Substitution;
use crate::term::{is_interm, Sort, Term};
use crate::unify::{match_into, unify_std_pairs, XorMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("role {0} has no nodes")]
    EmptyRole(String),
    #[error("secret variable {0} is not declared fresh")]
    SecretNotFresh(String),
    #[error("fresh variable {0} does not occur in any role")]
    FreshVarUnused(String),
    #[error("cannot name variable {var} with {constant}: sort mismatch")]
    SortMismatch { var: String, constant: String },
    #[error("at least one session per role is required")]
    NoSessions,
    #[error("unknown role {0}")]
    UnknownRole(String),
    #[error("secret constant {0} cannot be part of the intruder knowledge")]
    SecretInIik(String),
    #[error("label {0} already occurs in the protocol")]
    LabelCollision(String),
    #[error("a label must be a constant of sort Tag, got {0}")]
    BadLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Send,
    #[serde(rename = "-")]
    Recv,
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Send => "+",
            Sign::Recv => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Node {
    pub sign: Sign,
    pub term: Term,
}

impl Node {
    pub fn new(sign: Sign, term: Term) -> Node {
        Node { sign, term: term.normalize() }
    }

    pub fn send(term: Term) -> Node {
        Node::new(Sign::Send, term)
    }

    pub fn recv(term: Term) -> Node {
        Node::new(Sign::Recv, term)
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.sign, self.term.to_dsl())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Strand {
    pub nodes: Vec<Node>,
}

impl Strand {
    pub fn new(nodes: Vec<Node>) -> Strand {
        Strand { nodes }
    }

    pub fn apply(&self, s: &Substitution) -> Strand {
        Strand { nodes: self.nodes.iter().map(|n| Node::new(n.sign, s.apply(&n.term))).collect() }
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.nodes.iter().map(|n| &n.term)
    }

    pub fn vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        for t in self.terms() {
            t.collect_vars(&mut out);
        }
        out
    }
}

impl fmt::Display for Strand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[ ")?;
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str(" ]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    pub strand: Strand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protocol {
    pub name: String,
    pub roles: Vec<Role>,
    pub fresh_vars: BTreeSet<String>,
    pub secret_vars: BTreeSet<String>,
}

impl Protocol {
    pub fn new(
        name: impl Into<String>,
        roles: Vec<Role>,
        fresh_vars: BTreeSet<String>,
        secret_vars: BTreeSet<String>,
    ) -> Result<Protocol, ProtocolError> {
        let p = Protocol { name: name.into(), roles, fresh_vars, secret_vars };
        for r in &p.roles {
            if r.strand.nodes.is_empty() {
                return Err(ProtocolError::EmptyRole(r.name.clone()));
            }
        }
        if let Some(s) = p.secret_vars.difference(&p.fresh_vars).next() {
            return Err(ProtocolError::SecretNotFresh(s.clone()));
        }
        let used: BTreeSet<String> = p.vars().into_iter().map(|(n, _)| n).collect();
        if let Some(f) = p.fresh_vars.difference(&used).next() {
            return Err(ProtocolError::FreshVarUnused(f.clone()));
        }
        Ok(p)
    }

    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.roles.iter().flat_map(|r| r.strand.terms())
    }

    pub fn vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        for t in self.terms() {
            t.collect_vars(&mut out);
        }
        out
    }

    pub fn constants(&self) -> BTreeSet<Term> {
        self.terms().flat_map(Term::constants).collect()
    }

    pub fn subterms(&self) -> BTreeSet<Term> {
        self.terms().flat_map(Term::subterms).collect()
    }

    /// Shared-key subterms.
    pub fn long_term_keys(&self) -> BTreeSet<Term> {
        self.subterms().into_iter().filter(|t| matches!(t, Term::Sh(..))).collect()
    }

    /// Applies `f` to every node term.
    pub fn map_terms(&self, mut f: impl FnMut(&Term) -> Term) -> Protocol {
        let roles = self
            .roles
            .iter()
            .map(|r| Role {
                name: r.name.clone(),
                strand: Strand::new(r.strand.nodes.iter().map(|n| Node::new(n.sign, f(&n.term))).collect()),
            })
            .collect();
        Protocol { roles, ..self.clone() }
    }

    /// Appends `suffix` to every variable name, fresh and secret sets included.
    pub fn rename_vars(&self, suffix: &str) -> Protocol {
        let renaming: Substitution = self.vars().into_iter().map(|(n, s)| (n.clone(), Term::var(format!("{n}{suffix}"), s))).collect();
        let mut out = self.map_terms(|t| renaming.apply(t));
        out.fresh_vars = self.fresh_vars.iter().map(|v| format!("{v}{suffix}")).collect();
        out.secret_vars = self.secret_vars.iter().map(|v| format!("{v}{suffix}")).collect();
        out
    }
}

/// One instantiated role inside a semi-bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub role: String,
    pub index: usize,
    pub substitution: Substitution,
    pub strand: Strand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemiBundle {
    pub source: Protocol,
    pub strands: Vec<Instance>,
    pub fresh_constants: BTreeSet<Term>,
    pub secret_constants: BTreeSet<Term>,
    pub long_term_keys: BTreeSet<Term>,
    /// Constants that instantiate non-fresh variables.
    pub public_constants: BTreeSet<Term>,
}

impl SemiBundle {
    /// Every strand is its role under its recorded substitution, and a
    /// syntactic match of the role onto the strand exists.
    pub fn is_well_formed(&self) -> bool {
        self.strands.iter().all(|inst| {
            let Some(role) = self.source.role(&inst.role) else { return false };
            if role.strand.apply(&inst.substitution) != inst.strand {
                return false;
            }
            let mut rho = Substitution::new();
            role.strand.nodes.len() == inst.strand.nodes.len()
                && role.strand.nodes.iter().zip(&inst.strand.nodes).all(|(r, s)| r.sign == s.sign && match_into(&r.term, &s.term, &mut rho))
        })
    }

    pub fn agent_constants(&self) -> BTreeSet<Term> {
        self.strands
            .iter()
            .flat_map(|i| i.strand.terms().flat_map(Term::constants))
            .filter(|c| matches!(c, Term::Const(_, Sort::Agent)))
            .collect()
    }
}

/// Agent constants chosen for the own-identity variable of a role, one per
/// session. Roles without an entry get session-indexed names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Naming {
    pub agents: BTreeMap<String, Vec<Term>>,
}

/// Hands out strand indices and constant names for one analysis, so that
/// fresh constants of different semi-bundles never coincide.
#[derive(Debug, Clone, Default)]
pub struct AnalysisSession {
    next_strand: usize,
    counters: BTreeMap<String, usize>,
}

impl AnalysisSession {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh_name(&mut self, base: &str) -> String {
        let n = self.counters.entry(base.to_string()).or_insert(0);
        *n += 1;
        format!("{base}{n}")
    }

    /// Instantiates every role `sessions_per_role` times.
    pub fn make_semibundle(&mut self, p: &Protocol, sessions_per_role: usize, naming: &Naming) -> Result<SemiBundle, ProtocolError> {
        let plan: BTreeMap<String, usize> = p.roles.iter().map(|r| (r.name.clone(), sessions_per_role)).collect();
        self.make_semibundle_for(p, &plan, naming)
    }

    /// Instantiates the listed roles the given number of times each, in
    /// protocol role order.
    pub fn make_semibundle_for(
        &mut self,
        p: &Protocol,
        plan: &BTreeMap<String, usize>,
        naming: &Naming,
    ) -> Result<SemiBundle, ProtocolError> {
        if plan.is_empty() || plan.values().all(|n| *n == 0) {
            return Err(ProtocolError::NoSessions);
        }
        if let Some(r) = plan.keys().find(|r| p.role(r).is_none()) {
            return Err(ProtocolError::UnknownRole(r.clone()));
        }
        let mut bundle = SemiBundle {
            source: p.clone(),
            strands: Vec::new(),
            fresh_constants: BTreeSet::new(),
            secret_constants: BTreeSet::new(),
            long_term_keys: p.long_term_keys(),
            public_constants: BTreeSet::new(),
        };
        for role in &p.roles {
            let count = plan.get(&role.name).copied().unwrap_or(0);
            let own_fresh = own_fresh_vars(role, &p.fresh_vars);
            let vars = role.strand.vars();
            for session in 0..count {
                self.next_strand += 1;
                let index = self.next_strand;
                let mut sigma = Substitution::new();
                for (v, sort) in &vars {
                    let value = if *sort == Sort::Agent && *v == role.name {
                        let c = match naming.agents.get(&role.name).and_then(|cs| cs.get(session)) {
                            Some(c) => c.clone(),
                            None => Term::constant(self.fresh_name(&v.to_lowercase()), Sort::Agent),
                        };
                        if !matches!(c, Term::Const(_, Sort::Agent)) {
                            return Err(ProtocolError::SortMismatch { var: v.clone(), constant: c.to_dsl() });
                        }
                        bundle.public_constants.insert(c.clone());
                        c
                    } else if own_fresh.contains(v) {
                        let c = Term::constant(self.fresh_name(&v.to_lowercase()), *sort);
                        bundle.fresh_constants.insert(c.clone());
                        if p.secret_vars.contains(v) {
                            bundle.secret_constants.insert(c.clone());
                        }
                        c
                    } else {
                        Term::var(format!("{v}{index}"), *sort)
                    };
                    sigma.insert(v.clone(), value);
                }
                bundle.strands.push(Instance {
                    id: format!("{}.{}{}", p.name, role.name, session + 1),
                    role: role.name.clone(),
                    index,
                    strand: role.strand.apply(&sigma),
                    substitution: sigma,
                });
            }
        }
        Ok(bundle)
    }
}

/// Single-bundle convenience; bundles built in separate calls do not share
/// a naming session.
pub fn make_semibundle(p: &Protocol, sessions_per_role: usize, naming: &Naming) -> Result<SemiBundle, ProtocolError> {
    AnalysisSession::new().make_semibundle(p, sessions_per_role, naming)
}

/// Fresh variables the role itself generates: their first occurrence is in
/// a sent message.
fn own_fresh_vars(role: &Role, fresh: &BTreeSet<String>) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut own = BTreeSet::new();
    for n in &role.strand.nodes {
        for (v, _) in n.term.vars() {
            if seen.insert(v.clone()) && n.sign == Sign::Send && fresh.contains(&v) {
                own.insert(v);
            }
        }
    }
    own
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Iik {
    pub terms: BTreeSet<Term>,
}

impl Iik {
    pub fn contains(&self, t: &Term) -> bool {
        self.terms.contains(t)
    }
}

/// The attacker's name, zero, every agent constant in scope with its public
/// key, every non-fresh instantiation constant, the constants written in
/// the protocols themselves, and `extra`.
pub fn build_iik(bundles: &[SemiBundle], extra: &BTreeSet<Term>) -> Result<Iik, ProtocolError> {
    let secrets: BTreeSet<&Term> = bundles.iter().flat_map(|b| &b.secret_constants).collect();
    if let Some(s) = extra.iter().map(Term::normalize).find(|t| t.subterms().iter().any(|u| secrets.contains(u))) {
        return Err(ProtocolError::SecretInIik(s.to_dsl()));
    }
    let mut terms = BTreeSet::new();
    let eps = Term::attacker();
    terms.insert(Term::pk(eps.clone()));
    terms.insert(eps);
    terms.insert(Term::Zero);
    for b in bundles {
        for a in b.agent_constants() {
            terms.insert(Term::pk(a.clone()));
            terms.insert(a);
        }
        terms.extend(b.public_constants.iter().cloned());
        for c in b.source.constants() {
            if let Term::Const(_, Sort::Agent) = c {
                terms.insert(Term::pk(c.clone()));
            }
            terms.insert(c);
        }
    }
    terms.extend(extra.iter().map(Term::normalize));
    Ok(Iik { terms })
}

/// Long-term keys must never be readable from a message, and no readable
/// part of an encryption key may be readable from a message either.
pub fn check_assumptions(p: &Protocol) -> Report {
    let mut witnesses = Vec::new();
    let messages: BTreeSet<&Term> = p.terms().collect();
    let ltk = p.long_term_keys();
    for m in &messages {
        for k in &ltk {
            if is_interm(k, m) {
                witnesses.push(Witness { condition: "assumption_1".into(), left: (*m).clone(), right: k.clone(), unifier: None });
            }
        }
    }
    for enc in enc_subterms(p) {
        let key = match &enc {
            Term::PEnc(_, k) | Term::SEnc(_, k) => k,
            _ => unreachable!(),
        };
        for x in key.interms() {
            if messages.iter().any(|m| is_interm(&x, m)) {
                witnesses.push(Witness { condition: "assumption_2".into(), left: enc.clone(), right: x, unifier: None });
            }
        }
    }
    Report::new("assumptions", witnesses)
}

/// All encryption subterms of all role terms.
pub fn enc_subterms(p: &Protocol) -> BTreeSet<Term> {
    p.subterms().into_iter().filter(|t| matches!(t, Term::PEnc(..) | Term::SEnc(..))).collect()
}

/// Non-XOR children of XOR subterms.
fn xor_children(p: &Protocol) -> BTreeSet<Term> {
    p.subterms()
        .into_iter()
        .filter_map(|t| match t {
            Term::Xor(ts) => Some(ts),
            _ => None,
        })
        .flatten()
        .filter(|t| !t.is_xor())
        .collect()
}

fn first_unifier(a: &Term, b: &Term) -> Option<Substitution> {
    unify_std_pairs(vec![(a.clone(), b.clone())], XorMode::Free).and_then(|us| us.into_iter().min())
}

/// Checks that no encryption of `p1` unifies with one of `p2`, and no
/// non-XOR child of an XOR term of `p1` unifies with one of `p2`. The
/// variables of `p2` are renamed apart with a `'` suffix first.
pub fn check_munut(p1: &Protocol, p2: &Protocol) -> Report {
    let p2 = p2.rename_vars("'");
    let mut witnesses = Vec::new();
    let mut pairs = |condition: &str, xs: BTreeSet<Term>, ys: BTreeSet<Term>| {
        for a in &xs {
            for b in &ys {
                if let Some(u) = first_unifier(a, b) {
                    witnesses.push(Witness { condition: condition.into(), left: a.clone(), right: b.clone(), unifier: Some(u) });
                }
            }
        }
    };
    pairs("condition_1", enc_subterms(p1), enc_subterms(&p2));
    pairs("condition_2", xor_children(p1), xor_children(&p2));
    Report::new("munut", witnesses)
}

/// Prefixes every encryption plaintext and every non-XOR child of an XOR
/// term with `label`.
pub fn tag_protocol(p: &Protocol, label: &Term) -> Result<Protocol, ProtocolError> {
    let Term::Const(name, Sort::Tag) = label else {
        return Err(ProtocolError::BadLabel(label.to_dsl()));
    };
    let taken = p.constants().iter().any(|c| matches!(c, Term::Const(n, _) if n == name)) || p.vars().iter().any(|(n, _)| n == name);
    if taken {
        return Err(ProtocolError::LabelCollision(name.clone()));
    }
    Ok(p.map_terms(|t| tag_term(t, label)))
}

fn tag_term(t: &Term, label: &Term) -> Term {
    let wrap = |plain: &Term| {
        let tagged = tag_term(plain, label);
        let mut items = vec![label.clone()];
        match tagged {
            Term::Seq(ts) => items.extend(ts),
            other => items.push(other),
        }
        Term::seq(items)
    };
    match t {
        Term::PEnc(m, k) => Term::penc(wrap(m), tag_term(k, label)),
        Term::SEnc(m, k) => Term::senc(wrap(m), tag_term(k, label)),
        Term::Xor(ts) => Term::xor(
            ts.iter().map(|u| if u.is_xor() { tag_term(u, label) } else { Term::seq(vec![label.clone(), tag_term(u, label)]) }).collect(),
        ),
        _ => t.map_args(|a| tag_term(a, label)),
    }
    .normalize()
}
