use std::fmt;

use serde::{Deserialize, Serialize};

use super::constraint::{Constraint, ConstraintSequence};
use crate::subst::Substitution;
use crate::term::Term;
use crate::unify::{unify_sua, BscaBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Concat,
    Split,
    Penc,
    Pdec,
    Senc,
    Sdec,
    XorR,
    XorL,
    Un,
    Ksub,
}

impl RuleName {
    pub const ALL: [RuleName; 10] = [
        RuleName::Concat,
        RuleName::Split,
        RuleName::Penc,
        RuleName::Pdec,
        RuleName::Senc,
        RuleName::Sdec,
        RuleName::XorR,
        RuleName::XorL,
        RuleName::Un,
        RuleName::Ksub,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleName::Concat => "concat",
            RuleName::Split => "split",
            RuleName::Penc => "penc",
            RuleName::Pdec => "pdec",
            RuleName::Senc => "senc",
            RuleName::Sdec => "sdec",
            RuleName::XorR => "xor_r",
            RuleName::XorL => "xor_l",
            RuleName::Un => "un",
            RuleName::Ksub => "ksub",
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a rule fires: on the active target or on one term-set member.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Target,
    Member(Term),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Target => f.write_str("target"),
            Site::Member(t) => f.write_str(&t.to_dsl()),
        }
    }
}

fn attacker_pk() -> Term {
    Term::pk(Term::attacker())
}

/// Cheap necessary condition for unifiability: compares constructors and
/// constants, treating anything under or at an XOR as a wildcard.
pub(crate) fn may_unify(a: &Term, b: &Term) -> bool {
    match (a, b) {
        (Term::Var(_, s), other) | (other, Term::Var(_, s)) => other.is_var() || other.is_acun_rooted() || s.admits(other),
        (Term::Xor(_) | Term::Zero, _) | (_, Term::Xor(_) | Term::Zero) => true,
        (Term::Const(..), _) | (_, Term::Const(..)) => a == b,
        (Term::Sh(a1, a2), Term::Sh(b1, b2)) => (may_unify(a1, b1) && may_unify(a2, b2)) || (may_unify(a1, b2) && may_unify(a2, b1)),
        _ => {
            let (xs, ys) = (a.args(), b.args());
            std::mem::discriminant(a) == std::mem::discriminant(b)
                && xs.len() == ys.len()
                && xs.iter().zip(&ys).all(|(x, y)| may_unify(x, y))
        }
    }
}

/// Every (rule, site) whose shape condition holds at the active constraint,
/// in rule order and then site order.
pub fn applicable_rules(cs: &ConstraintSequence) -> Vec<(RuleName, Site)> {
    let Some(i) = cs.active() else { return Vec::new() };
    let c = &cs.constraints[i];
    let mut out = Vec::new();
    for rule in RuleName::ALL {
        match rule {
            RuleName::Concat if matches!(c.target, Term::Seq(_)) => out.push((rule, Site::Target)),
            RuleName::Penc if matches!(c.target, Term::PEnc(..)) => out.push((rule, Site::Target)),
            RuleName::Senc if matches!(c.target, Term::SEnc(..)) => out.push((rule, Site::Target)),
            RuleName::XorL if c.target.is_xor() => out.push((rule, Site::Target)),
            RuleName::Split | RuleName::Pdec | RuleName::Sdec | RuleName::XorR | RuleName::Un | RuleName::Ksub => {
                for t in &c.terms {
                    let fits = match rule {
                        RuleName::Split => matches!(t, Term::Seq(_)),
                        RuleName::Pdec => matches!(t, Term::PEnc(_, k) if **k == attacker_pk()),
                        RuleName::Sdec => matches!(t, Term::SEnc(..)),
                        RuleName::XorR => t.is_xor(),
                        RuleName::Un => true,
                        _ => matches!(t, Term::PEnc(_, k) if **k != attacker_pk() && may_unify(k, &attacker_pk())),
                    };
                    if fits {
                        out.push((rule, Site::Member(t.clone())));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

fn without(terms: &std::collections::BTreeSet<Term>, t: &Term) -> std::collections::BTreeSet<Term> {
    let mut out = terms.clone();
    out.remove(t);
    out
}

fn xor_rest(children: &[Term], skip: usize) -> Term {
    Term::xor_normalized(children.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, t)| t.clone()))
}

/// All sequences that `rule` at `site` produces from `cs`. An empty result
/// is a dead end. `cs` must be normal.
pub fn apply_rule(rule: RuleName, site: &Site, cs: &ConstraintSequence, budget: &BscaBudget) -> Vec<ConstraintSequence> {
    apply_rule_traced(rule, site, cs, budget).into_iter().map(|(cs, _)| cs).collect()
}

/// Like [`apply_rule`], also returning the unifier behind each `un` and
/// `ksub` branch.
pub(crate) fn apply_rule_traced(
    rule: RuleName,
    site: &Site,
    cs: &ConstraintSequence,
    budget: &BscaBudget,
) -> Vec<(ConstraintSequence, Option<Substitution>)> {
    let Some(i) = cs.active() else { return Vec::new() };
    let c = &cs.constraints[i];
    let replace = |with: Vec<Constraint>| {
        let mut out = cs.clone();
        out.constraints.splice(i..=i, with);
        out
    };
    let member = match site {
        Site::Member(t) if c.terms.contains(t) => Some(t),
        Site::Member(_) => return Vec::new(),
        Site::Target => None,
    };
    let t = &c.terms;
    let out: Vec<ConstraintSequence> = match (rule, &c.target, member) {
        (RuleName::Concat, Term::Seq(ms), None) => {
            vec![replace(ms.iter().map(|m| Constraint { target: m.clone(), terms: t.clone() }).collect())]
        }
        (RuleName::Split, m, Some(e @ Term::Seq(parts))) => {
            let mut terms = without(t, e);
            terms.extend(parts.iter().cloned());
            vec![replace(vec![Constraint { target: m.clone(), terms }])]
        }
        (RuleName::Penc, Term::PEnc(m, k), None) | (RuleName::Senc, Term::SEnc(m, k), None) => vec![replace(vec![
            Constraint { target: (**k).clone(), terms: t.clone() },
            Constraint { target: (**m).clone(), terms: t.clone() },
        ])],
        (RuleName::Pdec, m, Some(e @ Term::PEnc(plain, k))) if **k == attacker_pk() => {
            let mut terms = without(t, e);
            terms.insert((**plain).clone());
            vec![replace(vec![Constraint { target: m.clone(), terms }])]
        }
        (RuleName::Sdec, m, Some(e @ Term::SEnc(plain, k))) => {
            let rest = without(t, e);
            let mut opened = rest.clone();
            opened.insert((**plain).clone());
            opened.insert((**k).clone());
            vec![replace(vec![Constraint { target: (**k).clone(), terms: rest }, Constraint { target: m.clone(), terms: opened }])]
        }
        (RuleName::XorR, m, Some(e @ Term::Xor(children))) => {
            let rest = without(t, e);
            (0..children.len())
                .map(|j| {
                    let mut with_child = rest.clone();
                    with_child.insert(children[j].clone());
                    replace(vec![
                        Constraint { target: xor_rest(children, j), terms: rest.clone() },
                        Constraint { target: m.clone(), terms: with_child },
                    ])
                })
                .collect()
        }
        // Every child becomes a goal over the same T whichever is split off
        // first, so one split covers all of them.
        (RuleName::XorL, Term::Xor(children), None) => vec![replace(vec![
            Constraint { target: xor_rest(children, 0), terms: t.clone() },
            Constraint { target: children[0].clone(), terms: t.clone() },
        ])],
        (RuleName::Un, m, Some(e)) => {
            if !may_unify(m, e) {
                return Vec::new();
            }
            let Ok(unifiers) = unify_sua(m, e, budget) else { return Vec::new() };
            let mut rest = cs.clone();
            rest.constraints.remove(i);
            return unifiers.into_iter().map(|tau| (rest.instantiate(&tau), Some(tau))).collect();
        }
        (RuleName::Ksub, _, Some(Term::PEnc(_, k))) if **k != attacker_pk() => {
            let Ok(unifiers) = unify_sua(k, &attacker_pk(), budget) else { return Vec::new() };
            return unifiers.into_iter().map(|tau| (cs.instantiate(&tau), Some(tau))).collect();
        }
        _ => Vec::new(),
    };
    out.into_iter().map(|cs| (cs, None)).collect()
}
