use super::{prune_instances, UnificationProblem, UnifyError};
use crate::subst::Substitution;
use crate::term::{Term, Theory};

/// How XOR nodes are treated by the syntactic unifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum XorMode {
    /// XOR nodes are a caller error; the pair simply fails to unify.
    Reject,
    /// XOR is an uninterpreted commutative symbol (children matched up to
    /// permutation). Used by the tagging checker, where STD-unifiability of
    /// protocol terms containing XOR must be decided without ACUN.
    Free,
}

const MAX_FREE_XOR_ARITY: usize = 6;

/// Complete set of most general STD unifiers, with `sh` commutativity
/// handled by branching over both argument orders.
pub fn unify_std(p: &UnificationProblem) -> Result<Vec<Substitution>, UnifyError> {
    for e in &p.equations {
        for t in [&e.left, &e.right] {
            if t.contains_xor() {
                return Err(UnifyError::MixedTheoryTerm(t.to_dsl()));
            }
        }
    }
    let pairs = p.equations.iter().map(|e| (e.left.clone(), e.right.clone())).collect();
    Ok(unify_std_pairs(pairs, XorMode::Reject).unwrap_or_default())
}

/// Returns `None` when the pairs are not unifiable.
pub(crate) fn unify_std_pairs(pairs: Vec<(Term, Term)>, mode: XorMode) -> Option<Vec<Substitution>> {
    let mut vars = std::collections::BTreeSet::new();
    for (l, r) in &pairs {
        l.collect_vars(&mut vars);
        r.collect_vars(&mut vars);
    }
    let mut out = Vec::new();
    solve(pairs, Substitution::new(), mode, &mut out);
    if out.is_empty() {
        return None;
    }
    Some(prune_instances(out, &vars))
}

fn canon(s: &Substitution, t: &Term) -> Term {
    s.apply_raw(t).canonical(Theory::Std)
}

fn solve(mut pending: Vec<(Term, Term)>, sigma: Substitution, mode: XorMode, out: &mut Vec<Substitution>) {
    let mut sigma = sigma;
    while let Some((l, r)) = pending.pop() {
        let (l, r) = (canon(&sigma, &l), canon(&sigma, &r));
        if l == r {
            continue;
        }
        match (&l, &r) {
            (Term::Var(..), _) | (_, Term::Var(..)) => match bind(&l, &r) {
                Some((x, t)) => {
                    let step = Substitution::singleton(x, t);
                    sigma = compose_std(&sigma, &step);
                }
                None => return,
            },
            (Term::Seq(xs), Term::Seq(ys)) if xs.len() == ys.len() => {
                pending.extend(xs.iter().cloned().zip(ys.iter().cloned()));
            }
            (Term::PEnc(a, b), Term::PEnc(c, d)) | (Term::SEnc(a, b), Term::SEnc(c, d)) => {
                pending.push(((**a).clone(), (**c).clone()));
                pending.push(((**b).clone(), (**d).clone()));
            }
            (Term::Pk(a), Term::Pk(b)) => pending.push(((**a).clone(), (**b).clone())),
            (Term::Sh(a, b), Term::Sh(c, d)) => {
                let mut swapped = pending.clone();
                swapped.push(((**a).clone(), (**d).clone()));
                swapped.push(((**b).clone(), (**c).clone()));
                solve(swapped, sigma.clone(), mode, out);
                pending.push(((**a).clone(), (**c).clone()));
                pending.push(((**b).clone(), (**d).clone()));
            }
            (Term::Xor(xs), Term::Xor(ys)) if mode == XorMode::Free && xs.len() == ys.len() => {
                if xs.len() > MAX_FREE_XOR_ARITY {
                    pending.extend(xs.iter().cloned().zip(ys.iter().cloned()));
                    continue;
                }
                let perms = permutations(ys.len());
                let (last, rest) = perms.split_last().expect("at least one permutation");
                for perm in rest {
                    let mut branch = pending.clone();
                    branch.extend(perm.iter().map(|&j| ys[j].clone()).zip(xs.iter().cloned()));
                    solve(branch, sigma.clone(), mode, out);
                }
                pending.extend(last.iter().map(|&j| ys[j].clone()).zip(xs.iter().cloned()));
            }
            _ => return,
        }
    }
    out.push(sigma);
}

/// Orients a variable binding, respecting sorts and the occurs check.
fn bind(l: &Term, r: &Term) -> Option<(String, Term)> {
    let try_bind = |v: &Term, t: &Term| -> Option<(String, Term)> {
        match v {
            Term::Var(x, s) if s.admits(t) && !t.occurs(x) => Some((x.clone(), t.clone())),
            _ => None,
        }
    };
    try_bind(l, r).or_else(|| try_bind(r, l))
}

fn compose_std(sigma: &Substitution, step: &Substitution) -> Substitution {
    let mut out = Substitution::new();
    for (x, t) in sigma.iter() {
        out.insert(x.clone(), canon(step, t));
    }
    for (x, t) in step.iter() {
        if !sigma.contains(x) {
            out.insert(x.clone(), t.clone());
        }
    }
    out
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
