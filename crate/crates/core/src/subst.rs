use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::term::Term;

/// A finite map from variable names to terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Substitution {
    bindings: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(name: impl Into<String>, t: Term) -> Self {
        let mut s = Self::new();
        s.insert(name, t);
        s
    }

    /// Adds a binding as is. Identity bindings are dropped.
    pub fn insert(&mut self, name: impl Into<String>, t: Term) {
        let name = name.into();
        if t.var_name() == Some(name.as_str()) {
            self.bindings.remove(&name);
        } else {
            self.bindings.insert(name, t);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Term> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.bindings.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &String> {
        self.bindings.keys()
    }

    /// Simultaneous replacement without normalization.
    pub fn apply_raw(&self, t: &Term) -> Term {
        if self.is_empty() {
            return t.clone();
        }
        match t {
            Term::Var(n, _) => self.bindings.get(n).cloned().unwrap_or_else(|| t.clone()),
            Term::Const(..) | Term::Zero => t.clone(),
            _ => t.map_args(|a| self.apply_raw(a)),
        }
    }

    /// Simultaneous replacement followed by normalization.
    pub fn apply(&self, t: &Term) -> Term {
        self.apply_raw(t).normalize()
    }

    /// `self` followed by `later`: x ↦ later(self(x)), plus the bindings of
    /// `later` for variables outside the domain of `self`.
    pub fn then(&self, later: &Substitution) -> Substitution {
        let mut out = Substitution::new();
        for (x, t) in &self.bindings {
            out.insert(x.clone(), later.apply(t));
        }
        for (x, t) in &later.bindings {
            if !self.bindings.contains_key(x) {
                out.insert(x.clone(), t.clone());
            }
        }
        out
    }

    pub fn restrict<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Substitution {
        let keep: BTreeSet<&str> = names.into_iter().collect();
        Substitution {
            bindings: self.bindings.iter().filter(|(k, _)| keep.contains(k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }

    /// No domain variable occurs in any bound term.
    pub fn is_idempotent(&self) -> bool {
        self.bindings.values().all(|t| self.bindings.keys().all(|x| !t.occurs(x)))
    }

    /// Variables occurring in the bound terms.
    pub fn range_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for t in self.bindings.values() {
            out.extend(t.vars().into_iter().map(|(n, _)| n));
        }
        out
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (x, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}/{}", t.to_dsl(), x)?;
        }
        f.write_str("}")
    }
}

impl FromIterator<(String, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (String, Term)>>(iter: I) -> Self {
        let mut s = Substitution::new();
        for (k, v) in iter {
            s.insert(k, v);
        }
        s
    }
}
