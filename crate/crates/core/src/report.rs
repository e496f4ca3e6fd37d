//! The JSON report shape shared by the static checks.

use serde::{Deserialize, Serialize};

use crate::subst::Substitution;
use crate::term::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Passed,
    Violated,
}

/// One offending pair. For assumption checks `left` is the protocol term
/// and `right` the key material found in it; for μ-NUT they are the two
/// unifiable terms and `unifier` is a most general unifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Witness {
    pub condition: String,
    pub left: Term,
    pub right: Term,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unifier: Option<Substitution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub status: Status,
    pub witnesses: Vec<Witness>,
}

impl Report {
    /// Sorts and dedups the witnesses; the status follows from them.
    pub fn new(check: impl Into<String>, mut witnesses: Vec<Witness>) -> Report {
        witnesses.sort();
        witnesses.dedup();
        let status = if witnesses.is_empty() { Status::Passed } else { Status::Violated };
        Report { check: check.into(), status, witnesses }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Passed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
