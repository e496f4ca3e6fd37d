//! Symbolic constraint solving for bounded-session secrecy.

mod constraint;
mod rules;
mod search;
mod secrecy;

use thiserror::Error;

use crate::protocol::ProtocolError;

pub use constraint::{Constraint, ConstraintSequence};
pub use rules::{applicable_rules, apply_rule, RuleName, Site};
pub use search::{replay, satisfiable, satisfiable_where, RuleStep, SearchStats, Solution, SolverBudget, SolverResult, SolverStatus};
pub use secrecy::{check_secrecy, constraint_sequences, AttackTrace, SecrecyConfig, SecrecyOutcome, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
