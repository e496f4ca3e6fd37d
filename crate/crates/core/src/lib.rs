pub mod cli;
pub mod dsl;
pub mod oracle;
pub mod protocol;
pub mod report;
pub mod solver;
pub mod subst;
pub mod term;
pub mod unify;
