//! Command-line front end. `run` is the whole program minus process exit so
//! it can be driven from tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dsl::{parse_protocol, print_protocol};
use crate::oracle::verify_solution;
use crate::protocol::{check_assumptions, check_munut, tag_protocol, Protocol};
use crate::report::Report;
use crate::solver::{check_secrecy, replay, AttackTrace, SecrecyConfig, SecrecyOutcome, SolverBudget, Verdict};
use crate::term::{Sort, Term};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "xorsleuth", version, about = "Bounded secrecy analysis for XOR protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a protocol file and print it back in normal form.
    Parse {
        file: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check the key-secrecy assumptions on a protocol.
    CheckAssumptions {
        file: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check that two protocols satisfy the non-unifiability tagging condition.
    CheckMunut {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Tag every plaintext and XOR child with a label constant.
    Tag {
        file: PathBuf,
        #[arg(long)]
        label: String,
        /// Write the tagged protocol here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Bounded secrecy analysis, alone or combined with other protocols.
    Analyze {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        sessions: usize,
        /// Secret variable names; all declared secrets when omitted.
        #[arg(long, num_args = 1..)]
        secret: Vec<String>,
        #[arg(long, num_args = 1..)]
        combined: Vec<PathBuf>,
        /// Maximum rule applications along one search branch.
        #[arg(long)]
        branch_budget: Option<usize>,
        /// Maximum search nodes per constraint sequence.
        #[arg(long)]
        node_budget: Option<usize>,
        /// Maximum search nodes over the whole analysis.
        #[arg(long)]
        total_budget: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Re-check an attack trace with the ground derivation oracle.
        #[arg(long)]
        oracle_verify: bool,
        /// Also count secrets of sessions whose partner is the attacker.
        #[arg(long)]
        any_partner: bool,
    },
    /// Re-check a saved attack trace with the ground derivation oracle.
    OracleVerify {
        trace: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub command: String,
    pub inputs: Vec<InputFile>,
    pub config: Value,
    pub results: Value,
    pub exit_code: i32,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

struct Outcome {
    envelope: ReportEnvelope,
    text: String,
    json: Option<PathBuf>,
}

fn read(path: &Path, inputs: &mut Vec<InputFile>) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    inputs.push(InputFile { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
    String::from_utf8(bytes).map_err(|_| Failure(format!("{}: not UTF-8", path.display())))
}

fn load(path: &Path, inputs: &mut Vec<InputFile>) -> Result<Protocol, Failure> {
    let text = read(path, inputs)?;
    parse_protocol(&text).map_err(|e| Failure(format!("{}:{e}", path.display())))
}

fn envelope(command: &str, inputs: Vec<InputFile>, config: Value, results: Value, exit_code: i32) -> ReportEnvelope {
    ReportEnvelope { command: command.into(), inputs, config, results, exit_code }
}

fn report_text(r: &Report) -> String {
    let mut s = format!("{}: {}\n", r.check, if r.passed() { "passed" } else { "violated" });
    for w in &r.witnesses {
        s.push_str(&format!("  {}: {} ~ {}", w.condition, w.left.to_dsl(), w.right.to_dsl()));
        if let Some(u) = &w.unifier {
            s.push_str(&format!(" under {u}"));
        }
        s.push('\n');
    }
    s
}

fn status_code(passed: bool) -> i32 {
    if passed {
        EXIT_OK
    } else {
        EXIT_VIOLATED
    }
}

/// Oracle and replay check of a trace. Replay confirms the rule steps lead
/// to a simple sequence; the oracle confirms every constraint on ground terms.
pub fn verify_trace(trace: &AttackTrace, budget: &SolverBudget) -> Value {
    let oracle = verify_solution(&trace.sequence, &trace.substitution);
    let replayed = replay(&trace.sequence, &trace.rules, &budget.unify).map(|cs| cs.is_simple() && cs.substitution == trace.substitution);
    json!({ "oracle": oracle, "replay": replayed.unwrap_or(false) })
}

fn outcome_text(o: &SecrecyOutcome) -> String {
    let secrets: Vec<String> = o.secrets.iter().map(Term::to_dsl).collect();
    let head = format!(
        "protocols: {}\nsessions per role: {}\nsecrets: {}\nsequences checked: {} ({} over budget), nodes: {}\n",
        o.protocols.join(" + "),
        o.sessions,
        secrets.join(", "),
        o.sequences_checked,
        o.sequences_exhausted,
        o.nodes_explored
    );
    let body = match &o.verdict {
        Verdict::Secure => "verdict: secure\n".to_string(),
        Verdict::Inconclusive => "verdict: inconclusive (search budget exhausted)\n".to_string(),
        Verdict::Attack { trace } => {
            let mut s = format!("verdict: attack on {}\ninterleaving:\n", trace.secret.to_dsl());
            for id in &trace.interleaving {
                s.push_str(&format!("  {id}\n"));
            }
            s.push_str("rules:\n");
            for step in &trace.rules {
                s.push_str(&format!("  {}", step.rule.name()));
                if let crate::solver::Site::Member(t) = &step.site {
                    s.push_str(&format!(" on {}", t.to_dsl()));
                }
                s.push('\n');
            }
            s.push_str(&format!("substitution: {}\n", trace.substitution));
            s
        }
    };
    head + &body
}

fn execute(cmd: Command) -> Result<Outcome, Failure> {
    let mut inputs = Vec::new();
    match cmd {
        Command::Parse { file, json } => {
            let p = load(&file, &mut inputs)?;
            let text = print_protocol(&p);
            let results = json!({ "protocol": p.name, "roles": p.roles.len(), "text": text });
            Ok(Outcome { envelope: envelope("parse", inputs, json!({}), results, EXIT_OK), text, json })
        }
        Command::CheckAssumptions { file, json } => {
            let p = load(&file, &mut inputs)?;
            let r = check_assumptions(&p);
            let code = status_code(r.passed());
            let results = serde_json::to_value(&r)?;
            Ok(Outcome { envelope: envelope("check-assumptions", inputs, json!({}), results, code), text: report_text(&r), json })
        }
        Command::CheckMunut { first, second, json } => {
            let p1 = load(&first, &mut inputs)?;
            let p2 = load(&second, &mut inputs)?;
            let r = check_munut(&p1, &p2);
            let code = status_code(r.passed());
            let results = serde_json::to_value(&r)?;
            Ok(Outcome { envelope: envelope("check-munut", inputs, json!({}), results, code), text: report_text(&r), json })
        }
        Command::Tag { file, label, output } => {
            let p = load(&file, &mut inputs)?;
            let tagged = tag_protocol(&p, &Term::constant(label.clone(), Sort::Tag))?;
            let text = print_protocol(&tagged);
            // keywords and capitalized names would read back differently
            if parse_protocol(&text).ok().as_ref() != Some(&tagged) {
                return Err(Failure(format!("label {label:?} is not usable as a constant name")));
            }
            let results = json!({ "protocol": tagged.name, "text": text });
            let config = json!({ "label": label });
            let text = match output {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                    format!("wrote {}\n", path.display())
                }
                None => text,
            };
            Ok(Outcome { envelope: envelope("tag", inputs, config, results, EXIT_OK), text, json: None })
        }
        Command::Analyze {
            file,
            sessions,
            secret,
            combined,
            branch_budget,
            node_budget,
            total_budget,
            json,
            oracle_verify,
            any_partner,
        } => {
            let mut protocols = vec![load(&file, &mut inputs)?];
            for f in &combined {
                protocols.push(load(f, &mut inputs)?);
            }
            let mut budget = SolverBudget::default();
            budget.max_depth = branch_budget.unwrap_or(budget.max_depth);
            budget.max_nodes = node_budget.unwrap_or(budget.max_nodes);
            let mut config = SecrecyConfig { sessions, budget, secrets: secret, honest_partners: !any_partner, ..SecrecyConfig::default() };
            config.max_total_nodes = total_budget.unwrap_or(config.max_total_nodes);
            let outcome = check_secrecy(&protocols, &config)?;
            let mut text = outcome_text(&outcome);
            let mut results = serde_json::to_value(&outcome)?;
            let mut code = match outcome.verdict {
                Verdict::Secure => EXIT_OK,
                Verdict::Attack { .. } => EXIT_VIOLATED,
                Verdict::Inconclusive => EXIT_INCONCLUSIVE,
            };
            if let (true, Verdict::Attack { trace }) = (oracle_verify, &outcome.verdict) {
                let check = verify_trace(trace, &budget);
                let ok = check["oracle"] == true && check["replay"] == true;
                text.push_str(&format!("oracle verification: {}\n", if ok { "confirmed" } else { "FAILED" }));
                results["verification"] = check;
                if !ok {
                    code = EXIT_INCONCLUSIVE;
                }
            }
            let config = json!({
                "sessions": sessions,
                "secrets": config.secrets,
                "max_depth": budget.max_depth,
                "max_nodes": budget.max_nodes,
                "max_total_nodes": config.max_total_nodes,
                "unify": budget.unify,
                "prefixes": config.prefixes,
                "honest_partners": config.honest_partners,
                "oracle_verify": oracle_verify,
            });
            Ok(Outcome { envelope: envelope("analyze", inputs, config, results, code), text, json })
        }
        Command::OracleVerify { trace, json } => {
            let text = read(&trace, &mut inputs)?;
            let value: Value = serde_json::from_str(&text)?;
            let trace_value = find_trace(&value).ok_or_else(|| Failure(format!("{}: no attack trace found", trace.display())))?;
            let parsed: AttackTrace = serde_json::from_value(trace_value.clone())?;
            let results = verify_trace(&parsed, &SolverBudget::default());
            let ok = results["oracle"] == true && results["replay"] == true;
            let text = format!("oracle: {}\nreplay: {}\n", results["oracle"], results["replay"]);
            Ok(Outcome { envelope: envelope("oracle-verify", inputs, json!({}), results, status_code(ok)), text, json })
        }
    }
}

/// Accepts a bare trace, an analysis outcome, or a whole report envelope.
fn find_trace(v: &Value) -> Option<&Value> {
    if v.get("sequence").is_some() && v.get("substitution").is_some() {
        return Some(v);
    }
    v.get("trace").or_else(|| v.get("results").and_then(|r| r.get("trace")))
}

/// Runs one command. Human-readable output goes to `out`, diagnostics to
/// `err`; with `--json` the report envelope is written to that path, or
/// to `out` in place of the text when the path is `-`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(cli.command) {
        Ok(o) => {
            if o.json.as_deref().is_none_or(|p| p.as_os_str() != "-") {
                let _ = out.write_all(o.text.as_bytes());
            }
            if let Some(path) = o.json {
                let body = serde_json::to_string_pretty(&o.envelope).expect("envelope serializes") + "\n";
                let written = if path.as_os_str() == "-" {
                    out.write_all(body.as_bytes()).map_err(|e| e.to_string())
                } else {
                    std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))
                };
                if let Err(e) = written {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_USAGE;
                }
            }
            o.envelope.exit_code
        }
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}
