//! Acceptance suite. Every criterion runs twice; the second run only feeds
//! the determinism check, which compares the JSON reports of both runs with
//! elapsed-time fields removed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::RngExt;
use proptest::test_runner::{RngAlgorithm, TestRng};
use serde_json::{json, Value};

use xorsleuth::cli;
use xorsleuth::dsl::parse_protocol;
use xorsleuth::oracle::verify_solution;
use xorsleuth::protocol::{check_assumptions, check_munut, tag_protocol, Protocol};
use xorsleuth::report::Report;
use xorsleuth::solver::{check_secrecy, satisfiable, Constraint, ConstraintSequence, SecrecyConfig, SolverBudget, SolverStatus, Verdict};
use xorsleuth::subst::Substitution;
use xorsleuth::term::{equal_mod, Sort, Term, Theory};
use xorsleuth::unify::{bsca_unify, BscaBudget, Equation, UnificationProblem};

struct Outcome {
    pass: bool,
    detail: String,
    report: Value,
}

fn outcome(pass: bool, detail: impl Into<String>, report: Value) -> Outcome {
    Outcome { pass, detail: detail.into(), report }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn load(rel: &str) -> Protocol {
    let path = fixtures().join(rel);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_protocol(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn rng(seed: u8) -> TestRng {
    TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32])
}

fn agent(n: &str) -> Term {
    Term::constant(n, Sort::Agent)
}
fn data(n: &str) -> Term {
    Term::constant(n, Sort::Data)
}
fn nonce(n: &str) -> Term {
    Term::constant(n, Sort::Nonce)
}

fn strip_elapsed(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("elapsed_ms");
            m.values_mut().for_each(strip_elapsed);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_elapsed),
        _ => {}
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- 1

fn running_example() -> UnificationProblem {
    let l = Term::penc(Term::seq(vec![data("1"), nonce("n_a")]), Term::pk(Term::var("B", Sort::Agent)));
    let r = Term::xor(vec![
        Term::penc(Term::seq(vec![data("1"), Term::var("N_B", Sort::Nonce)]), Term::pk(agent("a"))),
        Term::seq(vec![data("2"), Term::var("A", Sort::Agent)]),
        Term::seq(vec![data("2"), agent("b")]),
    ]);
    UnificationProblem::single(l, r, Theory::Sua)
}

/// The purified system must be `W = l`, `X, Y, Z = the three summands`
/// and `W = X ⊕ Y ⊕ Z`, for some distinct fresh W, X, Y, Z.
fn gamma1_matches(gamma1: &[Equation]) -> bool {
    let p = running_example();
    let l = p.equations[0].left.normalize();
    let summands = p.equations[0].right.normalize().xor_factors();
    let mut by_term: BTreeMap<Term, String> = BTreeMap::new();
    let mut acun = Vec::new();
    for e in gamma1 {
        match (e.theory, e.left.var_name()) {
            (Theory::Std, Some(v)) if v.starts_with('#') => {
                if by_term.insert(e.right.clone(), v.to_string()).is_some() {
                    return false;
                }
            }
            (Theory::Acun, _) => acun.push(e),
            _ => return false,
        }
    }
    let mut expected: Vec<Term> = summands.clone();
    expected.push(l.clone());
    expected.sort();
    if gamma1.len() != 5 || acun.len() != 1 || by_term.keys().cloned().collect::<Vec<_>>() != expected {
        return false;
    }
    let names: BTreeSet<&String> = by_term.values().collect();
    if names.len() != 4 {
        return false;
    }
    let w = &by_term[&l];
    let xyz: BTreeSet<String> = summands.iter().map(|s| by_term[s].clone()).collect();
    let e = acun[0];
    let (lhs, rhs) = if e.left.var_name() == Some(w.as_str()) { (&e.left, &e.right) } else { (&e.right, &e.left) };
    let rhs_vars: BTreeSet<String> = rhs.xor_factors().iter().filter_map(|t| t.var_name().map(str::to_string)).collect();
    lhs.var_name() == Some(w.as_str()) && rhs.xor_factors().len() == 3 && rhs_vars == xyz
}

fn criterion_1() -> Outcome {
    let p = running_example();
    let start = Instant::now();
    let result = bsca_unify(&p, &BscaBudget::default());
    let elapsed = start.elapsed();
    let (unifiers, trace) = match result {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("bsca_unify failed: {e}"), json!({ "error": e.to_string() })),
    };
    let expected: Substitution =
        [("A".to_string(), agent("b")), ("B".to_string(), agent("a")), ("N_B".to_string(), nonce("n_a"))].into_iter().collect();
    let has_expected = unifiers.contains(&expected);
    let all_sound = unifiers.iter().all(|u| p.is_solved_by(u));
    let gamma_ok = gamma1_matches(&trace.gamma1);
    let fast = elapsed < Duration::from_secs(1);
    let pass = has_expected && all_sound && gamma_ok && fast;
    let detail =
        format!("{} unifier(s), expected one present: {has_expected}, Γ1 shape: {gamma_ok}, {:.3} s", unifiers.len(), secs(elapsed));
    let report = json!({ "unifiers": unifiers, "trace": trace, "elapsed_ms": elapsed.as_millis() as u64 });
    outcome(pass, detail, report)
}

// ---------------------------------------------------------------- 2

/// Ground terms over a fixed signature. XOR nodes get two or three
/// non-XOR children so that the normal form keeps them.
fn ground_term(rng: &mut TestRng, depth: usize, xor_ok: bool) -> Term {
    let agents = ["a", "b"];
    let leaf = |rng: &mut TestRng| match rng.random_range(0..6) {
        0 => agent(agents[rng.random_range(0..2)]),
        1 => nonce("n"),
        2 => nonce("m"),
        3 => Term::constant("k", Sort::Key),
        4 => data("1"),
        _ => data("2"),
    };
    if depth <= 1 {
        return leaf(rng);
    }
    let pick_agent = |rng: &mut TestRng| agent(agents[rng.random_range(0..2)]);
    match rng.random_range(0..if xor_ok { 8 } else { 7 }) {
        0 => leaf(rng),
        1 | 2 => Term::seq(vec![ground_term(rng, depth - 1, true), ground_term(rng, depth - 1, true)]),
        3 => Term::penc(ground_term(rng, depth - 1, true), Term::pk(pick_agent(rng))),
        4 => Term::senc(ground_term(rng, depth - 1, true), Term::sh(pick_agent(rng), pick_agent(rng))),
        5 => Term::senc(ground_term(rng, depth - 1, true), Term::constant("k", Sort::Key)),
        6 => Term::pk(pick_agent(rng)),
        _ => {
            let n = rng.random_range(2..4);
            Term::xor((0..n).map(|_| ground_term(rng, depth - 1, false)).collect())
        }
    }
}

/// Replaces random subterms by variables; equal subterms get the same
/// variable in both sides. Direct XOR children are never replaced, and
/// the root only when `root_ok`.
fn generalize(t: &Term, rng: &mut TestRng, names: &mut BTreeMap<Term, Term>, root_ok: bool, p: f64) -> Term {
    if root_ok && rng.random_bool(p) {
        let next = names.len();
        return names
            .entry(t.clone())
            .or_insert_with(|| {
                let sort = match t {
                    Term::Const(_, s) => *s,
                    _ => Sort::Data,
                };
                Term::var(format!("V{next}"), sort)
            })
            .clone();
    }
    match t {
        Term::Xor(ts) => Term::Xor(ts.iter().map(|c| generalize_inside(c, rng, names, p)).collect()),
        _ => t.map_args(|a| generalize(a, rng, names, true, p)),
    }
}

fn generalize_inside(t: &Term, rng: &mut TestRng, names: &mut BTreeMap<Term, Term>, p: f64) -> Term {
    t.map_args(|a| generalize(a, rng, names, true, p))
}

fn has_var_xor_child(t: &Term) -> bool {
    match t {
        Term::Xor(ts) => ts.iter().any(|c| c.is_var() || has_var_xor_child(c)),
        _ => t.args().into_iter().any(has_var_xor_child),
    }
}

fn xor_below_std(t: &Term) -> bool {
    match t {
        Term::Xor(ts) => ts.iter().any(xor_below_std),
        _ => t.args().into_iter().any(|a| a.contains_xor()),
    }
}

#[derive(Clone)]
struct XorFreeProblem {
    problem: UnificationProblem,
    /// A common instance, proving the problem unifiable.
    witness: Substitution,
    shape: &'static str,
}

fn xor_shape_corpus(n: usize) -> Vec<XorFreeProblem> {
    let mut rng = rng(11);
    let mut out = Vec::new();
    while out.len() < n {
        let top_xor = rng.random_bool(0.6);
        let g = if top_xor {
            let k = rng.random_range(2..4);
            Term::xor((0..k).map(|_| ground_term(&mut rng, 3, false)).collect()).normalize()
        } else {
            ground_term(&mut rng, 4, true).normalize()
        };
        if !g.contains_xor() {
            continue;
        }
        let mut names = BTreeMap::new();
        let (root_l, root_r) = (rng.random_bool(0.05), rng.random_bool(0.05));
        let l = generalize(&g, &mut rng, &mut names, root_l, 0.3).normalize();
        let r = generalize(&g, &mut rng, &mut names, root_r, 0.3).normalize();
        if has_var_xor_child(&l) || has_var_xor_child(&r) || l == r {
            continue;
        }
        let witness: Substitution = names.into_iter().filter_map(|(t, v)| v.var_name().map(|n| (n.to_string(), t))).collect();
        let shape = if l.is_var() || r.is_var() {
            "variable side"
        } else if xor_below_std(&l) || xor_below_std(&r) {
            "XOR under a STD operator"
        } else {
            "top-level XOR only"
        };
        out.push(XorFreeProblem { problem: UnificationProblem::single(l, r, Theory::Sua), witness, shape });
    }
    out
}

fn criterion_2() -> Outcome {
    let corpus = xor_shape_corpus(600);
    let start = Instant::now();
    let mut by_shape: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (i, lp) in corpus.iter().enumerate() {
        assert!(lp.problem.is_solved_by(&lp.witness), "generator produced a non-unifiable problem");
        let entry = by_shape.entry(lp.shape).or_default();
        entry.0 += 1;
        let verdict = match bsca_unify(&lp.problem, &BscaBudget::default()) {
            Ok((us, trace)) => match &trace.solved {
                Some(s) => {
                    let ground = s.gamma5_2.iter().all(|e| e.left.is_ground() && e.right.is_ground());
                    if ground && s.acun_unifier.is_empty() {
                        "holds"
                    } else {
                        "counterexample"
                    }
                }
                None if us.is_empty() => "no unifier found",
                None => "no trace",
            },
            Err(_) => "budget",
        };
        if verdict != "holds" {
            entry.1 += 1;
            failures.push(format!("#{i} [{}] {}: {verdict}", lp.shape, lp.problem));
        }
        rows.push(json!({ "problem": lp.problem.to_string(), "shape": lp.shape, "verdict": verdict }));
    }
    let elapsed = start.elapsed();
    let shapes: Vec<String> = by_shape.iter().map(|(s, (n, bad))| format!("{s}: {bad}/{n}")).collect();
    let pass = failures.is_empty() && corpus.len() >= 500 && elapsed < Duration::from_secs(60);
    let mut detail = format!("{} problems, counterexamples by shape [{}], {:.2} s", corpus.len(), shapes.join(", "), secs(elapsed));
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    outcome(pass, detail, json!({ "problems": rows, "elapsed_ms": elapsed.as_millis() as u64 }))
}

// ---------------------------------------------------------------- 3

fn pool_atoms() -> Vec<Term> {
    vec![data("a"), data("b"), data("c")]
}

fn small_term(rng: &mut TestRng, depth: usize, vars: &[Term]) -> Term {
    let atoms = pool_atoms();
    let leaf = |rng: &mut TestRng| {
        if !vars.is_empty() && rng.random_bool(0.45) {
            vars[rng.random_range(0..vars.len())].clone()
        } else {
            atoms[rng.random_range(0..3)].clone()
        }
    };
    if depth <= 1 || rng.random_bool(0.3) {
        return leaf(rng);
    }
    match rng.random_range(0..6) {
        0 => Term::seq(vec![leaf(rng), leaf(rng)]),
        1 => Term::penc(leaf(rng), leaf(rng)),
        2 => Term::senc(leaf(rng), leaf(rng)),
        3 => Term::pk(leaf(rng)),
        4 => Term::sh(leaf(rng), leaf(rng)),
        _ => Term::xor((0..rng.random_range(2..4)).map(|_| leaf(rng)).collect()),
    }
}

/// Problems of depth at most 2 over atoms a, b, c and at most three
/// variables. Half of them are built unifiable by instantiating one side.
fn completeness_corpus(n: usize) -> Vec<UnificationProblem> {
    let mut rng = rng(23);
    let vars: Vec<Term> = ["X", "Y", "Z"].iter().map(|v| Term::var(*v, Sort::Data)).collect();
    let mut out = Vec::new();
    while out.len() < n {
        let l = small_term(&mut rng, 2, &vars[..2]);
        let r = if rng.random_bool(0.5) {
            small_term(&mut rng, 2, &vars)
        } else {
            let atoms = pool_atoms();
            let mut inst = Substitution::new();
            for v in &vars[..2] {
                inst.insert(v.var_name().unwrap(), atoms[rng.random_range(0..3)].clone());
            }
            let g = inst.apply(&l);
            // abstract one argument position into Z
            match g.args().len() {
                0 => g,
                k => {
                    let i = rng.random_range(0..k);
                    let mut j = 0;
                    g.map_args(|a| {
                        j += 1;
                        if j - 1 == i {
                            vars[2].clone()
                        } else {
                            a.clone()
                        }
                    })
                }
            }
        };
        let (l, r) = (l.normalize(), r.normalize());
        if l == r || l.depth() > 2 || r.depth() > 2 {
            continue;
        }
        out.push(UnificationProblem::single(l, r, Theory::Sua));
    }
    out
}

/// Ground values for the brute-force search: the atoms, zero, and every
/// depth-two term over the atoms (up to commutativity of `sh` and XOR).
fn ground_domain() -> Vec<Term> {
    let atoms = pool_atoms();
    let mut out: BTreeSet<Term> = atoms.iter().cloned().collect();
    out.insert(Term::Zero);
    for x in &atoms {
        out.insert(Term::pk(x.clone()));
        for y in &atoms {
            out.insert(Term::seq(vec![x.clone(), y.clone()]));
            out.insert(Term::penc(x.clone(), y.clone()));
            out.insert(Term::senc(x.clone(), y.clone()));
            out.insert(Term::sh(x.clone(), y.clone()).normalize());
            if x != y {
                out.insert(Term::xor(vec![x.clone(), y.clone()]).normalize());
            }
        }
    }
    out.insert(Term::xor(atoms.clone()).normalize());
    out.into_iter().collect()
}

fn assignments(names: &[String], domain: &[Term], mut f: impl FnMut(&Substitution)) {
    let mut idx = vec![0usize; names.len()];
    loop {
        let s: Substitution = names.iter().cloned().zip(idx.iter().map(|&i| domain[i].clone())).collect();
        f(&s);
        let mut k = 0;
        loop {
            if k == idx.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < domain.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Whether the ground unifier `g` is an instance of `sigma`: variables that
/// `sigma` leaves free take their value from `g`, other range variables are
/// searched over the domain.
fn is_instance(sigma: &Substitution, g: &Substitution, vars: &[String], domain: &[Term]) -> bool {
    let mut fixed = Substitution::new();
    let mut open: BTreeSet<String> = BTreeSet::new();
    for x in vars {
        let image = sigma.apply(&Term::var(x.clone(), Sort::Data));
        for (v, _) in image.vars() {
            if vars.contains(&v) && !sigma.contains(&v) {
                fixed.insert(v.clone(), g.get(&v).cloned().expect("ground unifier covers the problem"));
            } else {
                open.insert(v);
            }
        }
    }
    let open: Vec<String> = open.into_iter().collect();
    let mut found = false;
    assignments(&open, domain, |theta| {
        if found {
            return;
        }
        let mut full = fixed.clone();
        for (v, t) in theta.iter() {
            full.insert(v.clone(), t.clone());
        }
        found = vars.iter().all(|x| {
            let lhs = full.apply(&sigma.apply(&Term::var(x.clone(), Sort::Data)));
            equal_mod(Theory::Sua, &lhs, g.get(x).expect("covered"))
        });
    });
    found
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let domain = ground_domain();
    let mut unsound = Vec::new();
    let mut checked_unifiers = 0;
    let mut sound_check = |p: &UnificationProblem, us: &[Substitution]| {
        for u in us {
            checked_unifiers += 1;
            let ok = p.equations.iter().all(|e| equal_mod(Theory::Sua, &u.apply(&e.left), &u.apply(&e.right)));
            if !ok {
                unsound.push(format!("{p} with {u}"));
            }
        }
    };
    for lp in xor_shape_corpus(600) {
        if let Ok((us, _)) = bsca_unify(&lp.problem, &BscaBudget::default()) {
            sound_check(&lp.problem, &us);
        }
    }
    let corpus = completeness_corpus(250);
    let mut missed = Vec::new();
    let mut rows = Vec::new();
    let (mut unifiable, mut ground_unifiers, mut budget) = (0, 0, 0);
    for p in &corpus {
        let us = match bsca_unify(p, &BscaBudget::default()) {
            Ok((us, _)) => us,
            Err(e) => {
                budget += 1;
                rows.push(json!({ "problem": p.to_string(), "error": e.to_string() }));
                continue;
            }
        };
        sound_check(p, &us);
        let names: Vec<String> = p.var_names().into_iter().collect();
        let mut found = 0;
        assignments(&names, &domain, |g| {
            let e = &p.equations[0];
            if equal_mod(Theory::Sua, &g.apply(&e.left), &g.apply(&e.right)) {
                found += 1;
                if !us.iter().any(|u| is_instance(u, g, &names, &domain)) {
                    missed.push(format!("{p}: {g}"));
                }
            }
        });
        unifiable += usize::from(!us.is_empty());
        ground_unifiers += found;
        rows.push(json!({ "problem": p.to_string(), "unifiers": us, "ground_unifiers": found }));
    }
    let elapsed = start.elapsed();
    let pass = unsound.is_empty() && missed.is_empty() && budget == 0 && elapsed < Duration::from_secs(120);
    let mut detail = format!(
        "{checked_unifiers} unifiers sound-checked ({} unsound); {} small problems ({unifiable} unifiable, {budget} over budget), {ground_unifiers} ground unifiers enumerated, {} missed; {:.2} s",
        unsound.len(),
        corpus.len(),
        missed.len(),
        secs(elapsed)
    );
    if let Some(m) = unsound.first().or(missed.first()) {
        detail.push_str(&format!("; first: {m}"));
    }
    outcome(pass, detail, json!({ "problems": rows, "unsound": unsound, "missed": missed, "elapsed_ms": elapsed.as_millis() as u64 }))
}

// ---------------------------------------------------------------- 4

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("xorsleuth").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned() + &String::from_utf8_lossy(&err))
}

fn fixture_arg(rel: &str) -> String {
    fixtures().join(rel).to_string_lossy().into_owned()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let report_path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_attack.json");
    let report_arg = report_path.to_string_lossy().into_owned();
    let (p1, p2) = (fixture_arg("p1.proto"), fixture_arg("p2.proto"));
    let (combined_code, _) = run_cli(&["analyze", &p1, "--combined", &p2, "--sessions", "1", "--secret", "NA", "--json", &report_arg]);
    let (alone_code, alone_out) = run_cli(&["analyze", &p2, "--json", "-"]);
    let (verify_code, verify_out) = run_cli(&["oracle-verify", &report_arg, "--json", "-"]);
    let elapsed = start.elapsed();

    let envelope: Value = std::fs::read_to_string(&report_path).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or(Value::Null);
    let trace = &envelope["results"]["trace"];
    let leaked_key = Term::sh(agent("a"), agent("s")).to_string();
    let constraints = trace["sequence"]["constraints"].as_array().cloned().unwrap_or_default();
    let last = constraints.last().cloned().unwrap_or(Value::Null);
    let secret = trace["secret"].as_str().unwrap_or_default().to_string();
    let key_in_knowledge = last["terms"].as_array().is_some_and(|ts| ts.iter().any(|t| t == &Value::from(leaked_key.clone())));
    let key_not_initial = trace["iik"].as_array().is_some_and(|ts| !ts.iter().any(|t| t == &Value::from(leaked_key.clone())));
    let secret_derived = last["target"] == secret.clone() && secret.starts_with("const(na");
    let verify: Value = serde_json::from_str(&verify_out).unwrap_or(Value::Null);
    let verified = verify_code == cli::EXIT_OK && verify["results"]["oracle"] == true && verify["results"]["replay"] == true;
    let alone: Value = serde_json::from_str(&alone_out).unwrap_or(Value::Null);

    let pass = combined_code == cli::EXIT_VIOLATED
        && alone_code == cli::EXIT_OK
        && key_in_knowledge
        && key_not_initial
        && secret_derived
        && verified
        && elapsed < Duration::from_secs(5);
    let detail = format!(
        "combined exit {combined_code}, p2 alone exit {alone_code}, sh(a,s) learned: {}, secret {secret} derived: {secret_derived}, oracle-verify: {verified}, {:.2} s",
        key_in_knowledge && key_not_initial,
        secs(elapsed)
    );
    // only results: the envelope's input paths depend on the checkout
    let report = json!({
        "combined_exit": combined_code,
        "combined": envelope["results"],
        "alone_exit": alone_code,
        "alone": alone["results"],
        "verify": verify["results"],
        "elapsed_ms": elapsed.as_millis() as u64,
    });
    outcome(pass, detail, report)
}

// ---------------------------------------------------------------- 5, 6

/// Compares a report with its golden file. With `XORSLEUTH_BLESS=1` the
/// file is (re)written instead.
fn golden(name: &str, report: &Report) -> Result<(), String> {
    let path = golden_dir().join(name);
    let body = report.to_json() + "\n";
    if std::env::var_os("XORSLEUTH_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        std::fs::write(&path, &body).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == body {
        Ok(())
    } else {
        Err(format!("{name} differs from the golden report"))
    }
}

fn has_witness(r: &Report, condition: &str, right: &Term) -> bool {
    r.witnesses.iter().any(|w| w.condition == condition && &w.right == right)
}

fn criterion_5() -> Outcome {
    let p1 = check_assumptions(&load("p1.proto"));
    let nsl = check_assumptions(&load("nsl_xor.proto"));
    let leak = check_assumptions(&load("key_leak.proto"));
    let mut problems = Vec::new();
    if !has_witness(&p1, "assumption_1", &Term::sh(agent("a"), agent("s"))) {
        problems.push("p1 not flagged under assumption 1 with sh(a,s)".to_string());
    }
    if !nsl.passed() {
        problems.push("NSL with XOR is flagged".to_string());
    }
    if leak.passed() || !leak.witnesses.iter().any(|w| w.condition == "assumption_2") {
        problems.push("key leak not flagged under assumption 2".to_string());
    }
    for (name, r) in [("assumptions_p1.json", &p1), ("assumptions_nsl_xor.json", &nsl), ("assumptions_key_leak.json", &leak)] {
        if let Err(e) = golden(name, r) {
            problems.push(e);
        }
    }
    let detail = if problems.is_empty() {
        format!("p1 {:?}, NSL {:?}, key leak {:?}; golden reports match", p1.status, nsl.status, leak.status)
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail, json!({ "p1": p1, "nsl_xor": nsl, "key_leak": leak }))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let nsl = load("nsl_xor.proto");
    let untagged = check_munut(&nsl, &nsl);
    let tag = |label: &str| tag_protocol(&nsl, &Term::constant(label, Sort::Tag)).expect("NSL can be tagged");
    let tagged = check_munut(&tag("nslx"), &tag("other"));
    let elapsed = start.elapsed();
    let mut problems = Vec::new();
    let checked: Vec<bool> = untagged
        .witnesses
        .iter()
        .filter_map(|w| w.unifier.as_ref().map(|u| equal_mod(Theory::Sua, &u.apply(&w.left), &u.apply(&w.right))))
        .collect();
    if untagged.passed() || checked.is_empty() {
        problems.push("untagged pair not reported with a unifier witness".to_string());
    }
    if checked.iter().any(|ok| !ok) {
        problems.push("a witness unifier does not unify its terms".to_string());
    }
    if !tagged.passed() {
        problems.push("tagged pair reported violated".to_string());
    }
    for (name, r) in [("munut_nsl_xor_untagged.json", &untagged), ("munut_nsl_xor_tagged.json", &tagged)] {
        if let Err(e) = golden(name, r) {
            problems.push(e);
        }
    }
    if elapsed >= Duration::from_secs(5) {
        problems.push("too slow".to_string());
    }
    let detail = format!(
        "untagged {:?} with {} witnesses ({} unifiers checked), tagged {:?}, {:.2} s{}{}",
        untagged.status,
        untagged.witnesses.len(),
        checked.len(),
        tagged.status,
        secs(elapsed),
        if problems.is_empty() { "" } else { "; " },
        problems.join("; ")
    );
    outcome(problems.is_empty(), detail, json!({ "untagged": untagged, "tagged": tagged, "elapsed_ms": elapsed.as_millis() as u64 }))
}

// ---------------------------------------------------------------- 7

const CORPUS_PAIRS: [(&str, &str); 6] = [
    ("xor_chal", "pk_xor"),
    ("pk_xor", "sk_xor"),
    ("otp", "xor_chal"),
    ("key_dist", "otp"),
    ("sk_xor", "key_dist"),
    ("sk_xor", "xor_chal"),
];

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::Secure => "secure",
        Verdict::Attack { .. } => "attack",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let config = SecrecyConfig::default();
    let mut tagged: BTreeMap<&str, Protocol> = BTreeMap::new();
    let mut alone: BTreeMap<&str, &'static str> = BTreeMap::new();
    let mut problems = Vec::new();
    for name in CORPUS_PAIRS.iter().flat_map(|(a, b)| [*a, *b]) {
        if tagged.contains_key(name) {
            continue;
        }
        let base = load(&format!("corpus/{name}.proto"));
        let t = tag_protocol(&base, &Term::constant(format!("t_{name}"), Sort::Tag)).expect("corpus protocols can be tagged");
        if !check_assumptions(&t).passed() {
            problems.push(format!("{name} fails the assumptions"));
        }
        let v = check_secrecy(std::slice::from_ref(&t), &config).map(|o| verdict_name(&o.verdict)).unwrap_or("error");
        if v != "secure" {
            problems.push(format!("{name} alone is {v}"));
        }
        alone.insert(name, v);
        tagged.insert(name, t);
    }
    let mut rows = Vec::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (a, b) in CORPUS_PAIRS {
        let (pa, pb) = (&tagged[a], &tagged[b]);
        let munut = check_munut(pa, pb);
        if !munut.passed() {
            problems.push(format!("{a}+{b} violates mu-NUT"));
        }
        let outcome = check_secrecy(&[pa.clone(), pb.clone()], &config);
        let (v, stats) = match &outcome {
            Ok(o) => (
                verdict_name(&o.verdict),
                json!({ "sequences": o.sequences_checked, "exhausted": o.sequences_exhausted, "nodes": o.nodes_explored }),
            ),
            Err(e) => ("error", json!(e.to_string())),
        };
        if v == "attack" || v == "error" {
            problems.push(format!("{a}+{b} combined is {v}"));
        }
        *counts.entry(v).or_default() += 1;
        rows.push(json!({ "pair": [a, b], "munut": munut.status, "verdict": v, "stats": stats }));
    }
    // an analysis cut short by its budget must come back inconclusive
    let starved = SecrecyConfig { budget: SolverBudget { max_nodes: 2, ..SolverBudget::default() }, ..SecrecyConfig::default() };
    let cut = check_secrecy(&[tagged["xor_chal"].clone(), tagged["pk_xor"].clone()], &starved)
        .map(|o| verdict_name(&o.verdict))
        .unwrap_or("error");
    if cut != "inconclusive" {
        problems.push(format!("starved analysis reported {cut}"));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(600) {
        problems.push("too slow".to_string());
    }
    let tally: Vec<String> = counts.iter().map(|(v, n)| format!("{n} {v}")).collect();
    let detail = format!(
        "{} pairs over {} tagged protocols, combined verdicts: {}; starved run: {cut}; {:.1} s{}{}",
        CORPUS_PAIRS.len(),
        tagged.len(),
        tally.join(", "),
        secs(elapsed),
        if problems.is_empty() { "" } else { "; " },
        problems.join("; ")
    );
    let report = json!({ "alone": alone, "pairs": rows, "starved": cut, "elapsed_ms": elapsed.as_millis() as u64 });
    outcome(problems.is_empty(), detail, report)
}

// ---------------------------------------------------------------- 8

struct SmallSig {
    atoms: Vec<Term>,
    keys: Vec<Term>,
}

impl SmallSig {
    fn new() -> Self {
        let (a, eps) = (agent("a"), Term::attacker());
        SmallSig {
            atoms: vec![a.clone(), eps.clone(), Term::constant("k", Sort::Key), nonce("n")],
            keys: vec![Term::pk(a), Term::pk(eps), Term::constant("k", Sort::Key)],
        }
    }

    fn term(&self, rng: &mut TestRng, depth: usize, vars: &[Term]) -> Term {
        if depth <= 1 || rng.random_bool(0.35) {
            if !vars.is_empty() && rng.random_bool(0.4) {
                return vars[rng.random_range(0..vars.len())].clone();
            }
            return self.atoms[rng.random_range(0..self.atoms.len())].clone();
        }
        let sub = |rng: &mut TestRng| self.term(rng, depth - 1, vars);
        match rng.random_range(0..6) {
            0 => Term::seq(vec![sub(rng), sub(rng)]),
            1 => Term::penc(sub(rng), self.keys[rng.random_range(0..2)].clone()),
            2 => Term::senc(sub(rng), self.keys[2].clone()),
            3 => Term::sh(self.atoms[rng.random_range(0..2)].clone(), self.atoms[rng.random_range(0..2)].clone()),
            _ => Term::xor(vec![sub(rng), sub(rng)]),
        }
    }
}

/// Sequences shaped like short protocol runs: the knowledge only grows, a
/// variable is first met in a target, and sent terms only use variables
/// met before.
fn agreement_corpus(n: usize) -> Vec<ConstraintSequence> {
    let sig = SmallSig::new();
    let mut rng = rng(37);
    let all_vars = [Term::var("X", Sort::Data), Term::var("Y", Sort::Nonce)];
    let base: Vec<Term> = vec![agent("a"), Term::attacker(), Term::pk(agent("a")), Term::pk(Term::attacker())];
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let mut known: BTreeSet<Term> = base.iter().cloned().collect();
        known.insert(sig.term(&mut rng, 3, &[]));
        let mut met: Vec<Term> = Vec::new();
        let mut constraints = Vec::new();
        for _ in 0..rng.random_range(1..4) {
            let fresh_var = all_vars.iter().find(|v| !met.contains(v)).cloned();
            let mut usable = met.clone();
            usable.extend(fresh_var.filter(|_| rng.random_bool(0.7)));
            let target = sig.term(&mut rng, 3, &usable);
            for (v, s) in target.vars() {
                let v = Term::var(v, s);
                if !met.contains(&v) {
                    met.push(v);
                }
            }
            constraints.push(Constraint::new(target, known.iter().cloned()));
            known.insert(sig.term(&mut rng, 3, &met).normalize());
        }
        let cs = ConstraintSequence::new(constraints);
        if cs.constraints.iter().all(|c| c.target.depth() <= 3) && seen.insert(cs.canonical_key()) {
            out.push(cs);
        }
    }
    out
}

/// Atoms, then every one- and two-operator combination of them that the
/// brute-force refutation substitutes for the variables.
fn refutation_domain(sig: &SmallSig) -> Vec<Term> {
    let mut out: BTreeSet<Term> = sig.atoms.iter().cloned().collect();
    for x in &sig.atoms {
        out.insert(Term::pk(x.clone()));
        for y in &sig.atoms {
            out.insert(Term::seq(vec![x.clone(), y.clone()]));
            out.insert(Term::xor(vec![x.clone(), y.clone()]).normalize());
            out.insert(Term::sh(x.clone(), y.clone()).normalize());
        }
        for key in &sig.keys {
            match key {
                Term::Pk(_) => out.insert(Term::penc(x.clone(), key.clone())),
                _ => out.insert(Term::senc(x.clone(), key.clone())),
            };
        }
    }
    out.into_iter().collect()
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let sig = SmallSig::new();
    let domain = refutation_domain(&sig);
    let budget = SolverBudget { max_nodes: 20_000, ground_pruning: false, ..SolverBudget::default() };
    let corpus = agreement_corpus(500);
    let (mut sat, mut unsat, mut over, mut tried) = (0, 0, 0, 0);
    let mut problems = Vec::new();
    let mut rows = Vec::new();
    for cs in &corpus {
        let result = satisfiable(cs, &budget);
        let note = match result.status {
            SolverStatus::Satisfiable => {
                sat += 1;
                let sigma = &result.solutions[0].substitution;
                if !verify_solution(cs, sigma) {
                    problems.push(format!("solution {sigma} of {cs} rejected by the oracle"));
                }
                "satisfiable"
            }
            SolverStatus::Unsatisfiable => {
                unsat += 1;
                let names: Vec<(String, Sort)> = cs.vars().into_iter().collect();
                let keys: Vec<String> = names.iter().map(|(n, _)| n.clone()).collect();
                let mut refuted = None;
                assignments(&keys, &domain, |g| {
                    tried += 1;
                    if refuted.is_none() && names.iter().all(|(n, s)| s.admits(g.get(n).unwrap())) && verify_solution(cs, g) {
                        refuted = Some(g.clone());
                    }
                });
                if let Some(g) = refuted {
                    problems.push(format!("{cs} reported unsatisfiable but {g} solves it"));
                }
                "unsatisfiable"
            }
            SolverStatus::BudgetExhausted => {
                over += 1;
                "budget"
            }
        };
        rows.push(json!({ "sequence": cs.to_string(), "status": note }));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(300) {
        problems.push("too slow".to_string());
    }
    let mut detail = format!(
        "{} sequences: {sat} satisfiable, {unsat} unsatisfiable ({tried} ground candidates refuted), {over} over budget; {} disagreements; {:.1} s",
        corpus.len(),
        problems.len(),
        secs(elapsed)
    );
    if let Some(p) = problems.first() {
        detail.push_str(&format!("; first: {p}"));
    }
    outcome(problems.is_empty(), detail, json!({ "sequences": rows, "problems": problems, "elapsed_ms": elapsed.as_millis() as u64 }))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("1 running example reproduction", criterion_1),
        ("2 ACUN subproblems hold only constants", criterion_2),
        ("3 unification soundness and completeness", criterion_3),
        ("4 multi-protocol attack", criterion_4),
        ("5 assumption checker", criterion_5),
        ("6 mu-NUT checker", criterion_6),
        ("7 tagged pairs stay secure together", criterion_7),
        ("8 solver and oracle agree", criterion_8),
    ];
    let out_dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::create_dir_all(&out_dir);
    let mut all_pass = true;
    let mut reports = Vec::new();
    for (name, f) in &criteria {
        let first = f();
        let second = f();
        println!("{} criterion {name}: {}", if first.pass { "PASS" } else { "FAIL" }, first.detail);
        all_pass &= first.pass;
        let _ =
            std::fs::write(out_dir.join(format!("criterion_{}.json", &name[..1])), serde_json::to_string_pretty(&first.report).unwrap());
        let (mut a, mut b) = (first.report, second.report);
        strip_elapsed(&mut a);
        strip_elapsed(&mut b);
        reports.push((name.to_string(), serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap()));
    }
    let differing: Vec<&str> = reports.iter().filter(|(_, same)| !same).map(|(n, _)| &n[..1]).collect();
    let deterministic = differing.is_empty();
    println!(
        "{} criterion 9 determinism: {} of {} reports byte-identical across two runs{}",
        if deterministic { "PASS" } else { "FAIL" },
        reports.len() - differing.len(),
        reports.len(),
        if deterministic { String::new() } else { format!("; differing: {}", differing.join(", ")) }
    );
    all_pass &= deterministic;
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
