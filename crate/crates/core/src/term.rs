//! The message algebra: terms, sorts, theories and canonical forms.
//!
//! Terms are plain immutable values. A freshly built term is not necessarily
//! normalized; [`Term::normalize`] produces the canonical form used
//! everywhere else in the crate (XOR flattened, sorted and parity-reduced,
//! `sh` arguments sorted).

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The name of the attacker, an agent constant known from the start.
pub const ATTACKER: &str = "eps";

/// Every variable and constant carries exactly one sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sort {
    Agent,
    Nonce,
    Key,
    Tag,
    Data,
}

impl Sort {
    pub const ALL: [Sort; 5] = [Sort::Agent, Sort::Nonce, Sort::Key, Sort::Tag, Sort::Data];

    pub fn name(self) -> &'static str {
        match self {
            Sort::Agent => "Agent",
            Sort::Nonce => "Nonce",
            Sort::Key => "Key",
            Sort::Tag => "Tag",
            Sort::Data => "Data",
        }
    }

    pub fn parse(s: &str) -> Option<Sort> {
        Sort::ALL.into_iter().find(|sort| sort.name() == s)
    }

    /// Whether a variable of this sort may be instantiated with `t`.
    ///
    /// Atoms keep their declared sort. Compound terms are untyped bit
    /// strings: they fit `Nonce`, `Key` and `Data` positions but never
    /// `Agent` or `Tag` positions. `Data` is the top sort.
    pub fn admits(self, t: &Term) -> bool {
        match t {
            Term::Var(_, s) | Term::Const(_, s) => self == Sort::Data || self == *s,
            _ => !matches!(self, Sort::Agent | Sort::Tag),
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Equational theories over the signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Theory {
    /// Free standard operators plus commutativity of `sh`.
    #[serde(rename = "STD")]
    Std,
    /// Associativity, commutativity, unit and nilpotence of XOR.
    #[serde(rename = "ACUN")]
    Acun,
    /// The union of both.
    #[serde(rename = "SUA")]
    Sua,
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Theory::Std => "STD",
            Theory::Acun => "ACUN",
            Theory::Sua => "SUA",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String, Sort),
    Const(String, Sort),
    Seq(Vec<Term>),
    PEnc(Box<Term>, Box<Term>),
    SEnc(Box<Term>, Box<Term>),
    Pk(Box<Term>),
    Sh(Box<Term>, Box<Term>),
    Xor(Vec<Term>),
    Zero,
}

impl Term {
    pub fn var(name: impl Into<String>, sort: Sort) -> Term {
        Term::Var(name.into(), sort)
    }

    pub fn constant(name: impl Into<String>, sort: Sort) -> Term {
        Term::Const(name.into(), sort)
    }

    pub fn seq(items: Vec<Term>) -> Term {
        Term::Seq(items)
    }

    pub fn penc(plain: Term, key: Term) -> Term {
        Term::PEnc(Box::new(plain), Box::new(key))
    }

    pub fn senc(plain: Term, key: Term) -> Term {
        Term::SEnc(Box::new(plain), Box::new(key))
    }

    pub fn pk(agent: Term) -> Term {
        Term::Pk(Box::new(agent))
    }

    pub fn sh(a: Term, b: Term) -> Term {
        Term::Sh(Box::new(a), Box::new(b))
    }

    /// Raw n-ary XOR node; call [`Term::normalize`] for the canonical form.
    pub fn xor(items: Vec<Term>) -> Term {
        Term::Xor(items)
    }

    /// The attacker's own name.
    pub fn attacker() -> Term {
        Term::constant(ATTACKER, Sort::Agent)
    }

    /// Constructor tag used by the canonical order. Tags 7 and 8 are kept
    /// free for hash and signature operators.
    fn tag(&self) -> u8 {
        match self {
            Term::Var(..) => 0,
            Term::Const(..) => 1,
            Term::Zero => 2,
            Term::Seq(_) => 3,
            Term::PEnc(..) => 4,
            Term::SEnc(..) => 5,
            Term::Pk(_) => 6,
            Term::Sh(..) => 9,
            Term::Xor(_) => 10,
        }
    }

    /// Immediate arguments, in positional order.
    pub fn args(&self) -> Vec<&Term> {
        match self {
            Term::Var(..) | Term::Const(..) | Term::Zero => Vec::new(),
            Term::Seq(ts) | Term::Xor(ts) => ts.iter().collect(),
            Term::PEnc(a, b) | Term::SEnc(a, b) | Term::Sh(a, b) => vec![a, b],
            Term::Pk(a) => vec![a],
        }
    }

    /// Rebuilds this node with new arguments (same constructor and arity).
    fn with_args(&self, mut args: Vec<Term>) -> Term {
        match self {
            Term::Var(..) | Term::Const(..) | Term::Zero => self.clone(),
            Term::Seq(_) => Term::Seq(args),
            Term::Xor(_) => Term::Xor(args),
            Term::Pk(_) => Term::pk(args.pop().expect("arity")),
            Term::PEnc(..) | Term::SEnc(..) | Term::Sh(..) => {
                let b = args.pop().expect("arity");
                let a = args.pop().expect("arity");
                match self {
                    Term::PEnc(..) => Term::penc(a, b),
                    Term::SEnc(..) => Term::senc(a, b),
                    _ => Term::sh(a, b),
                }
            }
        }
    }

    /// Applies `f` to every argument and rebuilds the node.
    pub fn map_args(&self, mut f: impl FnMut(&Term) -> Term) -> Term {
        let args = self.args().into_iter().map(&mut f).collect();
        self.with_args(args)
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(..))
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Term::Var(..) | Term::Const(..))
    }

    pub fn is_xor(&self) -> bool {
        matches!(self, Term::Xor(_))
    }

    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Var(n, _) => Some(n),
            _ => None,
        }
    }

    /// True when the term is built from ACUN symbols only at its root.
    pub fn is_acun_rooted(&self) -> bool {
        matches!(self, Term::Xor(_) | Term::Zero)
    }

    /// True when the root is one of the standard operators.
    pub fn is_std_rooted(&self) -> bool {
        matches!(self, Term::Seq(_) | Term::PEnc(..) | Term::SEnc(..) | Term::Pk(_) | Term::Sh(..))
    }

    pub fn contains_xor(&self) -> bool {
        match self {
            Term::Xor(_) | Term::Zero => true,
            _ => self.args().into_iter().any(Term::contains_xor),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(..) => false,
            _ => self.args().into_iter().all(Term::is_ground),
        }
    }

    pub fn occurs(&self, name: &str) -> bool {
        match self {
            Term::Var(n, _) => n == name,
            _ => self.args().into_iter().any(|a| a.occurs(name)),
        }
    }

    /// All variables, keyed by name.
    pub fn vars(&self) -> BTreeSet<(String, Sort)> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut BTreeSet<(String, Sort)>) {
        match self {
            Term::Var(n, s) => {
                out.insert((n.clone(), *s));
            }
            _ => self.args().into_iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn constants(&self) -> BTreeSet<Term> {
        self.subterms().into_iter().filter(|t| matches!(t, Term::Const(..))).collect()
    }

    /// Every subterm including the term itself; encryption keys are subterms.
    pub fn subterms(&self) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        self.collect_subterms(&mut out);
        out
    }

    fn collect_subterms(&self, out: &mut BTreeSet<Term>) {
        if out.insert(self.clone()) {
            for a in self.args() {
                a.collect_subterms(out);
            }
        }
    }

    /// Subterms reachable through sequences, encryption plaintexts and XOR
    /// children, but never through a key or the arguments of `pk`/`sh`.
    pub fn interms(&self) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        self.collect_interms(&mut out);
        out
    }

    fn collect_interms(&self, out: &mut BTreeSet<Term>) {
        if !out.insert(self.clone()) {
            return;
        }
        match self {
            Term::Seq(ts) | Term::Xor(ts) => ts.iter().for_each(|t| t.collect_interms(out)),
            Term::PEnc(p, _) | Term::SEnc(p, _) => p.collect_interms(out),
            _ => {}
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.args().into_iter().map(Term::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.args().into_iter().map(Term::depth).max().unwrap_or(0)
    }

    /// ACUN normal form: XOR flattened, sorted, zero-free and parity
    /// reduced, recursively under every constructor.
    pub fn normalize_xor(&self) -> Term {
        self.canonical_with(false, true)
    }

    /// Canonical form modulo both theories.
    pub fn normalize(&self) -> Term {
        self.canonical_with(true, true)
    }

    /// Canonical representative of the equivalence class of `self` in `theory`.
    pub fn canonical(&self, theory: Theory) -> Term {
        match theory {
            Theory::Std => self.canonical_with(true, false),
            Theory::Acun => self.canonical_with(false, true),
            Theory::Sua => self.canonical_with(true, true),
        }
    }

    fn canonical_with(&self, sort_sh: bool, acun: bool) -> Term {
        match self {
            Term::Var(..) | Term::Const(..) | Term::Zero => self.clone(),
            Term::Sh(a, b) => {
                let a = a.canonical_with(sort_sh, acun);
                let b = b.canonical_with(sort_sh, acun);
                if sort_sh && b < a {
                    Term::sh(b, a)
                } else {
                    Term::sh(a, b)
                }
            }
            Term::Xor(ts) if acun => {
                let mut flat = Vec::with_capacity(ts.len());
                for t in ts {
                    match t.canonical_with(sort_sh, acun) {
                        Term::Zero => {}
                        Term::Xor(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                xor_of_sorted(cancel_pairs(flat))
            }
            _ => self.map_args(|a| a.canonical_with(sort_sh, acun)),
        }
    }

    /// The XOR factors of a normalized term: its children when it is an XOR,
    /// nothing for zero, the term itself otherwise.
    pub fn xor_factors(&self) -> Vec<Term> {
        match self {
            Term::Xor(ts) => ts.clone(),
            Term::Zero => Vec::new(),
            t => vec![t.clone()],
        }
    }

    /// Builds the normalized XOR of already-normalized factors.
    pub fn xor_normalized(factors: impl IntoIterator<Item = Term>) -> Term {
        let mut flat = Vec::new();
        for f in factors {
            flat.extend(f.xor_factors());
        }
        xor_of_sorted(cancel_pairs(flat))
    }

    /// Renders the term with bare identifiers, the way protocol files write it.
    pub fn to_dsl(&self) -> String {
        let mut s = String::new();
        self.write(&mut s, true);
        s
    }

    fn write(&self, out: &mut String, bare: bool) {
        use std::fmt::Write;
        let list = |out: &mut String, head: &str, items: &[&Term]| {
            out.push_str(head);
            out.push('(');
            for (i, t) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                t.write(out, bare);
            }
            out.push(')');
        };
        match self {
            Term::Var(n, _) | Term::Const(n, _) if bare => out.push_str(n),
            Term::Var(n, s) => {
                let _ = write!(out, "var({n}:{s})");
            }
            Term::Const(n, s) => {
                let _ = write!(out, "const({n}:{s})");
            }
            Term::Zero => out.push_str("zero"),
            Term::Seq(ts) => list(out, "seq", &ts.iter().collect::<Vec<_>>()),
            Term::Xor(ts) => list(out, "xor", &ts.iter().collect::<Vec<_>>()),
            Term::PEnc(a, b) => list(out, "penc", &[a, b]),
            Term::SEnc(a, b) => list(out, "senc", &[a, b]),
            Term::Pk(a) => list(out, "pk", &[a]),
            Term::Sh(a, b) => list(out, "sh", &[a, b]),
        }
    }
}

fn cancel_pairs(mut items: Vec<Term>) -> Vec<Term> {
    items.sort();
    let mut out: Vec<Term> = Vec::with_capacity(items.len());
    for t in items {
        if out.last() == Some(&t) {
            out.pop();
        } else {
            out.push(t);
        }
    }
    out
}

fn xor_of_sorted(mut items: Vec<Term>) -> Term {
    match items.len() {
        0 => Term::Zero,
        1 => items.pop().expect("one item"),
        _ => Term::Xor(items),
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tag().cmp(&other.tag()).then_with(|| match (self, other) {
            (Term::Var(a, s), Term::Var(b, t)) | (Term::Const(a, s), Term::Const(b, t)) => a.cmp(b).then(s.cmp(t)),
            _ => {
                let (xs, ys) = (self.args(), other.args());
                xs.len().cmp(&ys.len()).then_with(|| xs.cmp(&ys))
            }
        })
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bit-exact prefix form: `var(X:Nonce)`, `const(a:Agent)`, `seq(..)`, ...
impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write(&mut s, false);
        f.write_str(&s)
    }
}

/// Equality modulo `theory`, decided on canonical forms.
pub fn equal_mod(theory: Theory, t1: &Term, t2: &Term) -> bool {
    t1.canonical(theory) == t2.canonical(theory)
}

pub fn is_interm(t: &Term, container: &Term) -> bool {
    container.interms().contains(t)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse term at byte {offset}: {message}")]
pub struct TermParseError {
    pub offset: usize,
    pub message: String,
}

/// Parses the prefix form produced by `Display`.
pub fn parse_term(text: &str) -> Result<Term, TermParseError> {
    let mut p = PrefixParser { src: text.as_bytes(), pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(t)
}

struct PrefixParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl PrefixParser<'_> {
    fn err(&self, message: &str) -> TermParseError {
        TermParseError { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), TermParseError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn word(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && !b"(),: \t\r\n".contains(&self.src[self.pos]) {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn atom(&mut self, is_var: bool) -> Result<Term, TermParseError> {
        self.expect(b'(')?;
        let name = self.word();
        if name.is_empty() {
            return Err(self.err("empty name"));
        }
        self.expect(b':')?;
        let sort_name = self.word();
        let sort = Sort::parse(&sort_name).ok_or_else(|| self.err("unknown sort"))?;
        self.expect(b')')?;
        Ok(if is_var { Term::Var(name, sort) } else { Term::Const(name, sort) })
    }

    fn args(&mut self) -> Result<Vec<Term>, TermParseError> {
        self.expect(b'(')?;
        let mut out = vec![self.term()?];
        loop {
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b',') => {
                    self.pos += 1;
                    out.push(self.term()?);
                }
                Some(b')') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.err("expected ',' or ')'")),
            }
        }
    }

    fn fixed(&mut self, n: usize) -> Result<Vec<Term>, TermParseError> {
        let args = self.args()?;
        if args.len() != n {
            return Err(self.err(&format!("expected {n} arguments")));
        }
        Ok(args)
    }

    fn term(&mut self) -> Result<Term, TermParseError> {
        let head = self.word();
        match head.as_str() {
            "var" => self.atom(true),
            "const" => self.atom(false),
            "zero" => Ok(Term::Zero),
            "seq" => Ok(Term::Seq(self.args()?)),
            "xor" => {
                let args = self.args()?;
                if args.len() < 2 {
                    return Err(self.err("xor needs at least two arguments"));
                }
                Ok(Term::Xor(args))
            }
            "pk" => Ok(Term::pk(self.fixed(1)?.remove(0))),
            "penc" | "senc" | "sh" => {
                let mut a = self.fixed(2)?;
                let k = a.pop().expect("two");
                let p = a.pop().expect("two");
                Ok(match head.as_str() {
                    "penc" => Term::penc(p, k),
                    "senc" => Term::senc(p, k),
                    _ => Term::sh(p, k),
                })
            }
            _ => Err(self.err(&format!("unknown constructor '{head}'"))),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_term(&text).map_err(serde::de::Error::custom)
    }
}
