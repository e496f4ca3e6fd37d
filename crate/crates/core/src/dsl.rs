//! The protocol description language.
//!
//! ```text
//! protocol nsl_xor
//! vars A:Agent B:Agent N_A:Nonce N_B:Nonce
//! fresh N_A N_B
//! secret N_A N_B
//! role A:
//!   send penc(seq(N_A, A), pk(B))
//!   recv penc(seq(xor(N_A, B), N_B), pk(A))
//!   send penc(N_B, pk(B))
//! ```
//!
//! Identifiers starting with an uppercase letter are variables, all others
//! constants. Every identifier needs a sort in a `vars` line, except the
//! attacker's name `eps`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::protocol::{Node, Protocol, ProtocolError, Role, Sign, Strand};
use crate::term::{Sort, Term, ATTACKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Sort,
    Undeclared,
    DuplicateRole,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Open,
    Close,
    Comma,
    Colon,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Open => f.write_str("'('"),
            Tok::Close => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Colon => f.write_str("':'"),
        }
    }
}

const KEYWORDS: [&str; 7] = ["protocol", "vars", "fresh", "secret", "role", "send", "recv"];

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split("//").next().unwrap_or("");
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let tok = match c {
                _ if c.is_whitespace() => {
                    i += 1;
                    continue;
                }
                '(' => Tok::Open,
                ')' => Tok::Close,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                _ if is_ident_char(c) => {
                    let start = i;
                    while i < chars.len() && is_ident_char(chars[i]) {
                        i += 1;
                    }
                    out.push((Tok::Ident(chars[start..i].iter().collect()), ln + 1, col));
                    continue;
                }
                _ => {
                    return Err(ParseError {
                        kind: ParseErrorKind::Syntax,
                        line: ln + 1,
                        column: col,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            };
            out.push((tok, ln + 1, col));
            i += 1;
        }
    }
    Ok(out)
}

fn is_variable_name(name: &str) -> bool {
    name.chars().next().is_some_and(|c| c.is_uppercase())
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    sorts: BTreeMap<String, Sort>,
}

impl Parser {
    fn err_at(&self, kind: ParseErrorKind, idx: usize, message: impl Into<String>) -> ParseError {
        let (line, column) = match self.toks.get(idx).or(self.toks.last()) {
            Some((_, l, c)) => (*l, *c),
            None => (1, 1),
        };
        ParseError { kind, line, column, message: message.into() }
    }

    fn err(&self, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        self.err_at(kind, self.pos, message)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Ident(s)) => Some(s),
            _ => None,
        }
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let t = self.peek().cloned().ok_or_else(|| self.err(ParseErrorKind::Syntax, "unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let at = self.pos;
        let got = self.next()?;
        if got != want {
            return Err(self.err_at(ParseErrorKind::Syntax, at, format!("expected {want}, found {got}")));
        }
        Ok(())
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        self.expect(Tok::Ident(kw.to_string()))
    }

    /// A non-keyword identifier.
    fn name(&mut self) -> Result<String, ParseError> {
        let at = self.pos;
        match self.next()? {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(s),
            other => Err(self.err_at(ParseErrorKind::Syntax, at, format!("expected a name, found {other}"))),
        }
    }

    fn at_decl_name(&self) -> bool {
        matches!(self.peek_ident(), Some(s) if !KEYWORDS.contains(&s))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let at = self.pos;
        let head = self.name()?;
        if self.peek() != Some(&Tok::Open) {
            if head == "zero" {
                return Ok(Term::Zero);
            }
            let sort = match self.sorts.get(&head) {
                Some(s) => *s,
                None if head == ATTACKER => Sort::Agent,
                None => return Err(self.err_at(ParseErrorKind::Undeclared, at, format!("undeclared identifier '{head}'"))),
            };
            return Ok(if is_variable_name(&head) { Term::var(head, sort) } else { Term::constant(head, sort) });
        }
        self.expect(Tok::Open)?;
        let mut args = Vec::new();
        if self.peek() != Some(&Tok::Close) {
            args.push(self.term()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                args.push(self.term()?);
            }
        }
        self.expect(Tok::Close)?;
        let arity = |n: usize| -> Result<(), ParseError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(self.err_at(ParseErrorKind::Syntax, at, format!("{head} takes {n} argument(s), got {}", args.len())))
            }
        };
        let mut it = args.clone().into_iter();
        let mut nth = || it.next().expect("arity checked");
        Ok(match head.as_str() {
            "seq" | "xor" if args.is_empty() => {
                return Err(self.err_at(ParseErrorKind::Syntax, at, format!("{head}() needs at least one argument")))
            }
            "seq" => Term::seq(args),
            "xor" if args.len() == 1 => nth(),
            "xor" => Term::xor(args),
            "penc" => {
                arity(2)?;
                Term::penc(nth(), nth())
            }
            "senc" => {
                arity(2)?;
                Term::senc(nth(), nth())
            }
            "sh" => {
                arity(2)?;
                Term::sh(nth(), nth())
            }
            "pk" => {
                arity(1)?;
                Term::pk(nth())
            }
            _ => return Err(self.err_at(ParseErrorKind::Syntax, at, format!("unknown constructor '{head}'"))),
        })
    }

    fn declared_vars(&mut self, kw: &str) -> Result<Vec<String>, ParseError> {
        let mut out = Vec::new();
        while self.at_decl_name() {
            let at = self.pos;
            let n = self.name()?;
            if !is_variable_name(&n) {
                return Err(self.err_at(ParseErrorKind::Sort, at, format!("'{n}' in {kw} is not a variable")));
            }
            if !self.sorts.contains_key(&n) {
                return Err(self.err_at(ParseErrorKind::Undeclared, at, format!("undeclared variable '{n}'")));
            }
            out.push(n);
        }
        Ok(out)
    }

    fn protocol(&mut self) -> Result<Protocol, ParseError> {
        self.keyword("protocol")?;
        let name = self.name()?;
        let mut fresh = BTreeSet::new();
        let mut secret = BTreeSet::new();
        loop {
            match self.peek_ident() {
                Some("vars") => {
                    self.pos += 1;
                    while self.at_decl_name() {
                        let at = self.pos;
                        let id = self.name()?;
                        self.expect(Tok::Colon)?;
                        let sort_at = self.pos;
                        let sort_name = self.name()?;
                        let sort = Sort::parse(&sort_name)
                            .ok_or_else(|| self.err_at(ParseErrorKind::Sort, sort_at, format!("unknown sort '{sort_name}'")))?;
                        if let Some(prev) = self.sorts.insert(id.clone(), sort) {
                            if prev != sort {
                                return Err(self.err_at(ParseErrorKind::Sort, at, format!("'{id}' declared as {prev} and {sort}")));
                            }
                        }
                    }
                }
                Some("fresh") => {
                    self.pos += 1;
                    fresh.extend(self.declared_vars("fresh")?);
                }
                Some("secret") => {
                    self.pos += 1;
                    secret.extend(self.declared_vars("secret")?);
                }
                _ => break,
            }
        }
        let mut roles: Vec<Role> = Vec::new();
        while self.peek().is_some() {
            let at = self.pos;
            self.keyword("role")?;
            let role_name = self.name()?;
            if roles.iter().any(|r| r.name == role_name) {
                return Err(self.err_at(ParseErrorKind::DuplicateRole, at, format!("duplicate role '{role_name}'")));
            }
            self.expect(Tok::Colon)?;
            let mut nodes = Vec::new();
            while let Some(kw @ ("send" | "recv")) = self.peek_ident() {
                let sign = if kw == "send" { Sign::Send } else { Sign::Recv };
                self.pos += 1;
                nodes.push(Node::new(sign, self.term()?));
            }
            if nodes.is_empty() {
                return Err(self.err(ParseErrorKind::Syntax, format!("role '{role_name}' needs at least one send or recv")));
            }
            roles.push(Role { name: role_name, strand: Strand::new(nodes) });
        }
        if roles.is_empty() {
            return Err(self.err(ParseErrorKind::Syntax, "a protocol needs at least one role"));
        }
        Protocol::new(name, roles, fresh, secret).map_err(|e: ProtocolError| ParseError {
            kind: ParseErrorKind::Invalid,
            line: 1,
            column: 1,
            message: e.to_string(),
        })
    }
}

pub fn parse_protocol(text: &str) -> Result<Protocol, ParseError> {
    let toks = tokenize(text)?;
    Parser { toks, pos: 0, sorts: BTreeMap::new() }.protocol()
}

/// Prints a protocol so that [`parse_protocol`] gives it back.
pub fn print_protocol(p: &Protocol) -> String {
    let mut decls: BTreeMap<String, Sort> = BTreeMap::new();
    for t in p.terms() {
        for s in t.subterms() {
            if let Term::Var(n, sort) | Term::Const(n, sort) = s {
                decls.insert(n, sort);
            }
        }
    }
    let mut out = format!("protocol {}\n", p.name);
    if !decls.is_empty() {
        out.push_str("vars");
        for (n, s) in &decls {
            out.push_str(&format!(" {n}:{s}"));
        }
        out.push('\n');
    }
    for (kw, set) in [("fresh", &p.fresh_vars), ("secret", &p.secret_vars)] {
        if !set.is_empty() {
            out.push_str(kw);
            for v in set {
                out.push(' ');
                out.push_str(v);
            }
            out.push('\n');
        }
    }
    for r in &p.roles {
        out.push_str(&format!("role {}:\n", r.name));
        for n in &r.strand.nodes {
            let kw = if n.sign == Sign::Send { "send" } else { "recv" };
            out.push_str(&format!("  {kw} {}\n", n.term.to_dsl()));
        }
    }
    out
}
