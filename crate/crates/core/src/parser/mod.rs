//! Parser for the `.bw.pv` dialect.

mod lexer;
mod wf;

use std::fmt;

use crate::ast::*;
use lexer::{lex, Spanned, Tok};

pub use wf::check_process;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("syntax error at {0}")]
    Parse(#[from] ParseError),
    #[error("ill-formed specification: {}", .0.join("; "))]
    WellFormed(Vec<String>),
}

impl SpecError {
    pub fn problems(&self) -> Vec<String> {
        match self {
            SpecError::Parse(e) => vec![e.to_string()],
            SpecError::WellFormed(p) => p.clone(),
        }
    }
}

pub fn parse_spec(source: &str) -> Result<SystemSpec, SpecError> {
    parse_spec_extending(&SystemSpec::default(), source)
}

/// Parses `source` on top of the declarations and participants of `base`.
/// Queries and the main process of `base` are not carried over.
pub fn parse_spec_extending(base: &SystemSpec, source: &str) -> Result<SystemSpec, SpecError> {
    let mut spec = SystemSpec {
        types: base.types.clone(),
        channels: base.channels.clone(),
        free_names: base.free_names.clone(),
        constants: base.constants.clone(),
        constructors: base.constructors.clone(),
        tables: base.tables.clone(),
        events: base.events.clone(),
        participants: base.participants.clone(),
        roles: base.roles.clone(),
        ..SystemSpec::default()
    };
    let mut p = Parser::new(source)?;
    p.items(&mut spec)?;
    wf::resolve_spec(&mut spec).map_err(SpecError::WellFormed)?;
    Ok(spec)
}

pub fn parse_query(source: &str) -> Result<Query, ParseError> {
    let mut p = Parser::new(source)?;
    p.expect_kw("query")?;
    let q = p.query_body()?;
    if p.peek() == &Tok::Dot {
        p.bump();
    }
    p.expect(Tok::Eof)?;
    Ok(wf::resolve_query(&SystemSpec::default(), q))
}

/// Parses a single process expression against the declarations of `spec`.
pub fn parse_process(spec: &SystemSpec, source: &str) -> Result<Process, SpecError> {
    let mut p = Parser::new(source)?;
    let proc_ = p.process()?;
    if p.peek() == &Tok::Dot {
        p.bump();
    }
    p.expect(Tok::Eof)?;
    wf::resolve_free_process(spec, proc_).map_err(SpecError::WellFormed)
}

const KEYWORDS: &[&str] = &[
    "let", "in", "out", "new", "insert", "get", "event", "if", "then", "else", "query", "process", "type", "free",
    "fun", "const", "table", "role",
];

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err(&self, expected: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError { line: t.line, column: t.column, expected: expected.into(), found: t.tok.describe() }
    }

    fn expect(&mut self, t: Tok) -> Result<(), ParseError> {
        if self.peek() == &t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(t.describe()))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> Result<Ident, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.err("identifier")),
        }
    }

    fn items(&mut self, spec: &mut SystemSpec) -> Result<(), ParseError> {
        loop {
            let Tok::Ident(kw) = self.peek().clone() else {
                if self.peek() == &Tok::Eof {
                    return Ok(());
                }
                return Err(self.err("a declaration"));
            };
            self.bump();
            match kw.as_str() {
                "type" => {
                    let t = self.ident()?;
                    self.options()?;
                    spec.types.push(t);
                    self.expect(Tok::Dot)?;
                }
                "free" => {
                    let names = self.ident_list()?;
                    self.expect(Tok::Colon)?;
                    let ty = self.ident()?;
                    self.options()?;
                    self.expect(Tok::Dot)?;
                    for n in names {
                        if ty == "channel" {
                            spec.channels.push(n);
                        } else {
                            spec.free_names.push((n, ty.clone()));
                        }
                    }
                }
                "const" => {
                    let names = self.ident_list()?;
                    self.expect(Tok::Colon)?;
                    let ty = self.ident()?;
                    self.options()?;
                    self.expect(Tok::Dot)?;
                    spec.constants.extend(names.into_iter().map(|n| (n, ty.clone())));
                }
                "fun" => {
                    let name = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let args = self.type_list(Tok::RParen)?;
                    self.expect(Tok::Colon)?;
                    let ret = self.ident()?;
                    let opts = self.options()?;
                    self.expect(Tok::Dot)?;
                    spec.constructors.push(CtorDecl { name, args, ret, private: opts.iter().any(|o| o == "private") });
                }
                "table" => {
                    let name = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let columns = self.type_list(Tok::RParen)?;
                    self.expect(Tok::Dot)?;
                    spec.tables.push(TableDecl { name, columns });
                }
                "event" => {
                    let name = self.ident()?;
                    let args = if self.peek() == &Tok::LParen {
                        self.bump();
                        self.type_list(Tok::RParen)?
                    } else {
                        Vec::new()
                    };
                    self.expect(Tok::Dot)?;
                    spec.events.push(EventDecl { name, args });
                }
                "role" => {
                    let role = self.ident()?;
                    self.expect(Tok::Eq)?;
                    let part = self.ident()?;
                    self.expect(Tok::Dot)?;
                    spec.roles.push((role, part));
                }
                "let" => {
                    let name = self.ident()?;
                    let params = if self.peek() == &Tok::LParen {
                        self.bump();
                        self.params()?
                    } else {
                        Vec::new()
                    };
                    self.expect(Tok::Eq)?;
                    let body = self.process()?;
                    self.expect(Tok::Dot)?;
                    spec.participants.push(Participant { name, params, body });
                }
                "query" => {
                    let q = self.query_body()?;
                    self.expect(Tok::Dot)?;
                    spec.queries.push(q);
                }
                "process" => {
                    let p = self.process()?;
                    if self.peek() == &Tok::Dot {
                        self.bump();
                    }
                    spec.main = Some(p);
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.err("a declaration"));
                }
            }
        }
    }

    fn ident_list(&mut self) -> Result<Vec<Ident>, ParseError> {
        let mut out = vec![self.ident()?];
        while self.peek() == &Tok::Comma {
            self.bump();
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn type_list(&mut self, close: Tok) -> Result<Vec<Ident>, ParseError> {
        let mut out = Vec::new();
        if self.peek() == &close {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if self.peek() == &Tok::Comma {
                self.bump();
            } else {
                self.expect(close)?;
                return Ok(out);
            }
        }
    }

    /// `[data, private]` style option lists.
    fn options(&mut self) -> Result<Vec<String>, ParseError> {
        if self.peek() != &Tok::LBracket {
            return Ok(Vec::new());
        }
        self.bump();
        self.type_list(Tok::RBracket)
    }

    /// `x:T, y, z:U)` with the closing paren consumed.
    fn params(&mut self) -> Result<Vec<(Ident, Ident)>, ParseError> {
        let mut out = Vec::new();
        if self.peek() == &Tok::RParen {
            self.bump();
            return Ok(out);
        }
        let mut pending = Vec::new();
        loop {
            pending.push(self.ident()?);
            if self.peek() == &Tok::Colon {
                self.bump();
                let ty = self.ident()?;
                out.extend(pending.drain(..).map(|n| (n, ty.clone())));
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen if pending.is_empty() => {
                    self.bump();
                    return Ok(out);
                }
                _ => return Err(self.err(if pending.is_empty() { "`,` or `)`" } else { "`:`" })),
            }
        }
    }

    fn process(&mut self) -> Result<Process, ParseError> {
        let mut p = self.seq()?;
        while self.peek() == &Tok::Bar {
            self.bump();
            let q = self.seq()?;
            p = Process::Par(p.boxed(), q.boxed());
        }
        Ok(p)
    }

    /// Continuation after `;`; absent continuations are `0`.
    fn cont(&mut self) -> Result<Process, ParseError> {
        if self.peek() == &Tok::Semi {
            self.bump();
            self.seq()
        } else {
            Ok(Process::Nil)
        }
    }

    fn else_branch(&mut self) -> Result<Option<Box<Process>>, ParseError> {
        if self.is_kw("else") {
            self.bump();
            Ok(Some(self.seq()?.boxed()))
        } else {
            Ok(None)
        }
    }

    fn seq(&mut self) -> Result<Process, ParseError> {
        match self.peek().clone() {
            Tok::Number(n) if n == "0" => {
                self.bump();
                Ok(Process::Nil)
            }
            Tok::Bang => {
                self.bump();
                Ok(Process::Repl(self.seq()?.boxed()))
            }
            Tok::LParen => {
                self.bump();
                let p = self.process()?;
                self.expect(Tok::RParen)?;
                Ok(p)
            }
            Tok::Ident(kw) => match kw.as_str() {
                "new" => {
                    self.bump();
                    let x = self.ident()?;
                    self.expect(Tok::Colon)?;
                    let ty = self.ident()?;
                    let p = self.cont()?;
                    Ok(Process::New(x, ty, p.boxed()))
                }
                "in" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let c = self.term()?;
                    self.expect(Tok::Comma)?;
                    let pat = self.pattern()?;
                    self.expect(Tok::RParen)?;
                    let p = self.cont()?;
                    Ok(Process::In(c, pat, p.boxed()))
                }
                "out" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let c = self.term()?;
                    self.expect(Tok::Comma)?;
                    let t = self.term()?;
                    self.expect(Tok::RParen)?;
                    let p = self.cont()?;
                    Ok(Process::Out(c, t, p.boxed()))
                }
                "let" => {
                    self.bump();
                    let pat = self.pattern()?;
                    self.expect(Tok::Eq)?;
                    let t = self.term()?;
                    self.expect_kw("in")?;
                    let p = self.seq()?;
                    let e = self.else_branch()?;
                    Ok(Process::Let(pat, t, p.boxed(), e))
                }
                "insert" => {
                    self.bump();
                    let tb = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let args = self.terms(Tok::RParen)?;
                    let p = self.cont()?;
                    Ok(Process::Insert(tb, args, p.boxed()))
                }
                "get" => {
                    self.bump();
                    let tb = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let pats = self.patterns(Tok::RParen)?;
                    self.expect_kw("in")?;
                    let p = self.seq()?;
                    let e = self.else_branch()?;
                    Ok(Process::Get(tb, pats, p.boxed(), e))
                }
                "event" => {
                    self.bump();
                    let ev = self.ident()?;
                    let args = if self.peek() == &Tok::LParen {
                        self.bump();
                        self.terms(Tok::RParen)?
                    } else {
                        Vec::new()
                    };
                    let p = self.cont()?;
                    Ok(Process::Event(ev, args, p.boxed()))
                }
                "if" => {
                    self.bump();
                    let a = self.term()?;
                    self.expect(Tok::Eq)?;
                    let b = self.term()?;
                    self.expect_kw("then")?;
                    let p = self.seq()?;
                    let e = self.else_branch()?;
                    Ok(Process::If(a, b, p.boxed(), e))
                }
                _ if !KEYWORDS.contains(&kw.as_str()) => {
                    self.bump();
                    let args = if self.peek() == &Tok::LParen {
                        self.bump();
                        self.terms(Tok::RParen)?
                    } else {
                        Vec::new()
                    };
                    Ok(Process::Call(kw, args))
                }
                _ => Err(self.err("a process")),
            },
            _ => Err(self.err("a process")),
        }
    }

    fn terms(&mut self, close: Tok) -> Result<Vec<Term>, ParseError> {
        let mut out = Vec::new();
        if self.peek() == &close {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.term()?);
            if self.peek() == &Tok::Comma {
                self.bump();
            } else {
                self.expect(close)?;
                return Ok(out);
            }
        }
    }

    /// Bare identifiers come out as `Term::Name` and are resolved later.
    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Tok::LParen => {
                self.bump();
                let mut ts = self.terms(Tok::RParen)?;
                match ts.len() {
                    0 => Err(self.err("a term")),
                    1 => Ok(ts.remove(0)),
                    _ => Ok(Term::Tuple(ts)),
                }
            }
            Tok::Ident(_) => {
                let f = self.ident()?;
                if self.peek() == &Tok::LParen {
                    self.bump();
                    let args = self.terms(Tok::RParen)?;
                    Ok(Term::Ctor(f, args))
                } else {
                    Ok(Term::Name(f))
                }
            }
            _ => Err(self.err("a term")),
        }
    }

    fn patterns(&mut self, close: Tok) -> Result<Vec<Pattern>, ParseError> {
        let mut out = Vec::new();
        if self.peek() == &close {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.pattern()?);
            if self.peek() == &Tok::Comma {
                self.bump();
            } else {
                self.expect(close)?;
                return Ok(out);
            }
        }
    }

    fn pattern(&mut self) -> Result<Pattern, ParseError> {
        match self.peek() {
            Tok::Eq => {
                self.bump();
                Ok(Pattern::Eq(self.term()?))
            }
            Tok::LParen => {
                self.bump();
                let mut ps = self.patterns(Tok::RParen)?;
                match ps.len() {
                    0 => Err(self.err("a pattern")),
                    1 => Ok(ps.remove(0)),
                    _ => Ok(Pattern::Tuple(ps)),
                }
            }
            Tok::Ident(_) => {
                let x = self.ident()?;
                match self.peek() {
                    Tok::LParen => {
                        self.bump();
                        let ps = self.patterns(Tok::RParen)?;
                        Ok(Pattern::Ctor(x, ps))
                    }
                    Tok::Colon => {
                        self.bump();
                        let ty = self.ident()?;
                        Ok(Pattern::Bind(x, Some(ty)))
                    }
                    _ => Ok(Pattern::Bind(x, None)),
                }
            }
            _ => Err(self.err("a pattern")),
        }
    }

    fn event_atom(&mut self) -> Result<EventAtom, ParseError> {
        self.expect_kw("event")?;
        self.expect(Tok::LParen)?;
        let name = self.ident()?;
        let args = if self.peek() == &Tok::LParen {
            self.bump();
            self.terms(Tok::RParen)?
        } else {
            Vec::new()
        };
        self.expect(Tok::RParen)?;
        Ok(EventAtom { name, args })
    }

    fn query_body(&mut self) -> Result<Query, ParseError> {
        // optional `x:T, y:T;` variable declarations
        let mut declared = Vec::new();
        if matches!(self.peek(), Tok::Ident(s) if s != "event" && s != "attacker" && s != "secret")
            && matches!(self.peek_at(1), Tok::Colon | Tok::Comma)
        {
            declared = self.params_until_semi()?.into_iter().map(|(x, _)| x).collect();
        }
        let q = self.query_core()?;
        Ok(mark_declared(q, &declared))
    }

    fn query_core(&mut self) -> Result<Query, ParseError> {
        if self.is_kw("attacker") {
            self.bump();
            self.expect(Tok::LParen)?;
            let t = self.term()?;
            self.expect(Tok::RParen)?;
            return Ok(Query::Secrecy(t));
        }
        if self.is_kw("secret") {
            self.bump();
            return Ok(Query::Secrecy(self.term()?));
        }
        let mut premise = vec![self.event_atom()?];
        while self.peek() == &Tok::And {
            self.bump();
            premise.push(self.event_atom()?);
        }
        self.expect(Tok::Implies)?;
        let conclusion = self.event_atom()?;
        Ok(Query::Correspondence { premise, conclusion })
    }

    fn params_until_semi(&mut self) -> Result<Vec<(Ident, Ident)>, ParseError> {
        let mut out = Vec::new();
        let mut pending = Vec::new();
        loop {
            pending.push(self.ident()?);
            if self.peek() == &Tok::Colon {
                self.bump();
                let ty = self.ident()?;
                out.extend(pending.drain(..).map(|n| (n, ty.clone())));
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::Semi if pending.is_empty() => {
                    self.bump();
                    return Ok(out);
                }
                _ => return Err(self.err("`;`")),
            }
        }
    }
}

/// Query variables declared up front shadow free names of the same spelling.
fn mark_declared(q: Query, declared: &[Ident]) -> Query {
    fn term(t: Term, d: &[Ident]) -> Term {
        match t {
            Term::Name(x) if d.contains(&x) => Term::Var(x),
            Term::Ctor(f, args) => Term::Ctor(f, args.into_iter().map(|a| term(a, d)).collect()),
            Term::Tuple(ts) => Term::Tuple(ts.into_iter().map(|a| term(a, d)).collect()),
            other => other,
        }
    }
    let atom = |a: EventAtom| EventAtom { name: a.name, args: a.args.into_iter().map(|t| term(t, declared)).collect() };
    match q {
        Query::Correspondence { premise, conclusion } => {
            Query::Correspondence { premise: premise.into_iter().map(atom).collect(), conclusion: atom(conclusion) }
        }
        Query::Secrecy(t) => Query::Secrecy(term(t, declared)),
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_participant() {
        let s = parse_spec("let P = 0.").unwrap();
        assert_eq!(s.participants.len(), 1);
        assert_eq!(s.participants[0].body, Process::Nil);
    }

    #[test]
    fn unbound_variable_is_named() {
        let e = parse_spec("free c: channel. let P = out(c, x).").unwrap_err();
        match e {
            SpecError::WellFormed(ps) => assert!(ps.iter().any(|p| p.contains("`x`")), "{ps:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_channel_and_variable_both_reported() {
        let e = parse_spec("let P = out(c, x).").unwrap_err();
        let ps = e.problems();
        assert!(ps.iter().any(|p| p.contains("`x`")));
        assert!(ps.iter().any(|p| p.contains("`c`")));
    }

    #[test]
    fn secrecy_query() {
        assert_eq!(parse_query("query attacker(token).").unwrap(), Query::Secrecy(Term::var("token")));
    }

    #[test]
    fn missing_conclusion() {
        let e = parse_query("query event(a) ⇒").unwrap_err();
        assert_eq!(e.expected, "`event`");
        assert_eq!(e.line, 1);
        assert!(e.column >= 1 && e.column <= "query event(a) ⇒".chars().count());
    }

    #[test]
    fn conjunctive_premise() {
        let q = parse_query("query event(a(x)) && event(b(x, y)) ==> event(c(x)).").unwrap();
        match q {
            Query::Correspondence { premise, conclusion } => {
                assert_eq!(premise.len(), 2);
                assert_eq!(conclusion.args, vec![Term::var("x")]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn else_binds_to_nearest() {
        let s = parse_spec(
            "free c: channel. const a: bitstring.
             let P = in(c, x); let (=a) = x in let y = x in out(c, y) else out(c, a).",
        )
        .unwrap();
        let Process::In(_, _, body) = &s.participants[0].body else { panic!() };
        let Process::Let(_, _, inner, outer_else) = body.as_ref() else { panic!() };
        assert!(outer_else.is_none());
        assert!(matches!(inner.as_ref(), Process::Let(_, _, _, Some(_))));
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_spec("let P =\n  out(c x).").unwrap_err();
        match e {
            SpecError::Parse(p) => assert_eq!((p.line, p.column), (2, 9)),
            other => panic!("{other:?}"),
        }
    }
}
