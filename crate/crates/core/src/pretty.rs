//! Printing back to the surface syntax. `parse(print(p))` is alpha-equivalent to `p`.

use std::fmt::Write;

use crate::ast::*;

pub fn term(t: &Term) -> String {
    match t {
        Term::Name(x) | Term::Var(x) | Term::Const(x) => x.clone(),
        Term::Ctor(f, args) => format!("{f}({})", terms(args)),
        Term::Tuple(ts) => format!("({})", terms(ts)),
    }
}

fn terms(ts: &[Term]) -> String {
    ts.iter().map(term).collect::<Vec<_>>().join(", ")
}

pub fn pattern(p: &Pattern) -> String {
    match p {
        Pattern::Bind(x, Some(ty)) => format!("{x}:{ty}"),
        Pattern::Bind(x, None) => x.clone(),
        Pattern::Eq(t) => format!("={}", term(t)),
        Pattern::Ctor(f, ps) => format!("{f}({})", patterns(ps)),
        Pattern::Tuple(ps) => format!("({})", patterns(ps)),
    }
}

fn patterns(ps: &[Pattern]) -> String {
    ps.iter().map(pattern).collect::<Vec<_>>().join(", ")
}

fn let_pattern(p: &Pattern) -> String {
    match p {
        Pattern::Eq(_) => format!("({})", pattern(p)),
        _ => pattern(p),
    }
}

pub fn pretty_print(p: &Process) -> String {
    let mut out = String::new();
    write_proc(&mut out, p, 0);
    out
}

fn pad(out: &mut String, indent: usize) {
    out.push('\n');
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// Writes a process in a sequential position, parenthesizing parallel compositions.
fn write_seq(out: &mut String, p: &Process, indent: usize) {
    if matches!(p, Process::Par(..)) {
        out.push('(');
        write_proc(out, p, indent + 1);
        out.push(')');
    } else {
        write_proc(out, p, indent);
    }
}

fn write_cont(out: &mut String, p: &Process, indent: usize) {
    out.push(';');
    if matches!(p, Process::Nil) {
        out.push_str(" 0");
    } else {
        pad(out, indent);
        write_seq(out, p, indent);
    }
}

fn write_branches(out: &mut String, then: &Process, els: &Option<Box<Process>>, indent: usize) {
    match els {
        None => {
            pad(out, indent);
            write_seq(out, then, indent);
        }
        Some(e) => {
            pad(out, indent);
            out.push('(');
            write_proc(out, then, indent + 1);
            out.push(')');
            pad(out, indent);
            out.push_str("else ");
            write_seq(out, e, indent);
        }
    }
}

fn write_proc(out: &mut String, p: &Process, indent: usize) {
    match p {
        Process::Nil => out.push('0'),
        Process::Par(a, b) => {
            out.push('(');
            write_proc(out, a, indent + 1);
            out.push(')');
            pad(out, indent);
            out.push_str("| (");
            write_proc(out, b, indent + 1);
            out.push(')');
        }
        Process::Repl(q) => {
            out.push_str("!(");
            write_proc(out, q, indent + 1);
            out.push(')');
        }
        Process::New(x, ty, q) => {
            let _ = write!(out, "new {x}:{ty}");
            write_cont(out, q, indent);
        }
        Process::In(c, pat, q) => {
            let _ = write!(out, "in({}, {})", term(c), pattern(pat));
            write_cont(out, q, indent);
        }
        Process::Out(c, t, q) => {
            let _ = write!(out, "out({}, {})", term(c), term(t));
            write_cont(out, q, indent);
        }
        Process::Let(pat, t, q, e) => {
            let _ = write!(out, "let {} = {} in", let_pattern(pat), term(t));
            write_branches(out, q, e, indent);
        }
        Process::Insert(tb, args, q) => {
            let _ = write!(out, "insert {tb}({})", terms(args));
            write_cont(out, q, indent);
        }
        Process::Get(tb, pats, q, e) => {
            let _ = write!(out, "get {tb}({}) in", patterns(pats));
            write_branches(out, q, e, indent);
        }
        Process::Event(ev, args, q) => {
            if args.is_empty() {
                let _ = write!(out, "event {ev}");
            } else {
                let _ = write!(out, "event {ev}({})", terms(args));
            }
            write_cont(out, q, indent);
        }
        Process::If(a, b, q, e) => {
            let _ = write!(out, "if {} = {} then", term(a), term(b));
            write_branches(out, q, e, indent);
        }
        Process::Call(n, args) => {
            if args.is_empty() {
                out.push_str(n);
            } else {
                let _ = write!(out, "{n}({})", terms(args));
            }
        }
    }
}

pub fn participant(p: &Participant) -> String {
    let params = p.params.iter().map(|(x, t)| format!("{x}:{t}")).collect::<Vec<_>>().join(", ");
    let mut out = if p.params.is_empty() { format!("let {} =", p.name) } else { format!("let {}({params}) =", p.name) };
    let mut body = String::new();
    write_proc(&mut body, &p.body, 1);
    out.push_str("\n  ");
    out.push_str(&body);
    out.push_str(".\n");
    out
}

fn atom(a: &EventAtom) -> String {
    if a.args.is_empty() {
        format!("event({})", a.name)
    } else {
        format!("event({}({}))", a.name, terms(&a.args))
    }
}

pub fn query(q: &Query) -> String {
    match q {
        Query::Secrecy(t) => format!("query attacker({}).", term(t)),
        Query::Correspondence { premise, conclusion } => {
            format!("query {} ==> {}.", premise.iter().map(atom).collect::<Vec<_>>().join(" && "), atom(conclusion))
        }
    }
}

/// Declarations only, in a stable order.
pub fn declarations(spec: &SystemSpec) -> String {
    let mut out = String::new();
    for t in &spec.types {
        let _ = writeln!(out, "type {t}.");
    }
    for c in &spec.channels {
        let _ = writeln!(out, "free {c}: channel.");
    }
    for (n, t) in &spec.free_names {
        let _ = writeln!(out, "free {n}: {t}.");
    }
    for (n, t) in &spec.constants {
        let _ = writeln!(out, "const {n}: {t}.");
    }
    for c in &spec.constructors {
        let _ = writeln!(
            out,
            "fun {}({}): {}{}.",
            c.name,
            c.args.join(", "),
            c.ret,
            if c.private { " [private]" } else { "" }
        );
    }
    for t in &spec.tables {
        let _ = writeln!(out, "table {}({}).", t.name, t.columns.join(", "));
    }
    for e in &spec.events {
        if e.args.is_empty() {
            let _ = writeln!(out, "event {}.", e.name);
        } else {
            let _ = writeln!(out, "event {}({}).", e.name, e.args.join(", "));
        }
    }
    out
}

pub fn pretty_spec(spec: &SystemSpec) -> String {
    let mut out = declarations(spec);
    for p in &spec.participants {
        out.push('\n');
        out.push_str(&participant(p));
    }
    for (r, p) in &spec.roles {
        let _ = writeln!(out, "role {r} = {p}.");
    }
    if !spec.queries.is_empty() {
        out.push('\n');
    }
    for q in &spec.queries {
        out.push_str(&query(q));
        out.push('\n');
    }
    if let Some(m) = &spec.main {
        out.push_str("\nprocess\n  ");
        let mut body = String::new();
        write_proc(&mut body, m, 1);
        out.push_str(&body);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nil_prints_as_zero() {
        assert_eq!(pretty_print(&Process::Nil), "0");
    }

    #[test]
    fn new_on_one_line() {
        let p = Process::New("state".into(), "bitstring".into(), Process::Nil.boxed());
        assert_eq!(pretty_print(&p), "new state:bitstring; 0");
    }

    #[test]
    fn eq_let_pattern_is_parenthesized() {
        let p = Process::Let(Pattern::Eq(Term::ctor("httpGet", vec![])), Term::var("cs"), Process::Nil.boxed(), None);
        assert_eq!(pretty_print(&p), "let (=httpGet()) = cs in\n0");
    }
}
