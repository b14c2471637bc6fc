//! The applied-pi dialect: terms, patterns, processes, queries and the
//! declarations that make up a [`SystemSpec`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub type Ident = String;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    /// A free name: a declared channel or a `free` name.
    Name(Ident),
    /// A variable bound by `new`, a pattern, or a participant parameter.
    Var(Ident),
    /// A declared constant.
    Const(Ident),
    Ctor(Ident, Vec<Term>),
    Tuple(Vec<Term>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    /// `x:T` or a bare `x`.
    Bind(Ident, Option<Ident>),
    /// `=t`
    Eq(Term),
    Ctor(Ident, Vec<Pattern>),
    Tuple(Vec<Pattern>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Process {
    Nil,
    Par(Box<Process>, Box<Process>),
    Repl(Box<Process>),
    New(Ident, Ident, Box<Process>),
    In(Term, Pattern, Box<Process>),
    Out(Term, Term, Box<Process>),
    Let(Pattern, Term, Box<Process>, Option<Box<Process>>),
    Insert(Ident, Vec<Term>, Box<Process>),
    Get(Ident, Vec<Pattern>, Box<Process>, Option<Box<Process>>),
    Event(Ident, Vec<Term>, Box<Process>),
    If(Term, Term, Box<Process>, Option<Box<Process>>),
    /// Instantiation of a named participant, only used in the main composition.
    Call(Ident, Vec<Term>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventAtom {
    pub name: Ident,
    pub args: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Query {
    Correspondence { premise: Vec<EventAtom>, conclusion: EventAtom },
    Secrecy(Term),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtorDecl {
    pub name: Ident,
    pub args: Vec<Ident>,
    pub ret: Ident,
    pub private: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDecl {
    pub name: Ident,
    pub columns: Vec<Ident>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDecl {
    pub name: Ident,
    pub args: Vec<Ident>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub name: Ident,
    pub params: Vec<(Ident, Ident)>,
    pub body: Process,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub types: Vec<Ident>,
    pub channels: Vec<Ident>,
    /// `free x: T.` declarations whose type is not `channel`.
    pub free_names: Vec<(Ident, Ident)>,
    pub constants: Vec<(Ident, Ident)>,
    pub constructors: Vec<CtorDecl>,
    pub tables: Vec<TableDecl>,
    pub events: Vec<EventDecl>,
    pub participants: Vec<Participant>,
    /// role name -> participant name
    pub roles: Vec<(Ident, Ident)>,
    pub queries: Vec<Query>,
    pub main: Option<Process>,
}

impl SystemSpec {
    pub fn participant(&self, name: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.name == name)
    }

    /// Resolves a role (`RP`, `TTP`, `UA`) or a participant name.
    pub fn participant_for_role(&self, role: &str) -> Option<&Participant> {
        let name = self.roles.iter().find(|(r, _)| r == role).map(|(_, p)| p.as_str()).unwrap_or(role);
        self.participant(name)
    }

    pub fn role_of(&self, participant: &str) -> Option<&str> {
        self.roles.iter().find(|(_, p)| p == participant).map(|(r, _)| r.as_str())
    }

    pub fn ctor(&self, name: &str) -> Option<&CtorDecl> {
        self.constructors.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&TableDecl> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn is_private_ctor(&self, name: &str) -> bool {
        self.ctor(name).is_some_and(|c| c.private)
    }

    pub fn is_channel(&self, name: &str) -> bool {
        self.channels.iter().any(|c| c == name)
    }
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn ctor(name: &str, args: Vec<Term>) -> Term {
        Term::Ctor(name.to_string(), args)
    }

    /// Free variables (not constants or free names).
    pub fn vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Name(_) | Term::Const(_) => {}
            Term::Ctor(_, args) | Term::Tuple(args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// All identifiers occurring in the term (variables, names, constants).
    pub fn idents(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Term::Var(v) | Term::Name(v) | Term::Const(v) => {
                out.insert(v.clone());
            }
            Term::Ctor(_, args) | Term::Tuple(args) => args.iter().for_each(|a| a.idents(out)),
        }
    }

    pub fn is_ground(&self) -> bool {
        self.vars().is_empty()
    }

    pub fn ctors(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Term::Ctor(f, args) => {
                out.insert(f.clone());
                args.iter().for_each(|a| a.ctors(out));
            }
            Term::Tuple(args) => args.iter().for_each(|a| a.ctors(out)),
            _ => {}
        }
    }

    pub fn subst(&self, map: &BTreeMap<Ident, Term>) -> Term {
        match self {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Name(_) | Term::Const(_) => self.clone(),
            Term::Ctor(f, args) => Term::Ctor(f.clone(), args.iter().map(|a| a.subst(map)).collect()),
            Term::Tuple(args) => Term::Tuple(args.iter().map(|a| a.subst(map)).collect()),
        }
    }

    /// Replaces whole subterms equal to `from` with `to`.
    pub fn replace(&self, from: &Term, to: &Term) -> Term {
        if self == from {
            return to.clone();
        }
        match self {
            Term::Ctor(f, args) => Term::Ctor(f.clone(), args.iter().map(|a| a.replace(from, to)).collect()),
            Term::Tuple(args) => Term::Tuple(args.iter().map(|a| a.replace(from, to)).collect()),
            _ => self.clone(),
        }
    }
}

impl Pattern {
    pub fn bind(name: &str) -> Pattern {
        Pattern::Bind(name.to_string(), None)
    }

    /// Variables bound by this pattern, in left-to-right order.
    pub fn binders(&self) -> Vec<Ident> {
        let mut out = Vec::new();
        self.collect_binders(&mut out);
        out
    }

    fn collect_binders(&self, out: &mut Vec<Ident>) {
        match self {
            Pattern::Bind(x, _) => out.push(x.clone()),
            Pattern::Eq(_) => {}
            Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().for_each(|p| p.collect_binders(out)),
        }
    }

    /// Binders with their type annotations.
    pub fn typed_binders(&self) -> Vec<(Ident, Option<Ident>)> {
        let mut out = Vec::new();
        fn go(p: &Pattern, out: &mut Vec<(Ident, Option<Ident>)>) {
            match p {
                Pattern::Bind(x, t) => out.push((x.clone(), t.clone())),
                Pattern::Eq(_) => {}
                Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().for_each(|p| go(p, out)),
            }
        }
        go(self, &mut out);
        out
    }

    /// Identifiers free in the equality sub-patterns.
    pub fn eq_idents(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Pattern::Bind(..) => {}
            Pattern::Eq(t) => t.idents(out),
            Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().for_each(|p| p.eq_idents(out)),
        }
    }

    pub fn eq_vars(&self) -> BTreeSet<Ident> {
        let mut out = BTreeSet::new();
        fn go(p: &Pattern, out: &mut BTreeSet<Ident>) {
            match p {
                Pattern::Bind(..) => {}
                Pattern::Eq(t) => out.extend(t.vars()),
                Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().for_each(|p| go(p, out)),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn has_eq(&self) -> bool {
        match self {
            Pattern::Bind(..) => false,
            Pattern::Eq(_) => true,
            Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().any(Pattern::has_eq),
        }
    }

    /// True for a pattern that cannot fail: a binder or a tuple of binders.
    pub fn is_irrefutable(&self) -> bool {
        match self {
            Pattern::Bind(..) => true,
            Pattern::Tuple(ps) => ps.iter().all(Pattern::is_irrefutable),
            _ => false,
        }
    }

    /// The term a successful match reconstructs.
    pub fn to_term(&self) -> Term {
        match self {
            Pattern::Bind(x, _) => Term::Var(x.clone()),
            Pattern::Eq(t) => t.clone(),
            Pattern::Ctor(f, ps) => Term::Ctor(f.clone(), ps.iter().map(Pattern::to_term).collect()),
            Pattern::Tuple(ps) => Term::Tuple(ps.iter().map(Pattern::to_term).collect()),
        }
    }

    pub fn subst_eq(&self, map: &BTreeMap<Ident, Term>) -> Pattern {
        match self {
            Pattern::Bind(..) => self.clone(),
            Pattern::Eq(t) => Pattern::Eq(t.subst(map)),
            Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(|p| p.subst_eq(map)).collect()),
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|p| p.subst_eq(map)).collect()),
        }
    }

    pub fn rename_binders(&self, map: &BTreeMap<Ident, Ident>) -> Pattern {
        match self {
            Pattern::Bind(x, t) => Pattern::Bind(map.get(x).cloned().unwrap_or_else(|| x.clone()), t.clone()),
            Pattern::Eq(_) => self.clone(),
            Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(|p| p.rename_binders(map)).collect()),
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|p| p.rename_binders(map)).collect()),
        }
    }

    pub fn ctors(&self, out: &mut BTreeSet<Ident>) {
        match self {
            Pattern::Bind(..) => {}
            Pattern::Eq(t) => t.ctors(out),
            Pattern::Ctor(f, ps) => {
                out.insert(f.clone());
                ps.iter().for_each(|p| p.ctors(out));
            }
            Pattern::Tuple(ps) => ps.iter().for_each(|p| p.ctors(out)),
        }
    }
}

impl Process {
    pub fn boxed(self) -> Box<Process> {
        Box::new(self)
    }

    /// The process that runs after this node on its main path, if any.
    pub fn continuation(&self) -> Option<&Process> {
        match self {
            Process::New(_, _, p)
            | Process::In(_, _, p)
            | Process::Out(_, _, p)
            | Process::Let(_, _, p, _)
            | Process::Insert(_, _, p)
            | Process::Get(_, _, p, _)
            | Process::Event(_, _, p)
            | Process::If(_, _, p, _)
            | Process::Repl(p) => Some(p),
            _ => None,
        }
    }

    /// Number of nodes, used to bound generated corpora.
    pub fn size(&self) -> usize {
        match self {
            Process::Nil | Process::Call(..) => 1,
            Process::Par(a, b) => 1 + a.size() + b.size(),
            Process::Let(_, _, p, e) | Process::Get(_, _, p, e) | Process::If(_, _, p, e) => {
                1 + p.size() + e.as_ref().map_or(0, |e| e.size())
            }
            other => 1 + other.continuation().map_or(0, Process::size),
        }
    }

    /// Substitutes free occurrences of variables. Bound occurrences shadow the map.
    pub fn subst(&self, map: &BTreeMap<Ident, Term>) -> Process {
        fn without(map: &BTreeMap<Ident, Term>, names: &[Ident]) -> BTreeMap<Ident, Term> {
            let mut m = map.clone();
            for n in names {
                m.remove(n);
            }
            m
        }
        match self {
            Process::Nil => Process::Nil,
            Process::Par(a, b) => Process::Par(a.subst(map).boxed(), b.subst(map).boxed()),
            Process::Repl(p) => Process::Repl(p.subst(map).boxed()),
            Process::New(x, t, p) => {
                Process::New(x.clone(), t.clone(), p.subst(&without(map, std::slice::from_ref(x))).boxed())
            }
            Process::In(c, pat, p) => {
                let inner = without(map, &pat.binders());
                Process::In(c.subst(map), pat.subst_eq(map), p.subst(&inner).boxed())
            }
            Process::Out(c, t, p) => Process::Out(c.subst(map), t.subst(map), p.subst(map).boxed()),
            Process::Let(pat, t, p, e) => {
                let inner = without(map, &pat.binders());
                Process::Let(
                    pat.subst_eq(map),
                    t.subst(map),
                    p.subst(&inner).boxed(),
                    e.as_ref().map(|e| e.subst(map).boxed()),
                )
            }
            Process::Insert(tb, args, p) => {
                Process::Insert(tb.clone(), args.iter().map(|a| a.subst(map)).collect(), p.subst(map).boxed())
            }
            Process::Get(tb, pats, p, e) => {
                let bound: Vec<Ident> = pats.iter().flat_map(Pattern::binders).collect();
                let inner = without(map, &bound);
                Process::Get(
                    tb.clone(),
                    pats.iter().map(|q| q.subst_eq(map)).collect(),
                    p.subst(&inner).boxed(),
                    e.as_ref().map(|e| e.subst(map).boxed()),
                )
            }
            Process::Event(ev, args, p) => {
                Process::Event(ev.clone(), args.iter().map(|a| a.subst(map)).collect(), p.subst(map).boxed())
            }
            Process::If(a, b, p, e) => {
                Process::If(a.subst(map), b.subst(map), p.subst(map).boxed(), e.as_ref().map(|e| e.subst(map).boxed()))
            }
            Process::Call(n, args) => Process::Call(n.clone(), args.iter().map(|a| a.subst(map)).collect()),
        }
    }

    /// Renames free channel names according to `map`, in channel positions only.
    pub fn map_channels(&self, f: &dyn Fn(&Term, bool) -> Term) -> Process {
        let rec = |p: &Process| p.map_channels(f).boxed();
        match self {
            Process::Nil => Process::Nil,
            Process::Par(a, b) => Process::Par(rec(a), rec(b)),
            Process::Repl(p) => Process::Repl(rec(p)),
            Process::New(x, t, p) => Process::New(x.clone(), t.clone(), rec(p)),
            Process::In(c, pat, p) => Process::In(f(c, true), pat.clone(), rec(p)),
            Process::Out(c, t, p) => Process::Out(f(c, false), t.clone(), rec(p)),
            Process::Let(pat, t, p, e) => Process::Let(pat.clone(), t.clone(), rec(p), e.as_ref().map(|e| rec(e))),
            Process::Insert(tb, a, p) => Process::Insert(tb.clone(), a.clone(), rec(p)),
            Process::Get(tb, ps, p, e) => Process::Get(tb.clone(), ps.clone(), rec(p), e.as_ref().map(|e| rec(e))),
            Process::Event(ev, a, p) => Process::Event(ev.clone(), a.clone(), rec(p)),
            Process::If(a, b, p, e) => Process::If(a.clone(), b.clone(), rec(p), e.as_ref().map(|e| rec(e))),
            Process::Call(n, a) => Process::Call(n.clone(), a.clone()),
        }
    }

    /// Walks every node in pre-order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Process)) {
        f(self);
        match self {
            Process::Par(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Process::Let(_, _, p, e) | Process::Get(_, _, p, e) | Process::If(_, _, p, e) => {
                p.visit(f);
                if let Some(e) = e {
                    e.visit(f);
                }
            }
            other => {
                if let Some(p) = other.continuation() {
                    p.visit(f);
                }
            }
        }
    }
}

/// Identifiers occurring free in `p`: binding removes from the result.
pub fn free_names(p: &Process) -> BTreeSet<Ident> {
    let mut out = BTreeSet::new();
    collect_free(p, &BTreeSet::new(), &mut out);
    out
}

fn add_term(t: &Term, bound: &BTreeSet<Ident>, out: &mut BTreeSet<Ident>) {
    let mut ids = BTreeSet::new();
    t.idents(&mut ids);
    out.extend(ids.into_iter().filter(|i| !bound.contains(i)));
}

fn add_pattern_eqs(p: &Pattern, bound: &BTreeSet<Ident>, out: &mut BTreeSet<Ident>) {
    let mut ids = BTreeSet::new();
    p.eq_idents(&mut ids);
    out.extend(ids.into_iter().filter(|i| !bound.contains(i)));
}

fn extend(bound: &BTreeSet<Ident>, names: impl IntoIterator<Item = Ident>) -> BTreeSet<Ident> {
    let mut b = bound.clone();
    b.extend(names);
    b
}

fn collect_free(p: &Process, bound: &BTreeSet<Ident>, out: &mut BTreeSet<Ident>) {
    match p {
        Process::Nil => {}
        Process::Par(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Process::Repl(q) => collect_free(q, bound, out),
        Process::New(x, _, q) => collect_free(q, &extend(bound, [x.clone()]), out),
        Process::In(c, pat, q) => {
            add_term(c, bound, out);
            add_pattern_eqs(pat, bound, out);
            collect_free(q, &extend(bound, pat.binders()), out);
        }
        Process::Out(c, t, q) => {
            add_term(c, bound, out);
            add_term(t, bound, out);
            collect_free(q, bound, out);
        }
        Process::Let(pat, t, q, e) => {
            add_term(t, bound, out);
            add_pattern_eqs(pat, bound, out);
            collect_free(q, &extend(bound, pat.binders()), out);
            if let Some(e) = e {
                collect_free(e, bound, out);
            }
        }
        Process::Insert(_, args, q) | Process::Event(_, args, q) => {
            args.iter().for_each(|a| add_term(a, bound, out));
            collect_free(q, bound, out);
        }
        Process::Get(_, pats, q, e) => {
            pats.iter().for_each(|pt| add_pattern_eqs(pt, bound, out));
            collect_free(q, &extend(bound, pats.iter().flat_map(Pattern::binders)), out);
            if let Some(e) = e {
                collect_free(e, bound, out);
            }
        }
        Process::If(a, b, q, e) => {
            add_term(a, bound, out);
            add_term(b, bound, out);
            collect_free(q, bound, out);
            if let Some(e) = e {
                collect_free(e, bound, out);
            }
        }
        Process::Call(_, args) => args.iter().for_each(|a| add_term(a, bound, out)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<Ident> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn free_names_of_output() {
        let p = Process::Out(Term::Name("c".into()), Term::var("x"), Process::Nil.boxed());
        assert_eq!(free_names(&p), set(&["c", "x"]));
    }

    #[test]
    fn new_binds_its_name() {
        let p = Process::New(
            "x".into(),
            "bitstring".into(),
            Process::Out(Term::Name("c".into()), Term::var("x"), Process::Nil.boxed()).boxed(),
        );
        assert_eq!(free_names(&p), set(&["c"]));
    }

    #[test]
    fn let_binds_only_in_then_branch() {
        let p = Process::Let(
            Pattern::bind("y"),
            Term::var("x"),
            Process::Out(Term::Name("c".into()), Term::var("y"), Process::Nil.boxed()).boxed(),
            Some(Process::Out(Term::Name("c".into()), Term::var("y"), Process::Nil.boxed()).boxed()),
        );
        assert_eq!(free_names(&p), set(&["c", "x", "y"]));
    }

    #[test]
    fn get_eq_terms_are_free() {
        let p = Process::Get(
            "T".into(),
            vec![Pattern::Eq(Term::var("k")), Pattern::bind("v")],
            Process::Out(Term::Name("c".into()), Term::var("v"), Process::Nil.boxed()).boxed(),
            None,
        );
        assert_eq!(free_names(&p), set(&["c", "k"]));
    }

    #[test]
    fn subst_respects_shadowing() {
        let p = Process::In(
            Term::Name("c".into()),
            Pattern::bind("x"),
            Process::Out(Term::Name("c".into()), Term::var("x"), Process::Nil.boxed()).boxed(),
        );
        let map = BTreeMap::from([("x".to_string(), Term::Const("k".into()))]);
        assert_eq!(p.subst(&map), p);
    }
}
