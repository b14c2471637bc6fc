//! Identifier resolution and well-formedness checks.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;

const BUILTIN_TYPES: &[&str] = &["bitstring", "channel", "bool"];

struct Ctx<'a> {
    spec: &'a SystemSpec,
    consts: BTreeSet<&'a str>,
    names: BTreeSet<&'a str>,
    ctors: BTreeMap<&'a str, &'a CtorDecl>,
    participants: BTreeMap<String, usize>,
    problems: Vec<String>,
    owner: String,
}

impl<'a> Ctx<'a> {
    fn new(spec: &'a SystemSpec) -> Self {
        Ctx {
            spec,
            consts: spec.constants.iter().map(|(c, _)| c.as_str()).collect(),
            names: spec
                .channels
                .iter()
                .map(String::as_str)
                .chain(spec.free_names.iter().map(|(n, _)| n.as_str()))
                .collect(),
            ctors: spec.constructors.iter().map(|c| (c.name.as_str(), c)).collect(),
            participants: spec.participants.iter().map(|p| (p.name.clone(), p.params.len())).collect(),
            problems: Vec::new(),
            owner: String::new(),
        }
    }

    fn problem(&mut self, msg: String) {
        let m = if self.owner.is_empty() { msg } else { format!("in `{}`: {msg}", self.owner) };
        if !self.problems.contains(&m) {
            self.problems.push(m);
        }
    }

    fn check_type(&mut self, ty: &str) {
        if !self.spec.types.is_empty() && !BUILTIN_TYPES.contains(&ty) && !self.spec.types.iter().any(|t| t == ty) {
            self.problem(format!("undeclared type `{ty}`"));
        }
    }

    fn term(&mut self, t: &Term, scope: &BTreeSet<Ident>) -> Term {
        match t {
            Term::Name(x) | Term::Var(x) | Term::Const(x) => {
                if scope.contains(x) {
                    Term::Var(x.clone())
                } else if self.consts.contains(x.as_str()) {
                    Term::Const(x.clone())
                } else if self.names.contains(x.as_str()) {
                    Term::Name(x.clone())
                } else {
                    self.problem(format!("unbound variable `{x}`"));
                    Term::Var(x.clone())
                }
            }
            Term::Ctor(f, args) => {
                let args: Vec<Term> = args.iter().map(|a| self.term(a, scope)).collect();
                match self.ctors.get(f.as_str()) {
                    Some(d) if d.args.len() != args.len() => self.problem(format!(
                        "constructor `{f}` expects {} arguments, got {}",
                        d.args.len(),
                        args.len()
                    )),
                    Some(_) => {}
                    None => self.problem(format!("undeclared constructor `{f}`")),
                }
                Term::Ctor(f.clone(), args)
            }
            Term::Tuple(ts) => Term::Tuple(ts.iter().map(|a| self.term(a, scope)).collect()),
        }
    }

    fn channel(&mut self, t: &Term, scope: &BTreeSet<Ident>) -> Term {
        if let Term::Name(x) = t {
            if !scope.contains(x) && !self.spec.is_channel(x) {
                self.problem(format!("undeclared channel `{x}`"));
                return Term::Name(x.clone());
            }
        }
        let r = self.term(t, scope);
        if let Term::Ctor(f, _) = &r {
            if let Some(d) = self.ctors.get(f.as_str()) {
                if d.ret != "channel" {
                    self.problem(format!("`{f}` does not build a channel"));
                }
            }
        }
        r
    }

    fn pattern(&mut self, p: &Pattern, scope: &BTreeSet<Ident>, bound: &mut BTreeSet<Ident>) -> Pattern {
        match p {
            Pattern::Bind(x, ty) => {
                if let Some(ty) = ty {
                    self.check_type(ty);
                }
                if !bound.insert(x.clone()) {
                    self.problem(format!("`{x}` bound twice in one pattern"));
                }
                p.clone()
            }
            Pattern::Eq(t) => Pattern::Eq(self.term(t, scope)),
            Pattern::Ctor(f, ps) => {
                match self.ctors.get(f.as_str()) {
                    Some(d) if d.args.len() != ps.len() => {
                        self.problem(format!("constructor `{f}` expects {} arguments, got {}", d.args.len(), ps.len()))
                    }
                    Some(_) => {}
                    None => self.problem(format!("undeclared constructor `{f}`")),
                }
                Pattern::Ctor(f.clone(), ps.iter().map(|q| self.pattern(q, scope, bound)).collect())
            }
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|q| self.pattern(q, scope, bound)).collect()),
        }
    }

    fn table(&mut self, tb: &str, n: usize) {
        match self.spec.table(tb) {
            Some(d) if d.columns.len() != n => {
                self.problem(format!("table `{tb}` has {} columns, used with {n}", d.columns.len()))
            }
            Some(_) => {}
            None => self.problem(format!("undeclared table `{tb}`")),
        }
    }

    fn event(&mut self, ev: &str, n: usize) {
        match self.spec.events.iter().find(|e| e.name == ev) {
            Some(d) if d.args.len() != n => {
                self.problem(format!("event `{ev}` has {} arguments, used with {n}", d.args.len()))
            }
            Some(_) => {}
            None => self.problem(format!("undeclared event `{ev}`")),
        }
    }

    fn process(&mut self, p: &Process, scope: &BTreeSet<Ident>) -> Process {
        let with = |scope: &BTreeSet<Ident>, names: &BTreeSet<Ident>| {
            let mut s = scope.clone();
            s.extend(names.iter().cloned());
            s
        };
        match p {
            Process::Nil => Process::Nil,
            Process::Par(a, b) => Process::Par(self.process(a, scope).boxed(), self.process(b, scope).boxed()),
            Process::Repl(a) => Process::Repl(self.process(a, scope).boxed()),
            Process::New(x, ty, q) => {
                self.check_type(ty);
                let s = with(scope, &BTreeSet::from([x.clone()]));
                Process::New(x.clone(), ty.clone(), self.process(q, &s).boxed())
            }
            Process::In(c, pat, q) => {
                let c = self.channel(c, scope);
                let mut bound = BTreeSet::new();
                let pat = self.pattern(pat, scope, &mut bound);
                Process::In(c, pat, self.process(q, &with(scope, &bound)).boxed())
            }
            Process::Out(c, t, q) => {
                let c = self.channel(c, scope);
                let t = self.term(t, scope);
                Process::Out(c, t, self.process(q, scope).boxed())
            }
            Process::Let(pat, t, q, e) => {
                let t = self.term(t, scope);
                let mut bound = BTreeSet::new();
                let pat = self.pattern(pat, scope, &mut bound);
                let q = self.process(q, &with(scope, &bound));
                let e = e.as_ref().map(|e| self.process(e, scope).boxed());
                Process::Let(pat, t, q.boxed(), e)
            }
            Process::Insert(tb, args, q) => {
                self.table(tb, args.len());
                let args = args.iter().map(|a| self.term(a, scope)).collect();
                Process::Insert(tb.clone(), args, self.process(q, scope).boxed())
            }
            Process::Get(tb, pats, q, e) => {
                self.table(tb, pats.len());
                let mut bound = BTreeSet::new();
                let pats = pats.iter().map(|pt| self.pattern(pt, scope, &mut bound)).collect();
                let q = self.process(q, &with(scope, &bound));
                let e = e.as_ref().map(|e| self.process(e, scope).boxed());
                Process::Get(tb.clone(), pats, q.boxed(), e)
            }
            Process::Event(ev, args, q) => {
                self.event(ev, args.len());
                let args = args.iter().map(|a| self.term(a, scope)).collect();
                Process::Event(ev.clone(), args, self.process(q, scope).boxed())
            }
            Process::If(a, b, q, e) => {
                let a = self.term(a, scope);
                let b = self.term(b, scope);
                let q = self.process(q, scope);
                let e = e.as_ref().map(|e| self.process(e, scope).boxed());
                Process::If(a, b, q.boxed(), e)
            }
            Process::Call(name, args) => {
                match self.participants.get(name) {
                    Some(&n) if n != args.len() => {
                        self.problem(format!("`{name}` expects {n} arguments, got {}", args.len()))
                    }
                    Some(_) => {}
                    None => self.problem(format!("undefined process `{name}`")),
                }
                Process::Call(name.clone(), args.iter().map(|a| self.term(a, scope)).collect())
            }
        }
    }

    fn query_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(x) => Term::Var(x.clone()),
            Term::Name(x) | Term::Const(x) => {
                if self.consts.contains(x.as_str()) {
                    Term::Const(x.clone())
                } else if self.names.contains(x.as_str()) {
                    Term::Name(x.clone())
                } else {
                    Term::Var(x.clone())
                }
            }
            Term::Ctor(f, args) => Term::Ctor(f.clone(), args.iter().map(|a| self.query_term(a)).collect()),
            Term::Tuple(ts) => Term::Tuple(ts.iter().map(|a| self.query_term(a)).collect()),
        }
    }

    fn query(&self, q: &Query) -> Query {
        let atom = |a: &EventAtom| EventAtom {
            name: a.name.clone(),
            args: a.args.iter().map(|t| self.query_term(t)).collect(),
        };
        match q {
            Query::Correspondence { premise, conclusion } => {
                Query::Correspondence { premise: premise.iter().map(atom).collect(), conclusion: atom(conclusion) }
            }
            Query::Secrecy(t) => Query::Secrecy(self.query_term(t)),
        }
    }
}

pub(super) fn resolve_query(spec: &SystemSpec, q: Query) -> Query {
    Ctx::new(spec).query(&q)
}

pub(super) fn resolve_spec(spec: &mut SystemSpec) -> Result<(), Vec<String>> {
    let snapshot = spec.clone();
    let mut cx = Ctx::new(&snapshot);

    let mut seen = BTreeSet::new();
    for p in &snapshot.participants {
        if !seen.insert(p.name.clone()) {
            cx.problem(format!("participant `{}` defined twice", p.name));
        }
    }
    for (role, part) in &snapshot.roles {
        if snapshot.participant(part).is_none() {
            cx.problem(format!("role `{role}` refers to undefined participant `{part}`"));
        }
    }

    let mut participants = Vec::new();
    for p in &snapshot.participants {
        cx.owner = p.name.clone();
        for (_, ty) in &p.params {
            cx.check_type(ty);
        }
        let scope: BTreeSet<Ident> = p.params.iter().map(|(x, _)| x.clone()).collect();
        let body = cx.process(&p.body, &scope);
        participants.push(Participant { name: p.name.clone(), params: p.params.clone(), body });
    }
    cx.owner.clear();
    let main = snapshot.main.as_ref().map(|m| cx.process(m, &BTreeSet::new()));

    let mut queries = Vec::new();
    for q in &snapshot.queries {
        let q = cx.query(q);
        if let Query::Correspondence { premise, conclusion } = &q {
            let prem: BTreeSet<Ident> = premise.iter().flat_map(|a| a.args.iter().flat_map(Term::vars)).collect();
            for v in conclusion.args.iter().flat_map(Term::vars) {
                if !prem.contains(&v) {
                    cx.problem(format!("query conclusion variable `{v}` does not occur in the premise"));
                }
            }
            for a in premise.iter().chain([conclusion]) {
                cx.event(&a.name, a.args.len());
            }
        }
        queries.push(q);
    }

    if !cx.problems.is_empty() {
        return Err(cx.problems);
    }
    spec.participants = participants;
    spec.main = main;
    spec.queries = queries;
    Ok(())
}

pub(super) fn resolve_free_process(spec: &SystemSpec, p: Process) -> Result<Process, Vec<String>> {
    let mut cx = Ctx::new(spec);
    let out = cx.process(&p, &BTreeSet::new());
    if cx.problems.is_empty() {
        Ok(out)
    } else {
        Err(cx.problems)
    }
}

/// Checks an already resolved process: every variable bound, every symbol declared.
pub fn check_process(spec: &SystemSpec, params: &[(Ident, Ident)], p: &Process) -> Vec<String> {
    let mut cx = Ctx::new(spec);
    let scope = params.iter().map(|(x, _)| x.clone()).collect();
    let resolved = cx.process(p, &scope);
    if cx.problems.is_empty() && &resolved != p {
        cx.problems.push("identifier kinds differ from their declarations".into());
    }
    cx.problems
}
