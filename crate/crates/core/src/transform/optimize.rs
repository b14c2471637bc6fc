//! Clean-up rewrites applied to synthesized monitors.

use std::collections::BTreeSet;

use crate::ast::*;

/// Removes unused definitions, moves definitions down to their first use and
/// fuses `let x = t in let p = x` when `x` is otherwise unused.
pub fn optimize(p: &Process, params: &BTreeSet<Ident>) -> Process {
    let rec = |q: &Process| optimize(q, params).boxed();
    match p {
        Process::Let(Pattern::Bind(x, ty), t, q, None) => {
            let q = optimize(q, params);
            if !free_vars(&q).contains(x) {
                return q;
            }
            if let Process::Let(inner, Term::Var(y), r, e) = &q {
                if y == x && !free_vars(r).contains(x) && !e.as_ref().is_some_and(|e| free_vars(e).contains(x)) {
                    return Process::Let(inner.clone(), t.clone(), r.clone(), e.clone());
                }
            }
            if t.vars().is_subset(params) {
                return Process::Let(Pattern::Bind(x.clone(), ty.clone()), t.clone(), q.boxed(), None);
            }
            sink(x, ty, t, q)
        }
        Process::Nil => Process::Nil,
        Process::Par(a, b) => Process::Par(rec(a), rec(b)),
        Process::Repl(a) => Process::Repl(rec(a)),
        Process::New(x, ty, q) => Process::New(x.clone(), ty.clone(), rec(q)),
        Process::In(c, pat, q) => Process::In(c.clone(), pat.clone(), rec(q)),
        Process::Out(c, t, q) => Process::Out(c.clone(), t.clone(), rec(q)),
        Process::Let(pat, t, q, e) => Process::Let(pat.clone(), t.clone(), rec(q), e.as_ref().map(|e| rec(e))),
        Process::Insert(tb, a, q) => Process::Insert(tb.clone(), a.clone(), rec(q)),
        Process::Get(tb, ps, q, e) => Process::Get(tb.clone(), ps.clone(), rec(q), e.as_ref().map(|e| rec(e))),
        Process::Event(ev, a, q) => Process::Event(ev.clone(), a.clone(), rec(q)),
        Process::If(a, b, q, e) => Process::If(a.clone(), b.clone(), rec(q), e.as_ref().map(|e| rec(e))),
        Process::Call(..) => p.clone(),
    }
}

/// Pushes `let x = t` below the leading nodes of `q` that neither use `x`
/// nor rebind `x` or a variable of `t`.
fn sink(x: &Ident, ty: &Option<Ident>, t: &Term, q: Process) -> Process {
    let place = |q: Process| Process::Let(Pattern::Bind(x.clone(), ty.clone()), t.clone(), q.boxed(), None);
    let mut blocked: BTreeSet<Ident> = t.vars();
    blocked.insert(x.clone());
    let passable = match &q {
        Process::In(c, pat, _) => !uses(x, &[c]) && !pat.eq_vars().contains(x) && disjoint(&pat.binders(), &blocked),
        Process::Out(c, m, _) => !uses(x, &[c, m]),
        Process::Insert(_, a, _) | Process::Event(_, a, _) => !uses(x, &a.iter().collect::<Vec<_>>()),
        Process::Let(pat, m, _, None) => {
            !uses(x, &[m]) && !pat.eq_vars().contains(x) && disjoint(&pat.binders(), &blocked)
        }
        Process::Get(_, ps, _, None) => {
            ps.iter().all(|p| !p.eq_vars().contains(x))
                && disjoint(&ps.iter().flat_map(Pattern::binders).collect::<Vec<_>>(), &blocked)
        }
        Process::If(a, b, _, None) => !uses(x, &[a, b]),
        Process::New(y, _, _) => !blocked.contains(y),
        _ => false,
    };
    if !passable {
        return place(q);
    }
    let down = |r: &Process| sink(x, ty, t, r.clone()).boxed();
    match &q {
        Process::In(c, pat, r) => Process::In(c.clone(), pat.clone(), down(r)),
        Process::Out(c, m, r) => Process::Out(c.clone(), m.clone(), down(r)),
        Process::Insert(tb, a, r) => Process::Insert(tb.clone(), a.clone(), down(r)),
        Process::Event(ev, a, r) => Process::Event(ev.clone(), a.clone(), down(r)),
        Process::Let(pat, m, r, None) => Process::Let(pat.clone(), m.clone(), down(r), None),
        Process::Get(tb, ps, r, None) => Process::Get(tb.clone(), ps.clone(), down(r), None),
        Process::If(a, b, r, None) => Process::If(a.clone(), b.clone(), down(r), None),
        Process::New(y, yt, r) => Process::New(y.clone(), yt.clone(), down(r)),
        _ => unreachable!("checked passable above"),
    }
}

fn uses(x: &Ident, ts: &[&Term]) -> bool {
    ts.iter().any(|t| t.vars().contains(x))
}

fn disjoint(xs: &[Ident], set: &BTreeSet<Ident>) -> bool {
    xs.iter().all(|x| !set.contains(x))
}

/// Free variables of a process (names and constants excluded).
pub fn free_vars(p: &Process) -> BTreeSet<Ident> {
    free_names(p).into_iter().filter(|x| mentions_var(p, x)).collect()
}

fn mentions_var(p: &Process, x: &Ident) -> bool {
    let mut found = false;
    p.visit(&mut |n| {
        let ts: Vec<&Term> = match n {
            Process::In(c, pat, _) => {
                if pat.eq_vars().contains(x) {
                    found = true;
                }
                vec![c]
            }
            Process::Out(c, t, _) => vec![c, t],
            Process::Let(pat, t, _, _) => {
                if pat.eq_vars().contains(x) {
                    found = true;
                }
                vec![t]
            }
            Process::Insert(_, a, _) | Process::Event(_, a, _) | Process::Call(_, a) => a.iter().collect(),
            Process::Get(_, ps, _, _) => {
                if ps.iter().any(|p| p.eq_vars().contains(x)) {
                    found = true;
                }
                vec![]
            }
            Process::If(a, b, _, _) => vec![a, b],
            _ => vec![],
        };
        if ts.iter().any(|t| t.vars().contains(x)) {
            found = true;
        }
    });
    found
}
