//! Service-worker specific passes: branch observability, UA check
//! extraction and merging of per-branch fetch handlers.

use std::collections::{BTreeMap, BTreeSet};

use super::engine::{uri_path, REQUEST, RESPONSE};
use super::TransformError;
use crate::ast::*;
use crate::pretty;

/// Splits a participant body into its leading definitions and the parallel
/// branches below them.
pub(crate) fn split_branches(p: &Process) -> (Vec<(Pattern, Term)>, Vec<Process>) {
    let mut pre = Vec::new();
    let mut cur = p;
    while let Process::Let(pat, t, q, None) = cur {
        pre.push((pat.clone(), t.clone()));
        cur = q;
    }
    let mut branches = Vec::new();
    fn leaves(p: &Process, out: &mut Vec<Process>) {
        match p {
            Process::Par(a, b) => {
                leaves(a, out);
                leaves(b, out);
            }
            other => out.push(other.clone()),
        }
    }
    leaves(cur, &mut branches);
    (pre, branches)
}

pub(crate) fn rebuild(pre: &[(Pattern, Term)], branches: Vec<Process>) -> Process {
    let body = branches.into_iter().reduce(|a, b| Process::Par(a.boxed(), b.boxed())).unwrap_or(Process::Nil);
    pre.iter().rev().fold(body, |acc, (p, t)| Process::Let(p.clone(), t.clone(), acc.boxed(), None))
}

/// Path constructor a branch dispatches on: the first uri pattern applied
/// to the request uri bound by its initial input.
pub(crate) fn branch_path(branch: &Process) -> Option<Ident> {
    let Process::In(c, Pattern::Tuple(slots), q) = branch else {
        return None;
    };
    if !matches!(c, Term::Name(n) if n == REQUEST) {
        return None;
    }
    let Some(Pattern::Bind(u, _)) = slots.first() else {
        return None;
    };
    let mut cur = q.as_ref();
    loop {
        match cur {
            Process::Let(pat, Term::Var(v), q, _) => {
                if v == u {
                    return uri_path(pat);
                }
                cur = q;
            }
            Process::Let(_, _, q, _) | Process::New(_, _, q) => cur = q,
            _ => return None,
        }
    }
}

/// Constructors a browser can observe for `participant`: anything the UA
/// mentions plus anything other participants send back to the browser.
pub(crate) fn observable_ctors(spec: &SystemSpec, participant: &str, ua: &str) -> BTreeSet<Ident> {
    let mut out = BTreeSet::new();
    for p in &spec.participants {
        if p.name == participant {
            continue;
        }
        let whole = p.name == ua;
        let mut defs = BTreeMap::new();
        p.body.visit(&mut |n| {
            if let Process::Let(Pattern::Bind(x, _), t, _, _) = n {
                defs.insert(x.clone(), t.clone());
            }
        });
        p.body.visit(&mut |n| match n {
            Process::Out(Term::Name(c), t, _) if !whole && c == RESPONSE => unfold(t, &defs, 8).ctors(&mut out),
            Process::Out(c, t, _) if whole => {
                c.ctors(&mut out);
                t.ctors(&mut out);
            }
            Process::In(_, pat, _) | Process::Let(pat, _, _, _) if whole => pat.ctors(&mut out),
            Process::Let(_, t, _, _) if whole => t.ctors(&mut out),
            _ => {}
        });
    }
    out
}

fn unfold(t: &Term, defs: &BTreeMap<Ident, Term>, depth: usize) -> Term {
    if depth == 0 {
        return t.clone();
    }
    let once = t.subst(defs);
    if once == *t {
        once
    } else {
        unfold(&once, defs, depth - 1)
    }
}

/// First security check in a branch, skipping its selector match.
pub(crate) fn first_check(branch: &Process) -> Option<String> {
    let mut found = None;
    let mut seen_selector = false;
    branch.visit(&mut |n| {
        if found.is_some() {
            return;
        }
        match n {
            Process::Get(tb, ps, _, _) => {
                found = Some(format!("get {tb}({})", ps.iter().map(pretty::pattern).collect::<Vec<_>>().join(", ")))
            }
            Process::Insert(tb, a, _) => {
                found = Some(format!("insert {tb}({})", a.iter().map(pretty::term).collect::<Vec<_>>().join(", ")))
            }
            Process::If(a, b, _, _) => found = Some(format!("if {} = {}", pretty::term(a), pretty::term(b))),
            Process::Let(pat, t, _, _) if pat.has_eq() => {
                if !seen_selector && uri_path(pat).is_some() {
                    seen_selector = true;
                } else {
                    found = Some(format!("let {} = {}", pretty::pattern(pat), pretty::term(t)));
                }
            }
            _ => {}
        }
    });
    found
}

/// Checks the UA applies to responses, keyed by the path constructor of the
/// request they answer.
pub(crate) fn ua_response_checks(ua: &Process) -> BTreeMap<Ident, Pattern> {
    let mut deconstructed: BTreeMap<Ident, Ident> = BTreeMap::new();
    ua.visit(&mut |n| {
        if let Process::Let(pat, Term::Var(x), _, _) = n {
            if let Some(path) = uri_path(pat) {
                deconstructed.insert(x.clone(), path);
            }
        }
    });
    let mut out = BTreeMap::new();
    let mut last_path: Option<Ident> = None;
    ua.visit(&mut |n| match n {
        Process::Out(Term::Ctor(f, _), Term::Tuple(ts), _) if f == "browserRequest" => {
            last_path = match ts.first() {
                Some(Term::Ctor(u, args)) if u == "uri" && args.len() == 4 => match &args[2] {
                    Term::Ctor(p, a) if a.is_empty() => Some(p.clone()),
                    _ => None,
                },
                Some(Term::Var(x)) => deconstructed.get(x).cloned(),
                _ => None,
            };
        }
        Process::In(Term::Ctor(f, _), Pattern::Tuple(ps), _) if f == "browserResponse" => {
            if let (Some(path), Some(resp)) = (last_path.take(), ps.get(1)) {
                out.entry(path).or_insert_with(|| resp.clone());
            }
        }
        _ => {}
    });
    out
}

/// Merges the per-branch fetch handlers into one input followed by a
/// selector chain, hoisting the checks every branch starts with.
pub(crate) fn merge_handlers(branches: Vec<Process>) -> Result<Process, TransformError> {
    if branches.len() <= 1 {
        return Ok(branches.into_iter().next().unwrap_or(Process::Nil));
    }
    let mut chan = None;
    let mut head: Option<Pattern> = None;
    let mut bodies = Vec::new();
    for b in branches {
        let Process::In(c, pat, q) = b else {
            return Err(TransformError::Unsupported("service-worker branch does not start with a fetch".into()));
        };
        match &head {
            None => {
                head = Some(pat.clone());
                chan = Some(c);
                bodies.push(*q);
            }
            Some(h) => {
                let (from, to) = (pat.binders(), h.binders());
                if from.len() != to.len() {
                    return Err(TransformError::Unsupported("fetch patterns differ between branches".into()));
                }
                let map: BTreeMap<Ident, Term> = from.into_iter().zip(to).map(|(a, b)| (a, Term::Var(b))).collect();
                bodies.push(q.subst(&map));
            }
        }
    }
    let mut common = Vec::new();
    loop {
        let first = match bodies.first() {
            Some(Process::Let(p, t, _, None)) if p.binders().is_empty() => (p.clone(), t.clone()),
            _ => break,
        };
        let all = bodies.iter().all(|b| matches!(b, Process::Let(p, t, _, None) if *p == first.0 && *t == first.1));
        if !all {
            break;
        }
        bodies = bodies
            .into_iter()
            .map(|b| match b {
                Process::Let(_, _, q, None) => *q,
                _ => unreachable!(),
            })
            .collect();
        common.push(first);
    }
    let chain = bodies.into_iter().rev().try_fold(None::<Process>, |acc, b| {
        let (sel, t, rest) = selector(b)?;
        Ok::<_, TransformError>(Some(Process::Let(sel, t, rest.boxed(), acc.map(Process::boxed))))
    })?;
    let body = common
        .into_iter()
        .rev()
        .fold(chain.unwrap_or(Process::Nil), |acc, (p, t)| Process::Let(p, t, acc.boxed(), None));
    Ok(Process::In(chan.expect("at least two branches"), head.expect("at least two branches"), body.boxed()))
}

/// Leading selector matches of a branch, fused into one tuple match when
/// there are several.
fn selector(b: Process) -> Result<(Pattern, Term, Process), TransformError> {
    let mut sels = Vec::new();
    let mut cur = b;
    while let Process::Let(p, t, q, None) = cur {
        let is_uri = uri_path(&p).is_some();
        sels.push((p, t));
        cur = *q;
        if is_uri {
            break;
        }
    }
    match sels.len() {
        0 => Err(TransformError::Unsupported("service-worker branch has no selector".into())),
        1 => {
            let (p, t) = sels.pop().unwrap();
            Ok((p, t, cur))
        }
        _ => {
            let (ps, ts): (Vec<_>, Vec<_>) = sels.into_iter().unzip();
            Ok((Pattern::Tuple(ps), Term::Tuple(ts), cur))
        }
    }
}
