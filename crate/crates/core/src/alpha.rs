//! Alpha-equivalence up to renaming of bound identifiers and of synthesized
//! monitor channels (`mC_*`).

use std::collections::BTreeMap;

use crate::ast::*;

pub const SYNTH_CHANNEL_PREFIX: &str = "mC_";

#[derive(Clone, Default)]
struct Env {
    left: BTreeMap<Ident, usize>,
    right: BTreeMap<Ident, usize>,
    next: usize,
}

impl Env {
    fn bind(&self, a: &[Ident], b: &[Ident]) -> Option<Env> {
        if a.len() != b.len() {
            return None;
        }
        let mut e = self.clone();
        for (x, y) in a.iter().zip(b) {
            e.left.insert(x.clone(), e.next);
            e.right.insert(y.clone(), e.next);
            e.next += 1;
        }
        Some(e)
    }
}

#[derive(Default)]
struct Channels {
    fwd: BTreeMap<Ident, Ident>,
    back: BTreeMap<Ident, Ident>,
}

impl Channels {
    fn same(&mut self, a: &str, b: &str) -> bool {
        match (self.fwd.get(a), self.back.get(b)) {
            (Some(x), Some(y)) => x == b && y == a,
            (None, None) => {
                self.fwd.insert(a.to_string(), b.to_string());
                self.back.insert(b.to_string(), a.to_string());
                true
            }
            _ => false,
        }
    }
}

fn is_synth(x: &str) -> bool {
    x.starts_with(SYNTH_CHANNEL_PREFIX)
}

/// Rewrites `=f(t1..tn)` into `f(=t1..=tn)` and `=(t1..)` into `(=t1..)`,
/// and drops type annotations.
pub fn normalize_pattern(p: &Pattern) -> Pattern {
    match p {
        Pattern::Bind(x, _) => Pattern::Bind(x.clone(), None),
        Pattern::Eq(Term::Ctor(f, args)) => {
            Pattern::Ctor(f.clone(), args.iter().map(|a| normalize_pattern(&Pattern::Eq(a.clone()))).collect())
        }
        Pattern::Eq(Term::Tuple(ts)) => {
            Pattern::Tuple(ts.iter().map(|a| normalize_pattern(&Pattern::Eq(a.clone()))).collect())
        }
        Pattern::Eq(t) => Pattern::Eq(t.clone()),
        Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(normalize_pattern).collect()),
        Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(normalize_pattern).collect()),
    }
}

struct Cmp {
    chans: Channels,
}

impl Cmp {
    fn ident(&mut self, a: &str, b: &str, env: &Env) -> bool {
        match (env.left.get(a), env.right.get(b)) {
            (Some(i), Some(j)) => i == j,
            (None, None) => {
                if is_synth(a) || is_synth(b) {
                    is_synth(a) && is_synth(b) && self.chans.same(a, b)
                } else {
                    a == b
                }
            }
            _ => false,
        }
    }

    fn term(&mut self, a: &Term, b: &Term, env: &Env) -> bool {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) | (Term::Name(x), Term::Name(y)) | (Term::Const(x), Term::Const(y)) => {
                self.ident(x, y, env)
            }
            (Term::Ctor(f, xs), Term::Ctor(g, ys)) => f == g && self.terms(xs, ys, env),
            (Term::Tuple(xs), Term::Tuple(ys)) => self.terms(xs, ys, env),
            _ => false,
        }
    }

    fn terms(&mut self, xs: &[Term], ys: &[Term], env: &Env) -> bool {
        xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.term(x, y, env))
    }

    /// Compares patterns structurally; binders are collected for the caller.
    fn pattern(&mut self, a: &Pattern, b: &Pattern, env: &Env, la: &mut Vec<Ident>, lb: &mut Vec<Ident>) -> bool {
        match (a, b) {
            (Pattern::Bind(x, _), Pattern::Bind(y, _)) => {
                la.push(x.clone());
                lb.push(y.clone());
                true
            }
            (Pattern::Eq(s), Pattern::Eq(t)) => self.term(s, t, env),
            (Pattern::Ctor(f, ps), Pattern::Ctor(g, qs)) => {
                f == g && ps.len() == qs.len() && ps.iter().zip(qs).all(|(p, q)| self.pattern(p, q, env, la, lb))
            }
            (Pattern::Tuple(ps), Pattern::Tuple(qs)) => {
                ps.len() == qs.len() && ps.iter().zip(qs).all(|(p, q)| self.pattern(p, q, env, la, lb))
            }
            _ => false,
        }
    }

    fn patterns_bind(&mut self, a: &[Pattern], b: &[Pattern], env: &Env) -> Option<Env> {
        if a.len() != b.len() {
            return None;
        }
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        for (p, q) in a.iter().zip(b) {
            let (p, q) = (normalize_pattern(p), normalize_pattern(q));
            if !self.pattern(&p, &q, env, &mut la, &mut lb) {
                return None;
            }
        }
        env.bind(&la, &lb)
    }

    fn opt(&mut self, a: &Option<Box<Process>>, b: &Option<Box<Process>>, env: &Env) -> bool {
        match (a, b) {
            (None, None) => true,
            (Some(x), Some(y)) => self.process(x, y, env),
            _ => false,
        }
    }

    fn process(&mut self, a: &Process, b: &Process, env: &Env) -> bool {
        use Process::*;
        match (a, b) {
            (Nil, Nil) => true,
            (Par(a1, a2), Par(b1, b2)) => self.process(a1, b1, env) && self.process(a2, b2, env),
            (Repl(x), Repl(y)) => self.process(x, y, env),
            (New(x, _, p), New(y, _, q)) => {
                let e = env.bind(std::slice::from_ref(x), std::slice::from_ref(y)).unwrap();
                self.process(p, q, &e)
            }
            (In(c, pa, p), In(d, pb, q)) => {
                if !self.term(c, d, env) {
                    return false;
                }
                match self.patterns_bind(std::slice::from_ref(pa), std::slice::from_ref(pb), env) {
                    Some(e) => self.process(p, q, &e),
                    None => false,
                }
            }
            (Out(c, s, p), Out(d, t, q)) => self.term(c, d, env) && self.term(s, t, env) && self.process(p, q, env),
            (Let(pa, s, p, e1), Let(pb, t, q, e2)) => {
                if !self.term(s, t, env) {
                    return false;
                }
                match self.patterns_bind(std::slice::from_ref(pa), std::slice::from_ref(pb), env) {
                    Some(e) => self.process(p, q, &e) && self.opt(e1, e2, env),
                    None => false,
                }
            }
            (Insert(t1, xs, p), Insert(t2, ys, q)) => t1 == t2 && self.terms(xs, ys, env) && self.process(p, q, env),
            (Get(t1, pa, p, e1), Get(t2, pb, q, e2)) => {
                if t1 != t2 {
                    return false;
                }
                match self.patterns_bind(pa, pb, env) {
                    Some(e) => self.process(p, q, &e) && self.opt(e1, e2, env),
                    None => false,
                }
            }
            (Event(x, xs, p), Event(y, ys, q)) => x == y && self.terms(xs, ys, env) && self.process(p, q, env),
            (If(a1, a2, p, e1), If(b1, b2, q, e2)) => {
                self.term(a1, b1, env) && self.term(a2, b2, env) && self.process(p, q, env) && self.opt(e1, e2, env)
            }
            (Call(x, xs), Call(y, ys)) => x == y && self.terms(xs, ys, env),
            _ => false,
        }
    }
}

pub fn alpha_equiv(a: &Process, b: &Process) -> bool {
    Cmp { chans: Channels::default() }.process(a, b, &Env::default())
}

/// Alpha-equivalence of two participant definitions, binding their parameters positionally.
pub fn alpha_equiv_participant(a: &Participant, b: &Participant) -> bool {
    let la: Vec<Ident> = a.params.iter().map(|(x, _)| x.clone()).collect();
    let lb: Vec<Ident> = b.params.iter().map(|(x, _)| x.clone()).collect();
    match Env::default().bind(&la, &lb) {
        Some(env) => Cmp { chans: Channels::default() }.process(&a.body, &b.body, &env),
        None => false,
    }
}

/// First point where two processes differ, for test diagnostics.
pub fn first_difference(a: &Process, b: &Process) -> Option<(String, String)> {
    if alpha_equiv(a, b) {
        return None;
    }
    let head = |p: &Process| crate::pretty::pretty_print(p).lines().next().unwrap_or("").to_string();
    if std::mem::discriminant(a) == std::mem::discriminant(b) && head(a) == head(b) {
        for (x, y) in children(a).into_iter().zip(children(b)) {
            if let Some(d) = first_difference(x, y) {
                return Some(d);
            }
        }
    }
    Some((head(a), head(b)))
}

fn children(p: &Process) -> Vec<&Process> {
    match p {
        Process::Par(a, b) => vec![a, b],
        Process::Let(_, _, q, e) | Process::Get(_, _, q, e) | Process::If(_, _, q, e) => {
            let mut v = vec![q.as_ref()];
            v.extend(e.as_deref());
            v
        }
        other => other.continuation().into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(c: &str, t: Term) -> Process {
        Process::Out(Term::Name(c.into()), t, Process::Nil.boxed())
    }

    #[test]
    fn nil_equiv() {
        assert!(alpha_equiv(&Process::Nil, &Process::Nil));
    }

    #[test]
    fn bound_renaming() {
        let a = Process::New("x".into(), "T".into(), out("c", Term::var("x")).boxed());
        let b = Process::New("y".into(), "T".into(), out("c", Term::var("y")).boxed());
        assert!(alpha_equiv(&a, &b));
    }

    #[test]
    fn free_names_must_match() {
        assert!(!alpha_equiv(&out("c", Term::var("x")), &out("c", Term::var("y"))));
        assert!(!alpha_equiv(&out("c", Term::Name("x".into())), &out("d", Term::Name("x".into()))));
    }

    #[test]
    fn synthesized_channels_rename_consistently() {
        let a = Process::Out(
            Term::Name("mC_1_out".into()),
            Term::Name("k".into()),
            out("mC_1_out", Term::Name("k".into())).boxed(),
        );
        let b = Process::Out(
            Term::Name("mC_A_out".into()),
            Term::Name("k".into()),
            out("mC_A_out", Term::Name("k".into())).boxed(),
        );
        let c = Process::Out(
            Term::Name("mC_A_out".into()),
            Term::Name("k".into()),
            out("mC_B_out", Term::Name("k".into())).boxed(),
        );
        assert!(alpha_equiv(&a, &b));
        assert!(!alpha_equiv(&a, &c));
    }

    #[test]
    fn eq_ctor_matches_ctor_of_eqs() {
        let a = Process::Let(
            Pattern::Eq(Term::ctor("httpOk", vec![Term::ctor("success", vec![])])),
            Term::var("r"),
            Process::Nil.boxed(),
            None,
        );
        let b = Process::Let(
            Pattern::Ctor("httpOk".into(), vec![Pattern::Ctor("success".into(), vec![])]),
            Term::var("r"),
            Process::Nil.boxed(),
            None,
        );
        let wrap = |p: Process| Process::In(Term::Name("c".into()), Pattern::bind("r"), p.boxed());
        assert!(alpha_equiv(&wrap(a), &wrap(b)));
    }

    #[test]
    fn binder_scope_is_respected() {
        // in(c, x); out(c, x)  vs  in(c, y); out(c, x) with x free
        let a = Process::In(Term::Name("c".into()), Pattern::bind("x"), out("c", Term::var("x")).boxed());
        let b = Process::In(Term::Name("c".into()), Pattern::bind("y"), out("c", Term::var("x")).boxed());
        assert!(!alpha_equiv(&a, &b));
    }
}
