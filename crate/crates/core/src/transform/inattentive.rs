use std::collections::BTreeSet;

use crate::ast::*;

/// The participant with its security checks stripped: table operations and
/// conditionals are removed and equality matches on received data are
/// relaxed, except the selector matches right after an input.
pub fn make_inattentive(spec: &SystemSpec, p: &Process) -> Process {
    Strip { spec, counter: 0, used: collect_idents(p) }.go(p, &BTreeSet::new())
}

fn collect_idents(p: &Process) -> BTreeSet<Ident> {
    let mut used = BTreeSet::new();
    p.visit(&mut |n| match n {
        Process::In(_, pat, _) | Process::Let(pat, _, _, _) => used.extend(pat.binders()),
        Process::Get(_, ps, _, _) => used.extend(ps.iter().flat_map(Pattern::binders)),
        Process::New(x, _, _) => {
            used.insert(x.clone());
        }
        _ => {}
    });
    used
}

struct Strip<'a> {
    spec: &'a SystemSpec,
    counter: usize,
    used: BTreeSet<Ident>,
}

impl Strip<'_> {
    fn fresh(&mut self) -> Ident {
        loop {
            self.counter += 1;
            let x = format!("ia_{}", self.counter);
            if self.used.insert(x.clone()) {
                return x;
            }
        }
    }

    fn relax(&mut self, p: &Pattern) -> Pattern {
        match p {
            Pattern::Eq(_) => Pattern::Bind(self.fresh(), None),
            Pattern::Bind(..) => p.clone(),
            Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(|q| self.relax(q)).collect()),
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|q| self.relax(q)).collect()),
        }
    }

    /// `selectors` holds the variables bound by the input this node directly follows.
    fn go(&mut self, p: &Process, selectors: &BTreeSet<Ident>) -> Process {
        let none = BTreeSet::new();
        match p {
            Process::Nil | Process::Call(..) => p.clone(),
            Process::Par(a, b) => Process::Par(self.go(a, &none).boxed(), self.go(b, &none).boxed()),
            Process::Repl(a) => Process::Repl(self.go(a, &none).boxed()),
            Process::New(x, t, q) => Process::New(x.clone(), t.clone(), self.go(q, &none).boxed()),
            Process::In(c, pat, q) => {
                let bound = pat.binders().into_iter().collect();
                Process::In(c.clone(), pat.clone(), self.go(q, &bound).boxed())
            }
            Process::Out(c, t, q) => Process::Out(c.clone(), t.clone(), self.go(q, &none).boxed()),
            Process::Event(ev, a, q) => Process::Event(ev.clone(), a.clone(), self.go(q, &none).boxed()),
            Process::Insert(_, _, q) => self.go(q, &none),
            Process::If(_, _, q, _) => self.go(q, &none),
            Process::Get(tb, pats, q, _) => {
                let columns = self.spec.table(tb).map(|t| t.columns.clone()).unwrap_or_default();
                let mut binders = Vec::new();
                for (i, pat) in pats.iter().enumerate() {
                    let col = columns.get(i).cloned().unwrap_or_else(|| "bitstring".into());
                    for (x, ty) in pat.typed_binders() {
                        binders.push((x, ty.unwrap_or_else(|| col.clone())));
                    }
                }
                let body = self.go(q, &none);
                binders.into_iter().rev().fold(body, |acc, (x, ty)| Process::New(x, ty, acc.boxed()))
            }
            Process::Let(pat, t, q, e) => {
                let is_selector =
                    matches!(t, Term::Var(v) if selectors.contains(v)) && !matches!(pat, Pattern::Bind(..));
                if is_selector {
                    let e = e.as_ref().map(|e| self.go(e, selectors).boxed());
                    return Process::Let(pat.clone(), t.clone(), self.go(q, selectors).boxed(), e);
                }
                if pat.binders().is_empty() {
                    return self.go(q, &none);
                }
                let relaxed = self.relax(pat);
                let e = if relaxed.is_irrefutable() { None } else { e.as_ref().map(|e| self.go(e, &none).boxed()) };
                Process::Let(relaxed, t.clone(), self.go(q, &none).boxed(), e)
            }
        }
    }
}
