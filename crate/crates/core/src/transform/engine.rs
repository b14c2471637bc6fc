//! Monitor synthesis from an ideal participant process.
//!
//! One engine serves both placements: in proxy mode it follows the
//! known/buffers/delayed bookkeeping directly; in service-worker mode the
//! same walk runs with the browser's view of the channels and values.

use std::collections::{BTreeMap, BTreeSet};

use super::TransformError;
use crate::alpha::SYNTH_CHANNEL_PREFIX;
use crate::ast::*;
use crate::pretty;

pub const REQUEST: &str = "httpServerRequest";
pub const RESPONSE: &str = "httpServerResponse";

#[derive(Clone, Debug, PartialEq)]
pub enum Delayed {
    Let(Pattern, Term),
    Insert(Ident, Vec<Term>),
    Get(Ident, Vec<Pattern>),
    Event(Ident, Vec<Term>),
}

impl Delayed {
    fn describe(&self) -> String {
        match self {
            Delayed::Let(p, t) => format!("let {} = {}", pretty::pattern(p), pretty::term(t)),
            Delayed::Insert(tb, a) => format!("insert {tb}({})", terms(a)),
            Delayed::Get(tb, ps) => {
                format!("get {tb}({})", ps.iter().map(pretty::pattern).collect::<Vec<_>>().join(", "))
            }
            Delayed::Event(e, a) => format!("event {e}({})", terms(a)),
        }
    }

    fn is_definition(&self) -> bool {
        matches!(self, Delayed::Let(Pattern::Bind(..), _))
    }
}

fn terms(ts: &[Term]) -> String {
    ts.iter().map(pretty::term).collect::<Vec<_>>().join(", ")
}

/// Synthesis bookkeeping at one program point.
#[derive(Clone, Debug, Default)]
pub struct MonitorState {
    pub known: BTreeSet<Ident>,
    pub buffers: Vec<(Term, Term)>,
    pub delayed: Vec<Delayed>,
    defs: BTreeMap<Ident, Term>,
    recon: BTreeMap<Ident, Term>,
    pending: Vec<(Pattern, Term)>,
    dispatch: BTreeSet<Ident>,
    subst: BTreeMap<Ident, Term>,
    cookies: BTreeSet<Ident>,
    hidden: BTreeSet<Ident>,
    back_vars: BTreeSet<Ident>,
    front_u: Option<Term>,
    path: Option<Ident>,
}

#[derive(Clone)]
enum Step {
    Let(Pattern, Term),
    Insert(Ident, Vec<Term>),
    Get(Ident, Vec<Pattern>),
    Event(Ident, Vec<Term>),
    In(Term, Pattern),
    Out(Term, Term),
}

fn build(steps: Vec<Step>, tail: Process) -> Process {
    steps.into_iter().rev().fold(tail, |acc, s| match s {
        Step::Let(p, t) => Process::Let(p, t, acc.boxed(), None),
        Step::Insert(tb, a) => Process::Insert(tb, a, acc.boxed()),
        Step::Get(tb, ps) => Process::Get(tb, ps, acc.boxed(), None),
        Step::Event(e, a) => Process::Event(e, a, acc.boxed()),
        Step::In(c, p) => Process::In(c, p, acc.boxed()),
        Step::Out(c, t) => Process::Out(c, t, acc.boxed()),
    })
}

/// Patterns, forwarded terms, pre- and post-input checks, and which slots were checked.
type ReceiveForm = (Vec<Pattern>, Vec<Term>, Vec<Step>, Vec<Step>, Vec<bool>);
pub fn monitor_table(tb: &str) -> Ident {
    format!("M{tb}")
}

pub(crate) enum Mode {
    Proxy,
    Worker { browser: Ident, ua_checks: BTreeMap<Ident, Pattern> },
}

pub(crate) struct Synth<'a> {
    spec: &'a SystemSpec,
    mode: Mode,
    used: BTreeSet<Ident>,
    counter: usize,
    channels: Vec<Ident>,
}

impl<'a> Synth<'a> {
    pub(crate) fn new(spec: &'a SystemSpec, p: &Participant, mode: Mode) -> Self {
        let mut used: BTreeSet<Ident> = p.params.iter().map(|(x, _)| x.clone()).collect();
        p.body.visit(&mut |n| match n {
            Process::New(x, _, _) => {
                used.insert(x.clone());
            }
            Process::In(_, pat, _) | Process::Let(pat, _, _, _) => used.extend(pat.binders()),
            Process::Get(_, ps, _, _) => used.extend(ps.iter().flat_map(Pattern::binders)),
            _ => {}
        });
        Synth { spec, mode, used, counter: 0, channels: Vec::new() }
    }

    fn fresh(&mut self, base: &str) -> Ident {
        if base != "cs" && self.used.insert(base.to_string()) {
            return base.to_string();
        }
        loop {
            self.counter += 1;
            let name = format!("{base}_{}", self.counter);
            if self.used.insert(name.clone()) {
                return name;
            }
        }
    }

    fn channel_index(&mut self, c: &str) -> usize {
        if let Some(i) = self.channels.iter().position(|x| x == c) {
            return i + 1;
        }
        self.channels.push(c.to_string());
        self.channels.len()
    }

    /// Monitor-to-participant relay for messages received on `c`.
    fn mch_out(&mut self, c: &Term) -> Result<Term, TransformError> {
        let name = channel_name(c)?;
        Ok(Term::Name(format!("{SYNTH_CHANNEL_PREFIX}{}_out", self.channel_index(&name))))
    }

    /// Participant-to-monitor relay for messages the participant sends on `c`.
    fn mch_in(&mut self, c: &Term) -> Result<Term, TransformError> {
        let name = channel_name(c)?;
        Ok(Term::Name(format!("{SYNTH_CHANNEL_PREFIX}{}_in", self.channel_index(&name))))
    }

    pub(crate) fn synth_channels(&self) -> Vec<(Ident, Ident, Ident)> {
        self.channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                (
                    c.clone(),
                    format!("{SYNTH_CHANNEL_PREFIX}{}_out", i + 1),
                    format!("{SYNTH_CHANNEL_PREFIX}{}_in", i + 1),
                )
            })
            .collect()
    }

    fn worker(&self) -> bool {
        matches!(self.mode, Mode::Worker { .. })
    }

    fn browser(&self) -> Term {
        match &self.mode {
            Mode::Worker { browser, .. } => Term::Var(browser.clone()),
            Mode::Proxy => unreachable!("browser handle requested in proxy mode"),
        }
    }

    fn bchan(&self, f: &str) -> Term {
        Term::ctor(f, vec![self.browser()])
    }

    pub(crate) fn initial_state(&self, p: &Participant) -> MonitorState {
        let mut st = MonitorState::default();
        match &self.mode {
            Mode::Proxy => st.known.extend(p.params.iter().map(|(x, _)| x.clone())),
            Mode::Worker { browser, .. } => {
                st.known.insert(browser.clone());
                for (x, _) in &p.params {
                    st.subst.insert(x.clone(), Term::Name(x.clone()));
                }
            }
        }
        st
    }

    fn sub(&self, st: &MonitorState, t: &Term) -> Term {
        let t = t.subst(&st.subst);
        if st.cookies.is_empty() || !self.worker() {
            return t;
        }
        let mut out = t;
        for hs in &st.cookies {
            out = out.replace(&Term::ctor("getCookie", vec![Term::Var(hs.clone())]), &self.browser());
        }
        out
    }

    fn sub_pat(&self, st: &MonitorState, p: &Pattern) -> Pattern {
        match p {
            Pattern::Bind(..) => p.clone(),
            Pattern::Eq(t) => Pattern::Eq(self.sub(st, t)),
            Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(|q| self.sub_pat(st, q)).collect()),
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|q| self.sub_pat(st, q)).collect()),
        }
    }

    fn is_known(&self, st: &MonitorState, t: &Term) -> bool {
        t.vars().is_subset(&st.known)
    }

    fn pattern_ready(&self, st: &MonitorState, p: &Pattern) -> bool {
        p.eq_vars().is_subset(&st.known)
    }

    fn hidden(&self, st: &MonitorState, t: &Term) -> bool {
        self.worker() && t.vars().iter().any(|v| st.hidden.contains(v))
    }

    fn hidden_pat(&self, st: &MonitorState, p: &Pattern) -> bool {
        self.worker() && p.eq_vars().iter().any(|v| st.hidden.contains(v))
    }

    fn made_privately(&self, t: &Term) -> bool {
        matches!(t, Term::Ctor(f, _) if self.spec.is_private_ctor(f))
    }

    pub(crate) fn go(&mut self, p: &Process, mut st: MonitorState) -> Result<Process, TransformError> {
        if !st.pending.is_empty() && !self.is_dispatch_let(p, &st) {
            let checks: Vec<Step> = std::mem::take(&mut st.pending).into_iter().map(|(p, t)| Step::Let(p, t)).collect();
            st.dispatch.clear();
            let rest = self.go(p, st)?;
            return Ok(build(checks, rest));
        }
        if !matches!(p, Process::Let(..)) {
            st.dispatch.clear();
        }
        match p {
            Process::Nil => self.finish(st),
            Process::Par(a, b) => {
                let left = self.go(a, st.clone())?;
                let right = self.go(b, st)?;
                Ok(Process::Par(left.boxed(), right.boxed()))
            }
            Process::Repl(a) => Ok(Process::Repl(self.go(a, st)?.boxed())),
            Process::New(_, _, q) => self.go(q, st),
            Process::Call(n, _) => Err(TransformError::Unsupported(format!("process call `{n}` inside a participant"))),
            Process::Let(pat, t, then, els) => self.let_(pat, t, then, els, st),
            Process::Insert(tb, args, q) => {
                let args: Vec<Term> = args.iter().map(|a| self.sub(&st, a)).collect();
                let d = Delayed::Insert(tb.clone(), args.clone());
                if args.iter().any(|a| self.hidden(&st, a)) {
                    return Err(TransformError::Unobservable(d.describe()));
                }
                if args.iter().all(|a| self.is_known(&st, a)) {
                    let rest = self.go(q, st)?;
                    Ok(Process::Insert(monitor_table(tb), args, rest.boxed()))
                } else {
                    st.delayed.push(d);
                    self.go(q, st)
                }
            }
            Process::Get(tb, pats, then, els) => {
                let pats: Vec<Pattern> = pats.iter().map(|q| self.sub_pat(&st, q)).collect();
                let d = Delayed::Get(tb.clone(), pats.clone());
                if pats.iter().any(|q| self.hidden_pat(&st, q)) {
                    return Err(TransformError::Unobservable(d.describe()));
                }
                if pats.iter().all(|q| self.pattern_ready(&st, q)) {
                    let els = match els {
                        Some(e) => Some(self.go(e, st.clone())?.boxed()),
                        None => None,
                    };
                    st.known.extend(pats.iter().flat_map(Pattern::binders));
                    let rest = self.go(then, st)?;
                    Ok(Process::Get(monitor_table(tb), pats, rest.boxed(), els))
                } else if els.is_some() {
                    Err(TransformError::Unsupported(format!("delayed {} with an else branch", d.describe())))
                } else {
                    st.delayed.push(d);
                    self.go(then, st)
                }
            }
            Process::Event(ev, args, q) => {
                if self.worker() {
                    return self.go(q, st);
                }
                let args: Vec<Term> = args.iter().map(|a| self.sub(&st, a)).collect();
                if args.iter().all(|a| self.is_known(&st, a)) {
                    let rest = self.go(q, st)?;
                    Ok(Process::Event(ev.clone(), args, rest.boxed()))
                } else {
                    st.delayed.push(Delayed::Event(ev.clone(), args));
                    self.go(q, st)
                }
            }
            Process::If(a, b, then, els) => {
                let (a, b) = (self.sub(&st, a), self.sub(&st, b));
                let d = Delayed::Let(Pattern::Eq(a.clone()), b.clone());
                if self.hidden(&st, &a) || self.hidden(&st, &b) {
                    return Err(TransformError::Unobservable(d.describe()));
                }
                if self.is_known(&st, &a) && self.is_known(&st, &b) {
                    let els = match els {
                        Some(e) => Some(self.go(e, st.clone())?.boxed()),
                        None => None,
                    };
                    let rest = self.go(then, st)?;
                    Ok(Process::If(a, b, rest.boxed(), els))
                } else if els.is_some() {
                    Err(TransformError::Unsupported(format!("delayed {} with an else branch", d.describe())))
                } else {
                    st.delayed.push(d);
                    self.go(then, st)
                }
            }
            Process::In(c, pat, q) => self.input(c, pat, q, st),
            Process::Out(c, t, q) => self.output(c, t, q, st),
        }
    }

    fn is_dispatch_let(&self, p: &Process, st: &MonitorState) -> bool {
        match p {
            Process::Let(pat, Term::Var(v), _, _) => {
                st.dispatch.contains(v) && !matches!(pat, Pattern::Bind(..)) && self.pattern_ready(st, pat)
            }
            _ => false,
        }
    }

    fn let_(
        &mut self,
        pat: &Pattern,
        t: &Term,
        then: &Process,
        els: &Option<Box<Process>>,
        mut st: MonitorState,
    ) -> Result<Process, TransformError> {
        let t = self.sub(&st, t);
        let pat = self.sub_pat(&st, pat);
        if self.made_privately(&t) {
            return self.go(then, st);
        }
        if self.worker() {
            if let Pattern::Bind(x, _) = &pat {
                if t == self.browser() {
                    st.subst.insert(x.clone(), t);
                    return self.go(then, st);
                }
                if self.hidden(&st, &t) {
                    st.hidden.insert(x.clone());
                    return self.go(then, st);
                }
            }
            if self.hidden(&st, &t) || self.hidden_pat(&st, &pat) {
                return Err(TransformError::Unobservable(Delayed::Let(pat, t).describe()));
            }
        }
        if self.is_known(&st, &t) && self.pattern_ready(&st, &pat) {
            let els = match els {
                Some(e) => {
                    let mut es = st.clone();
                    es.dispatch = st.dispatch.clone();
                    Some(self.go(e, es)?.boxed())
                }
                None => None,
            };
            st.known.extend(pat.binders());
            if let (Term::Var(v), false) = (&t, matches!(pat, Pattern::Bind(..))) {
                st.recon.insert(v.clone(), pat.to_term());
                if self.worker() && Some(&t) == st.front_u.as_ref() {
                    st.path = uri_path(&pat);
                }
            }
            let rest = self.go(then, st)?;
            return Ok(Process::Let(pat, t, rest.boxed(), els));
        }
        if els.is_some() {
            return Err(TransformError::Unsupported(format!(
                "delayed {} with an else branch",
                Delayed::Let(pat, t).describe()
            )));
        }
        if let Pattern::Bind(x, _) = &pat {
            st.defs.insert(x.clone(), t.clone());
        }
        st.delayed.push(Delayed::Let(pat, t));
        self.go(then, st)
    }

    /// Replaces every equality sub-pattern with a fresh binder and returns the
    /// checks that restore them.
    fn lift(&mut self, p: &Pattern, checks: &mut Vec<(Pattern, Term)>) -> Pattern {
        match p {
            Pattern::Eq(t) => {
                let cs = self.fresh("cs");
                checks.push((Pattern::Eq(t.clone()), Term::Var(cs.clone())));
                Pattern::Bind(cs, None)
            }
            Pattern::Bind(..) => p.clone(),
            Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(|q| self.lift(q, checks)).collect()),
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|q| self.lift(q, checks)).collect()),
        }
    }

    fn input(&mut self, c: &Term, pat: &Pattern, q: &Process, mut st: MonitorState) -> Result<Process, TransformError> {
        let pat = self.sub_pat(&st, pat);
        if self.worker() {
            return match channel_name(c)?.as_str() {
                REQUEST => self.worker_request(&pat, q, st),
                RESPONSE => self.worker_back_response(&pat, q, st),
                other => Err(TransformError::Unsupported(format!("service worker cannot observe channel `{other}`"))),
            };
        }
        let mut checks = Vec::new();
        let lifted = self.lift(&pat, &mut checks);
        st.known.extend(lifted.binders());
        let relay = self.mch_out(c)?;
        st.buffers.push((relay, lifted.to_term()));
        st.dispatch = lifted.binders().into_iter().collect();
        st.pending = checks;
        let rest = self.go(q, st)?;
        Ok(Process::In(c.clone(), lifted, rest.boxed()))
    }

    fn worker_request(&mut self, pat: &Pattern, q: &Process, mut st: MonitorState) -> Result<Process, TransformError> {
        let Pattern::Tuple(slots) = pat else {
            return Err(TransformError::Unsupported("request pattern is not a 4-tuple".into()));
        };
        let [pu, phs, pm, pcorr] = slots.as_slice() else {
            return Err(TransformError::Unsupported("request pattern is not a 4-tuple".into()));
        };
        let mut checks = Vec::new();
        let pu = self.lift(pu, &mut checks);
        let pm = self.lift(pm, &mut checks);
        for x in phs.binders() {
            st.cookies.insert(x.clone());
            st.hidden.insert(x);
        }
        st.hidden.extend(pcorr.binders());
        let (r, pg, aj) = (self.fresh("sw_ref"), self.fresh("sw_p"), self.fresh("sw_aj"));
        let swpat = Pattern::Tuple(vec![
            pu.clone(),
            pm.clone(),
            Pattern::Bind(r.clone(), Some("Uri".into())),
            Pattern::Bind(pg.clone(), Some("Page".into())),
            Pattern::Bind(aj.clone(), Some("Ajax".into())),
        ]);
        st.known.extend(swpat.binders());
        st.front_u = Some(pu.to_term());
        st.buffers.push((
            self.bchan("rawRequest"),
            Term::Tuple(vec![pu.to_term(), pm.to_term(), Term::Var(r), Term::Var(pg), Term::Var(aj)]),
        ));
        let checks: Vec<Step> = checks.into_iter().map(|(p, t)| Step::Let(p, t)).collect();
        let rest = self.go(q, st)?;
        Ok(Process::In(self.bchan("serviceWorkerFetch"), swpat, build(checks, rest).boxed()))
    }

    fn worker_back_response(
        &mut self,
        pat: &Pattern,
        q: &Process,
        mut st: MonitorState,
    ) -> Result<Process, TransformError> {
        fn eqs(p: &Pattern, out: &mut Vec<Term>) {
            match p {
                Pattern::Eq(t) => out.push(t.clone()),
                Pattern::Bind(..) => {}
                Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().for_each(|q| eqs(q, out)),
            }
        }
        let mut found = Vec::new();
        eqs(pat, &mut found);
        for t in found {
            if t.vars().is_empty() || !t.vars().is_subset(&st.back_vars) {
                return Err(TransformError::Unobservable(format!("back-channel response check ={}", pretty::term(&t))));
            }
        }
        st.hidden.extend(pat.binders());
        self.go(q, st)
    }

    fn flush(&self, st: &mut MonitorState) -> Vec<Step> {
        std::mem::take(&mut st.buffers).into_iter().map(|(c, t)| Step::Out(c, t)).collect()
    }

    fn finish(&mut self, mut st: MonitorState) -> Result<Process, TransformError> {
        let steps = self.flush(&mut st);
        if let Some(d) = st.delayed.iter().find(|d| !d.is_definition()) {
            let d = self.sub_delayed(&st, d);
            let mentions_hidden = match &d {
                Delayed::Let(p, t) => self.hidden(&st, t) || self.hidden_pat(&st, p),
                Delayed::Insert(_, a) | Delayed::Event(_, a) => a.iter().any(|a| self.hidden(&st, a)),
                Delayed::Get(_, ps) => ps.iter().any(|p| self.hidden_pat(&st, p)),
            };
            return Err(if mentions_hidden {
                TransformError::Unobservable(d.describe())
            } else {
                TransformError::Undischargeable(d.describe())
            });
        }
        Ok(build(steps, Process::Nil))
    }

    fn sub_delayed(&self, st: &MonitorState, d: &Delayed) -> Delayed {
        match d {
            Delayed::Let(p, t) => Delayed::Let(self.sub_pat(st, p), self.sub(st, t)),
            Delayed::Insert(tb, a) => Delayed::Insert(tb.clone(), a.iter().map(|x| self.sub(st, x)).collect()),
            Delayed::Get(tb, ps) => Delayed::Get(tb.clone(), ps.iter().map(|x| self.sub_pat(st, x)).collect()),
            Delayed::Event(e, a) => Delayed::Event(e.clone(), a.iter().map(|x| self.sub(st, x)).collect()),
        }
    }

    /// Emits every delayed expression that has become executable, repeating
    /// until nothing changes. Within a pass the original order is kept.
    fn do_checks(&self, st: &mut MonitorState) -> Vec<Step> {
        let mut steps = Vec::new();
        loop {
            let mut progressed = false;
            let mut i = 0;
            while i < st.delayed.len() {
                let d = self.sub_delayed(st, &st.delayed[i]);
                let ready = match &d {
                    Delayed::Let(p, t) => self.is_known(st, t) && self.pattern_ready(st, p),
                    Delayed::Insert(_, a) | Delayed::Event(_, a) => a.iter().all(|x| self.is_known(st, x)),
                    Delayed::Get(_, ps) => ps.iter().all(|p| self.pattern_ready(st, p)),
                };
                if !ready {
                    i += 1;
                    continue;
                }
                st.delayed.remove(i);
                progressed = true;
                match d {
                    Delayed::Let(p, t) => {
                        st.known.extend(p.binders());
                        steps.push(Step::Let(p, t));
                    }
                    Delayed::Insert(tb, a) => steps.push(Step::Insert(monitor_table(&tb), a)),
                    Delayed::Get(tb, ps) => {
                        st.known.extend(ps.iter().flat_map(Pattern::binders));
                        steps.push(Step::Get(monitor_table(&tb), ps));
                    }
                    Delayed::Event(e, a) => steps.push(Step::Event(e, a)),
                }
            }
            if !progressed {
                return steps;
            }
        }
    }

    /// Pattern that deconstructs a value the participant computes as `t`:
    /// maximal known subterms become equality checks, unknown variables are
    /// bound, pending definitions are unfolded.
    fn pattern_form(&self, t: &Term, st: &mut MonitorState) -> Pattern {
        if self.is_known(st, t) {
            return Pattern::Eq(t.clone());
        }
        match t {
            Term::Var(x) => match st.defs.get(x).cloned() {
                Some(def) => self.pattern_form(&self.sub(st, &def), st),
                None => {
                    st.known.insert(x.clone());
                    Pattern::Bind(x.clone(), None)
                }
            },
            Term::Ctor(f, args) => Pattern::Ctor(f.clone(), args.iter().map(|a| self.pattern_form(a, st)).collect()),
            Term::Tuple(args) => Pattern::Tuple(args.iter().map(|a| self.pattern_form(a, st)).collect()),
            _ => Pattern::Eq(t.clone()),
        }
    }

    /// Receive pattern for the participant's outgoing message slots, with the
    /// term to forward and the checks to run after the input.
    fn receive_form(&mut self, slots: &[Term], st: &mut MonitorState, recheck_known: bool) -> ReceiveForm {
        let mut pats: Vec<Option<Pattern>> = vec![None; slots.len()];
        let mut rebuilt: Vec<Term> = slots.to_vec();
        let mut checked = vec![false; slots.len()];
        for (i, s) in slots.iter().enumerate() {
            if let Term::Var(x) = s {
                if !st.known.contains(x) && !st.defs.contains_key(x) {
                    st.known.insert(x.clone());
                    pats[i] = Some(Pattern::Bind(x.clone(), None));
                }
            }
        }
        let (mut patlets, mut eqlets) = (Vec::new(), Vec::new());
        for (i, s) in slots.iter().enumerate() {
            if pats[i].is_some() {
                continue;
            }
            let recon = match s {
                Term::Var(x) if recheck_known => st.recon.get(x).filter(|r| !r.is_ground()).cloned(),
                _ => None,
            };
            if let Some(r) = recon {
                let cs = self.fresh("cs");
                eqlets.push(Step::Let(Pattern::Eq(r), Term::Var(cs.clone())));
                pats[i] = Some(Pattern::Bind(cs.clone(), None));
                rebuilt[i] = Term::Var(cs);
                checked[i] = true;
            } else if matches!(s, Term::Var(x) if st.known.contains(x)) {
                pats[i] = Some(Pattern::Eq(s.clone()));
                checked[i] = true;
            } else if s.is_ground() {
                let cs = self.fresh("cs");
                pats[i] = Some(Pattern::Bind(cs.clone(), None));
                rebuilt[i] = Term::Var(cs);
            } else if self.is_known(st, s) {
                let cs = self.fresh("cs");
                eqlets.push(Step::Let(Pattern::Eq(s.clone()), Term::Var(cs.clone())));
                pats[i] = Some(Pattern::Bind(cs.clone(), None));
                rebuilt[i] = Term::Var(cs);
                checked[i] = true;
            } else {
                let cs = self.fresh("cs");
                let form = self.pattern_form(s, st);
                patlets.push(Step::Let(form, Term::Var(cs.clone())));
                pats[i] = Some(Pattern::Bind(cs.clone(), None));
                rebuilt[i] = Term::Var(cs);
                checked[i] = true;
            }
        }
        for p in pats.iter().flatten() {
            st.known.extend(p.binders());
        }
        (pats.into_iter().map(|p| p.expect("every slot assigned")).collect(), rebuilt, patlets, eqlets, checked)
    }

    fn output(&mut self, c: &Term, t: &Term, q: &Process, mut st: MonitorState) -> Result<Process, TransformError> {
        let t = self.sub(&st, t);
        if self.worker() {
            return match channel_name(c)?.as_str() {
                REQUEST => {
                    st.back_vars = t.vars();
                    self.go(q, st)
                }
                RESPONSE => self.worker_reply(&t, q, st),
                other => Err(TransformError::Unsupported(format!("service worker cannot observe channel `{other}`"))),
            };
        }
        let mut steps = self.flush(&mut st);
        let slots = match &t {
            Term::Tuple(ts) => ts.clone(),
            other => vec![other.clone()],
        };
        let (pats, rebuilt, patlets, eqlets, _) = self.receive_form(&slots, &mut st, true);
        let relay = self.mch_in(c)?;
        let (pat, fwd) = if matches!(t, Term::Tuple(_)) {
            (Pattern::Tuple(pats), Term::Tuple(rebuilt))
        } else {
            (pats.into_iter().next().unwrap(), rebuilt.into_iter().next().unwrap())
        };
        steps.push(Step::In(relay, pat));
        steps.extend(patlets);
        steps.extend(eqlets);
        steps.extend(self.do_checks(&mut st));
        steps.push(Step::Out(c.clone(), fwd));
        let rest = self.go(q, st)?;
        Ok(build(steps, rest))
    }

    fn worker_reply(&mut self, t: &Term, q: &Process, mut st: MonitorState) -> Result<Process, TransformError> {
        let Term::Tuple(slots) = t else {
            return Err(TransformError::Unsupported("response term is not a 5-tuple".into()));
        };
        let [_, resp, cookie, policy, _] = slots.as_slice() else {
            return Err(TransformError::Unsupported("response term is not a 5-tuple".into()));
        };
        let Some(u) = st.front_u.clone() else {
            return Err(TransformError::Unsupported("response without a preceding request".into()));
        };
        let mut steps = self.flush(&mut st);
        if let Term::Var(x) = cookie {
            if !st.known.contains(x) && !st.defs.contains_key(x) {
                st.subst.insert(x.clone(), self.browser());
            }
        }
        let (resp, policy) = (self.sub(&st, resp), self.sub(&st, policy));
        let (pats, rebuilt, mut patlets, eqlets, checked) = self.receive_form(&[resp.clone(), policy], &mut st, false);
        if !checked[0] {
            if let Some(ua) = st.path.as_ref().and_then(|p| self.ua_check(p)) {
                if unifies(&ua, &resp) {
                    let form = self.pattern_form(&resp, &mut st);
                    patlets.push(Step::Let(form, rebuilt[0].clone()));
                }
            }
        }
        let (xd, corr) = (self.fresh("xd"), self.fresh("corr"));
        let mut slots_in = vec![Pattern::Eq(u.clone())];
        slots_in.extend(pats.into_iter().zip(["HttpResponse", "ReferrerPolicy"]).map(|(p, ty)| match p {
            Pattern::Bind(x, None) => Pattern::Bind(x, Some(ty.to_string())),
            other => other,
        }));
        slots_in.push(Pattern::Bind(xd.clone(), Some("XDR".into())));
        slots_in.push(Pattern::Bind(corr.clone(), Some("bitstring".into())));
        st.known.insert(xd.clone());
        st.known.insert(corr.clone());
        steps.push(Step::In(self.bchan("serviceWorkerResult"), Pattern::Tuple(slots_in)));
        steps.extend(patlets);
        steps.extend(eqlets);
        steps.extend(self.do_checks(&mut st));
        let mut out = vec![u];
        out.extend(rebuilt);
        out.push(Term::Var(xd));
        out.push(Term::Var(corr));
        steps.push(Step::Out(self.bchan("serviceWorkerSendHttpResponse"), Term::Tuple(out)));
        st.front_u = None;
        let rest = self.go(q, st)?;
        Ok(build(steps, rest))
    }

    fn ua_check(&self, path: &str) -> Option<Pattern> {
        match &self.mode {
            Mode::Worker { ua_checks, .. } => ua_checks.get(path).cloned(),
            Mode::Proxy => None,
        }
    }
}

fn channel_name(c: &Term) -> Result<Ident, TransformError> {
    match c {
        Term::Name(n) => Ok(n.clone()),
        other => Err(TransformError::Unsupported(format!("channel `{}` is not a declared name", pretty::term(other)))),
    }
}

/// Path constructor selected by a `uri(scheme, host, path, params)` pattern.
pub fn uri_path(p: &Pattern) -> Option<Ident> {
    match crate::alpha::normalize_pattern(p) {
        Pattern::Ctor(f, ps) if f == "uri" && ps.len() == 4 => match &ps[2] {
            Pattern::Ctor(path, args) if args.is_empty() => Some(path.clone()),
            _ => None,
        },
        _ => None,
    }
}

/// Whether `p` can match some instance of `t` (binders and variables are wildcards).
pub(crate) fn unifies(p: &Pattern, t: &Term) -> bool {
    match (crate::alpha::normalize_pattern(p), t) {
        (Pattern::Bind(..), _) | (_, Term::Var(_)) => true,
        (Pattern::Eq(a), b) => a == *b || !a.is_ground() || !b.is_ground(),
        (Pattern::Ctor(f, ps), Term::Ctor(g, ts)) => {
            f == *g && ps.len() == ts.len() && ps.iter().zip(ts).all(|(p, t)| unifies(p, t))
        }
        (Pattern::Tuple(ps), Term::Tuple(ts)) => ps.len() == ts.len() && ps.iter().zip(ts).all(|(p, t)| unifies(p, t)),
        _ => false,
    }
}
