//! Bounded exploration of process traces.
//!
//! Processes run against an environment that can send, on every public
//! channel, messages shaped like the inputs the original participant
//! expects, filled with a fixed attacker value or values it has seen on
//! public channels. A trace is the sequence of public outputs, with fresh
//! names renamed by first occurrence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::rc::Rc;

use crate::ast::*;
use crate::pretty;
use crate::transform::{make_inattentive, relay_map, Monitor};

pub type Trace = Vec<String>;

const ATTACKER: &str = "atk";
const FRESH: &str = "~n";

#[derive(Clone, Debug)]
pub struct Explorer {
    /// Number of public inputs and outputs along a run.
    pub depth: usize,
    /// Sessions each replicated process may start.
    pub sessions: usize,
    pub public: BTreeSet<Ident>,
    /// Message shapes the environment fills, per public channel.
    pub shapes: BTreeMap<Ident, Vec<Pattern>>,
    /// Pattern variables whose value influences a check.
    pub checked: BTreeSet<Ident>,
    /// Public parameters, known to the environment.
    pub params: BTreeSet<Ident>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    procs: Vec<Process>,
    /// Replicated bodies with the number of sessions they may still start.
    repls: Vec<(Process, usize)>,
    cap: usize,
    tables: BTreeMap<Ident, BTreeSet<Vec<Term>>>,
    fresh: usize,
    seen: BTreeSet<Term>,
    trace: Vec<Term>,
    budget: usize,
}

impl Explorer {
    /// Environment of a participant: its channels, the shapes of its inputs
    /// refined by the selector matches that follow them, and its checked variables.
    pub fn for_participant(p: &Participant, depth: usize) -> Explorer {
        let mut public = BTreeSet::new();
        let mut shapes: BTreeMap<Ident, Vec<Pattern>> = BTreeMap::new();
        let mut checked = BTreeSet::new();
        p.body.visit(&mut |n| match n {
            Process::In(c, pat, q) => {
                let c = channel(c);
                public.insert(c.clone());
                let shape = refine(pat, q);
                let list = shapes.entry(c).or_default();
                if !list.contains(&shape) {
                    list.push(shape);
                }
                checked.extend(pat.eq_vars());
            }
            Process::Out(c, _, _) => {
                public.insert(channel(c));
            }
            Process::Let(pat, t, _, _) => {
                checked.extend(pat.eq_vars());
                if pat.has_eq() {
                    checked.extend(t.vars());
                }
            }
            Process::Get(_, ps, _, _) => checked.extend(ps.iter().flat_map(Pattern::eq_vars)),
            Process::If(a, b, _, _) => {
                checked.extend(a.vars());
                checked.extend(b.vars());
            }
            Process::Insert(_, args, _) => checked.extend(args.iter().flat_map(Term::vars)),
            _ => {}
        });
        let params = p.params.iter().map(|(x, _)| x.clone()).collect();
        Explorer { depth, sessions: 2, public, shapes, checked, params }
    }

    /// All traces of the parallel composition of `procs`.
    pub fn traces(&self, procs: Vec<Process>) -> BTreeSet<Trace> {
        let init = State {
            procs: Vec::new(),
            repls: Vec::new(),
            cap: self.sessions,
            tables: BTreeMap::new(),
            fresh: 0,
            seen: BTreeSet::new(),
            trace: Vec::new(),
            budget: self.depth,
        };
        let mut memo = HashMap::new();
        let mut out = BTreeSet::new();
        for st in settle(init, procs) {
            for t in self.suffixes(st, &mut memo).iter() {
                out.insert(canonical(t));
            }
        }
        out
    }

    /// Output sequences from `st` on, prefix closed.
    fn suffixes(&self, mut st: State, memo: &mut HashMap<State, Rc<BTreeSet<Vec<Term>>>>) -> Rc<BTreeSet<Vec<Term>>> {
        st.procs.sort_by_cached_key(fingerprint);
        st.repls.sort_by_cached_key(|(b, _)| fingerprint(b));
        if let Some(r) = memo.get(&st) {
            return r.clone();
        }
        let mut out = BTreeSet::from([Vec::new()]);
        for mut next in self.steps(&st) {
            let emitted = std::mem::take(&mut next.trace);
            let rest = self.suffixes(next, memo);
            if emitted.is_empty() {
                out.extend(rest.iter().cloned());
            } else {
                out.extend(rest.iter().map(|r| [emitted.as_slice(), r].concat()));
            }
        }
        let out = Rc::new(out);
        memo.insert(st, out.clone());
        out
    }

    /// Successor states. Internal communications run to completion before
    /// any further public action.
    fn steps(&self, st: &State) -> Vec<State> {
        let internal = self.internal_steps(st);
        if !internal.is_empty() {
            return internal;
        }
        let mut out = Vec::new();
        for (base, i) in actors(st) {
            match &base.procs[i] {
                Process::Out(c, t, q) if self.public.contains(&channel(c)) => {
                    if base.budget == 0 {
                        continue;
                    }
                    let v = ground(t);
                    let mut next = base.clone();
                    next.budget -= 1;
                    collect_atoms(&v, &mut next.seen);
                    next.trace.push(Term::Tuple(vec![Term::Name(channel(c)), v]));
                    out.extend(advance(next, &[i], vec![(**q).clone()]));
                }
                Process::In(c, pat, q) if self.public.contains(&channel(c)) => {
                    if base.budget == 0 {
                        continue;
                    }
                    for m in self.candidates(&channel(c), &base) {
                        if let Some(bound) = matches(pat, &m) {
                            let mut next = base.clone();
                            next.budget -= 1;
                            out.extend(advance(next, &[i], vec![q.subst(&bound)]));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Internal communications of the first sender that has a receiver,
    /// one successor per receiver.
    fn internal_steps(&self, st: &State) -> Vec<State> {
        let mut out = Vec::new();
        for (i, p) in st.procs.iter().enumerate() {
            let Process::Out(c, t, q) = p else { continue };
            if self.public.contains(&channel(c)) {
                continue;
            }
            let v = ground(t);
            let chan = channel(c);
            for (recv, j) in actors(st) {
                if j == i {
                    continue;
                }
                let Process::In(d, pat, k) = &recv.procs[j] else { continue };
                if channel(d) != chan {
                    continue;
                }
                if let Some(b) = matches(pat, &v) {
                    out.extend(advance(recv.clone(), &[i, j], vec![(**q).clone(), k.subst(&b)]));
                }
            }
            if !out.is_empty() {
                return out;
            }
        }
        out
    }

    fn candidates(&self, chan: &str, st: &State) -> Vec<Term> {
        let mut atoms: Vec<Term> = vec![Term::Name(ATTACKER.into())];
        atoms.extend(st.seen.iter().cloned());
        let mut out = Vec::new();
        for shape in self.shapes.get(chan).into_iter().flatten() {
            for m in fill(shape, &atoms, &self.checked, &self.params) {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }
}

/// Runs `p` in parallel with `monitor`, with the participant's checks
/// stripped and its channels rerouted through the monitor's relays.
pub fn monitored_system(spec: &SystemSpec, p: &Participant, monitor: &Monitor) -> Vec<Process> {
    let relays = relay_map(monitor);
    let inattentive = make_inattentive(spec, &p.body).map_channels(&|c, is_in| match relays.get(&channel(c)) {
        Some((to_p, from_p)) => Term::Name(if is_in { to_p.clone() } else { from_p.clone() }),
        None => c.clone(),
    });
    vec![instantiate(&p.params, inattentive), instantiate(&monitor.process.params, monitor.process.body.clone())]
}

pub fn participant_system(p: &Participant) -> Vec<Process> {
    vec![instantiate(&p.params, p.body.clone())]
}

pub fn inattentive_system(spec: &SystemSpec, p: &Participant) -> Vec<Process> {
    vec![instantiate(&p.params, make_inattentive(spec, &p.body))]
}

/// A replicated server instance with parameters bound to their own names.
fn instantiate(params: &[(Ident, Ident)], body: Process) -> Process {
    let map = params.iter().map(|(x, _)| (x.clone(), Term::Name(x.clone()))).collect();
    Process::Repl(body.subst(&map).boxed())
}

fn channel(c: &Term) -> Ident {
    match c {
        Term::Name(n) | Term::Var(n) | Term::Const(n) => n.clone(),
        Term::Ctor(f, _) => f.clone(),
        Term::Tuple(_) => pretty::term(c),
    }
}

fn ground(t: &Term) -> Term {
    match t {
        Term::Name(x) | Term::Var(x) | Term::Const(x) => Term::Name(x.clone()),
        Term::Ctor(f, args) => Term::Ctor(f.clone(), args.iter().map(ground).collect()),
        Term::Tuple(ts) => Term::Tuple(ts.iter().map(ground).collect()),
    }
}

fn matches(p: &Pattern, v: &Term) -> Option<BTreeMap<Ident, Term>> {
    let mut out = BTreeMap::new();
    bind(p, v, &mut out).then_some(out)
}

fn bind(p: &Pattern, v: &Term, out: &mut BTreeMap<Ident, Term>) -> bool {
    match (p, v) {
        (Pattern::Bind(x, _), _) => {
            out.insert(x.clone(), v.clone());
            true
        }
        (Pattern::Eq(t), _) => ground(&t.subst(out)) == *v,
        (Pattern::Ctor(f, ps), Term::Ctor(g, vs)) if f == g && ps.len() == vs.len() => {
            ps.iter().zip(vs).all(|(p, v)| bind(p, v, out))
        }
        (Pattern::Tuple(ps), Term::Tuple(vs)) if ps.len() == vs.len() => {
            ps.iter().zip(vs).all(|(p, v)| bind(p, v, out))
        }
        _ => false,
    }
}

/// Replaces the binders of an input pattern with the patterns later
/// matched against them, up to the next communication.
fn refine(pat: &Pattern, q: &Process) -> Pattern {
    let mut sel: BTreeMap<Ident, Pattern> = BTreeMap::new();
    let mut cur = q;
    loop {
        match cur {
            Process::In(..)
            | Process::Out(..)
            | Process::Nil
            | Process::Par(..)
            | Process::Repl(..)
            | Process::Call(..) => break,
            Process::Let(p, Term::Var(x), _, _) if !matches!(p, Pattern::Bind(..)) => {
                sel.entry(x.clone()).or_insert_with(|| p.clone());
            }
            _ => {}
        }
        match cur.continuation() {
            Some(next) => cur = next,
            None => break,
        }
    }
    fn go(p: &Pattern, sel: &BTreeMap<Ident, Pattern>, depth: usize) -> Pattern {
        match p {
            Pattern::Bind(x, _) if depth > 0 => match sel.get(x) {
                Some(s) => go(s, sel, depth - 1),
                None => p.clone(),
            },
            Pattern::Bind(..) | Pattern::Eq(_) => p.clone(),
            Pattern::Ctor(f, ps) => Pattern::Ctor(f.clone(), ps.iter().map(|q| go(q, sel, depth)).collect()),
            Pattern::Tuple(ps) => Pattern::Tuple(ps.iter().map(|q| go(q, sel, depth)).collect()),
        }
    }
    go(pat, &sel, 4)
}

/// Messages of the given shape: closed equality slots get their own value,
/// checked slots range over `atoms`, other slots get the attacker value.
fn fill(shape: &Pattern, atoms: &[Term], checked: &BTreeSet<Ident>, params: &BTreeSet<Ident>) -> Vec<Term> {
    let rec = |ps: &[Pattern]| product(ps, atoms, checked, params);
    match shape {
        Pattern::Eq(t) if t.vars().is_subset(params) => vec![ground(t)],
        Pattern::Eq(_) => atoms.to_vec(),
        Pattern::Bind(x, _) if checked.contains(x) => atoms.to_vec(),
        Pattern::Bind(..) => vec![Term::Name(ATTACKER.into())],
        Pattern::Ctor(f, ps) => rec(ps).into_iter().map(|a| Term::Ctor(f.clone(), a)).collect(),
        Pattern::Tuple(ps) => rec(ps).into_iter().map(Term::Tuple).collect(),
    }
}

fn product(ps: &[Pattern], atoms: &[Term], checked: &BTreeSet<Ident>, params: &BTreeSet<Ident>) -> Vec<Vec<Term>> {
    let mut out = vec![Vec::new()];
    for p in ps {
        let opts = fill(p, atoms, checked, params);
        out =
            out.into_iter().flat_map(|pre| opts.iter().map(move |o| [pre.clone(), vec![o.clone()]].concat())).collect();
    }
    out
}

fn collect_atoms(v: &Term, out: &mut BTreeSet<Term>) {
    match v {
        Term::Name(n) if n.starts_with(FRESH) => {
            out.insert(v.clone());
        }
        Term::Ctor(_, args) | Term::Tuple(args) => args.iter().for_each(|a| collect_atoms(a, out)),
        _ => {}
    }
}

/// Processes ready to communicate, each with the state it acts in. A
/// replicated process acts through a fresh copy of its body.
fn actors(st: &State) -> Vec<(State, usize)> {
    let mut out = Vec::new();
    for (i, p) in st.procs.iter().enumerate() {
        if matches!(p, Process::In(..) | Process::Out(..)) {
            out.push((st.clone(), i));
        }
    }
    for (k, (body, left)) in st.repls.iter().enumerate() {
        if *left == 0 {
            continue;
        }
        let mut base = st.clone();
        base.repls[k].1 -= 1;
        for spawned in settle(base, vec![body.clone()]) {
            for j in st.procs.len()..spawned.procs.len() {
                if matches!(spawned.procs[j], Process::In(..) | Process::Out(..)) {
                    out.push((spawned.clone(), j));
                }
            }
        }
    }
    out
}

fn advance(mut st: State, used: &[usize], next: Vec<Process>) -> Vec<State> {
    let mut used = used.to_vec();
    used.sort_unstable();
    for i in used.into_iter().rev() {
        st.procs.remove(i);
    }
    settle(st, next)
}

/// Adds processes to the state after running their silent steps.
fn settle(st: State, procs: Vec<Process>) -> Vec<State> {
    let mut states = vec![st];
    for p in procs {
        states = states.into_iter().flat_map(|s| run_silent(s, p.clone())).collect();
    }
    states
}

fn replicate(st: &mut State, body: Process) {
    match body {
        Process::Nil => {}
        Process::Par(a, b) => {
            replicate(st, *a);
            replicate(st, *b);
        }
        Process::Repl(q) => replicate(st, *q),
        Process::Let(pat, t, q, None) => {
            if let Some(b) = matches(&pat, &ground(&t)) {
                replicate(st, q.subst(&b));
            }
        }
        other => {
            if !st.repls.iter().any(|(b, _)| *b == other) {
                st.repls.push((other, st.cap));
            }
        }
    }
}

fn run_silent(mut st: State, p: Process) -> Vec<State> {
    match p {
        Process::Nil | Process::Call(..) => vec![st],
        Process::Par(a, b) => run_silent(st, *a).into_iter().flat_map(|s| run_silent(s, (*b).clone())).collect(),
        Process::Repl(q) => {
            replicate(&mut st, *q);
            vec![st]
        }
        Process::In(..) | Process::Out(..) => {
            st.procs.push(p);
            vec![st]
        }
        Process::New(x, _, q) => {
            st.fresh += 1;
            let v = Term::Name(format!("{FRESH}{}", st.fresh));
            let q = q.subst(&BTreeMap::from([(x, v)]));
            run_silent(st, q)
        }
        Process::Event(_, _, q) => run_silent(st, *q),
        Process::Let(pat, t, q, e) => match matches(&pat, &ground(&t)) {
            Some(b) => run_silent(st, q.subst(&b)),
            None => match e {
                Some(e) => run_silent(st, *e),
                None => vec![st],
            },
        },
        Process::If(a, b, q, e) => {
            if ground(&a) == ground(&b) {
                run_silent(st, *q)
            } else if let Some(e) = e {
                run_silent(st, *e)
            } else {
                vec![st]
            }
        }
        Process::Insert(tb, args, q) => {
            st.tables.entry(tb).or_default().insert(args.iter().map(ground).collect());
            run_silent(st, *q)
        }
        Process::Get(tb, pats, q, e) => {
            let rows: Vec<Vec<Term>> = st.tables.get(&tb).into_iter().flatten().cloned().collect();
            let hits: Vec<BTreeMap<Ident, Term>> = rows
                .iter()
                .filter(|r| r.len() == pats.len())
                .filter_map(|r| matches(&Pattern::Tuple(pats.clone()), &Term::Tuple(r.clone())))
                .collect();
            if hits.is_empty() {
                return match e {
                    Some(e) => run_silent(st, *e),
                    None => vec![st],
                };
            }
            hits.into_iter().flat_map(|b| run_silent(st.clone(), q.subst(&b))).collect()
        }
    }
}

fn fingerprint(p: &Process) -> u64 {
    let mut h = DefaultHasher::new();
    p.hash(&mut h);
    h.finish()
}

fn canonical(trace: &[Term]) -> Trace {
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    fn rename(t: &Term, names: &mut BTreeMap<String, String>) -> Term {
        match t {
            Term::Name(n) if n.starts_with(FRESH) => {
                let k = names.len() + 1;
                Term::Name(names.entry(n.clone()).or_insert_with(|| format!("n{k}")).clone())
            }
            Term::Ctor(f, args) => Term::Ctor(f.clone(), args.iter().map(|a| rename(a, names)).collect()),
            Term::Tuple(ts) => Term::Tuple(ts.iter().map(|a| rename(a, names)).collect()),
            other => other.clone(),
        }
    }
    trace.iter().map(|t| pretty::term(&rename(t, &mut names))).collect()
}
