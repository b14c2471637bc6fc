mod common;

use std::collections::BTreeSet;

use bulwark_core::alpha::first_difference;
use bulwark_core::runtime::{TableStore, Value};
use bulwark_core::transform::{a2m_proxy, free_vars, make_inattentive, monitor_table, SynthOptions};
use bulwark_core::*;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const DECLS: &str = "free c, d: channel.
free k: bitstring.
fun f1(bitstring): bitstring.
fun f2(bitstring, bitstring): bitstring.
fun h(): bitstring.
table T(bitstring, bitstring).
table U(bitstring).
event e(bitstring).
process 0
";

fn decls() -> SystemSpec {
    parse_spec(DECLS).unwrap()
}

/// Random well-scoped processes; `prefix` names the binders, so two builders
/// with the same seed and different prefixes give alpha-equivalent results.
struct Gen {
    rng: StdRng,
    prefix: String,
    next: usize,
}

impl Gen {
    fn new(seed: u64, prefix: &str) -> Gen {
        Gen { rng: StdRng::seed_from_u64(seed), prefix: prefix.into(), next: 0 }
    }

    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("{}{}", self.prefix, self.next)
    }

    fn chan(&mut self) -> Term {
        Term::Name(if self.rng.random_bool(0.5) { "c" } else { "d" }.into())
    }

    fn term(&mut self, vars: &[String], depth: usize) -> Term {
        let leaf = depth == 0 || self.rng.random_bool(0.5);
        if leaf {
            return if vars.is_empty() || self.rng.random_bool(0.2) {
                if self.rng.random_bool(0.5) {
                    Term::Name("k".into())
                } else {
                    Term::ctor("h", vec![])
                }
            } else {
                Term::var(&vars[self.rng.random_range(0..vars.len())])
            };
        }
        match self.rng.random_range(0..3) {
            0 => Term::ctor("f1", vec![self.term(vars, depth - 1)]),
            1 => Term::ctor("f2", vec![self.term(vars, depth - 1), self.term(vars, depth - 1)]),
            _ => Term::Tuple(vec![self.term(vars, depth - 1), self.term(vars, depth - 1)]),
        }
    }

    fn pattern(&mut self, vars: &[String], bound: &mut Vec<String>, depth: usize) -> Pattern {
        let choice = if depth == 0 { 0 } else { self.rng.random_range(0..5) };
        match choice {
            1 if !vars.is_empty() => Pattern::Eq(self.term(vars, 1)),
            2 => Pattern::Ctor("f1".into(), vec![self.pattern(vars, bound, depth - 1)]),
            3 => Pattern::Ctor(
                "f2".into(),
                vec![self.pattern(vars, bound, depth - 1), self.pattern(vars, bound, depth - 1)],
            ),
            4 => Pattern::Tuple(vec![self.pattern(vars, bound, depth - 1), self.pattern(vars, bound, depth - 1)]),
            _ => {
                let x = self.fresh();
                bound.push(x.clone());
                Pattern::Bind(x, Some("bitstring".into()))
            }
        }
    }

    fn scoped(&mut self, vars: &[String], bound: Vec<String>, depth: usize) -> Box<Process> {
        let mut inner = vars.to_vec();
        inner.extend(bound);
        self.process(&inner, depth).boxed()
    }

    fn els(&mut self, vars: &[String], depth: usize) -> Option<Box<Process>> {
        self.rng.random_bool(0.4).then(|| self.process(vars, depth).boxed())
    }

    fn process(&mut self, vars: &[String], depth: usize) -> Process {
        if depth == 0 {
            return Process::Nil;
        }
        let d = depth - 1;
        match self.rng.random_range(0..12) {
            0 => Process::Nil,
            1 => Process::Par(self.process(vars, d).boxed(), self.process(vars, d).boxed()),
            2 => Process::Repl(self.process(vars, d).boxed()),
            3 => {
                let x = self.fresh();
                Process::New(x.clone(), "bitstring".into(), self.scoped(vars, vec![x], d))
            }
            4 | 5 => {
                let c = self.chan();
                let mut bound = Vec::new();
                let pat = self.pattern(vars, &mut bound, 2);
                Process::In(c, pat, self.scoped(vars, bound, d))
            }
            6 => {
                let c = self.chan();
                Process::Out(c, self.term(vars, 2), self.process(vars, d).boxed())
            }
            7 => {
                let mut bound = Vec::new();
                let pat = self.pattern(vars, &mut bound, 2);
                let t = self.term(vars, 2);
                let then = self.scoped(vars, bound, d);
                Process::Let(pat, t, then, self.els(vars, d))
            }
            8 => {
                Process::Insert("T".into(), vec![self.term(vars, 1), self.term(vars, 1)], self.process(vars, d).boxed())
            }
            9 => {
                let mut bound = Vec::new();
                let pat = if !vars.is_empty() && self.rng.random_bool(0.5) {
                    Pattern::Eq(self.term(vars, 0))
                } else {
                    self.pattern(vars, &mut bound, 0)
                };
                let then = self.scoped(vars, bound, d);
                Process::Get("U".into(), vec![pat], then, self.els(vars, d))
            }
            10 => Process::Event("e".into(), vec![self.term(vars, 1)], self.process(vars, d).boxed()),
            _ => {
                let (a, b) = (self.term(vars, 1), self.term(vars, 1));
                let then = self.process(vars, d).boxed();
                Process::If(a, b, then, self.els(vars, d))
            }
        }
    }
}

fn generated(seed: u64, prefix: &str) -> Process {
    Gen::new(seed, prefix).process(&[], 6)
}

/// An open process with `x` free.
fn open(seed: u64) -> Process {
    Gen::new(seed, "v").process(&["x".to_string()], 5)
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pretty_print_round_trips(seed in any::<u64>()) {
        let spec = decls();
        let p = generated(seed, "v");
        let text = pretty_print(&p);
        let q = parse_process(&spec, &text).unwrap_or_else(|e| panic!("{text}\n{:#?}", e.problems()));
        prop_assert!(alpha_equiv(&p, &q), "{text}\n{:?}", first_difference(&p, &q));
    }

    #[test]
    fn parsing_is_deterministic(seed in any::<u64>()) {
        let spec = decls();
        let text = pretty_print(&generated(seed, "v"));
        prop_assert_eq!(parse_process(&spec, &text).unwrap(), parse_process(&spec, &text).unwrap());
    }

    #[test]
    fn alpha_is_reflexive_and_ignores_binder_names(seed in any::<u64>()) {
        let (a, b, c) = (generated(seed, "v"), generated(seed, "w"), generated(seed, "u"));
        prop_assert!(alpha_equiv(&a, &a));
        prop_assert!(alpha_equiv(&a, &b) && alpha_equiv(&b, &a));
        prop_assert!(alpha_equiv(&b, &c) && alpha_equiv(&a, &c));
    }

    #[test]
    fn alpha_is_symmetric_and_transitive(s1 in 0u64..24, s2 in 0u64..24, s3 in 0u64..24) {
        let (a, b, c) = (generated(s1, "v"), generated(s2, "w"), generated(s3, "u"));
        prop_assert_eq!(alpha_equiv(&a, &b), alpha_equiv(&b, &a));
        if alpha_equiv(&a, &b) && alpha_equiv(&b, &c) {
            prop_assert!(alpha_equiv(&a, &c));
        }
    }

    #[test]
    fn free_names_binder_laws(seed in any::<u64>()) {
        let p = open(seed);
        let body: BTreeSet<String> = free_names(&p).into_iter().filter(|n| n != "x").collect();
        let new = Process::New("x".into(), "bitstring".into(), p.clone().boxed());
        prop_assert_eq!(free_names(&new), body.clone());
        let input = Process::In(Term::Name("c".into()), Pattern::bind("x"), p.clone().boxed());
        prop_assert_eq!(free_names(&input), &body | &set(&["c"]));
        let binding = Process::Let(Pattern::bind("x"), Term::Name("k".into()), p.clone().boxed(), None);
        prop_assert_eq!(free_names(&binding), &body | &set(&["k"]));
        let get = Process::Get("U".into(), vec![Pattern::bind("x")], p.clone().boxed(), None);
        prop_assert_eq!(free_names(&get), body);
    }

    #[test]
    fn make_inattentive_is_idempotent_and_strips_checks(seed in any::<u64>()) {
        let spec = decls();
        let p = generated(seed, "v");
        let once = make_inattentive(&spec, &p);
        let twice = make_inattentive(&spec, &once);
        prop_assert!(alpha_equiv(&once, &twice), "{}", pretty_print(&once));
        let mut checks = 0;
        once.visit(&mut |n| {
            if matches!(n, Process::Insert(..) | Process::Get(..) | Process::If(..)) {
                checks += 1;
            }
        });
        prop_assert_eq!(checks, 0);
    }

    #[test]
    fn table_isolation(
        rows in proptest::collection::vec(("[a-d]", "[a-d]{1,2}"), 1..12),
        probe in ("[a-d]", "[a-d]{1,2}"),
    ) {
        let store = TableStore::new(std::time::Duration::from_secs(3600));
        for (cookie, state) in &rows {
            store.insert("MRPSessions", vec![Value::str(cookie), Value::str(state)]).unwrap();
        }
        let key = [Some(Value::str(&probe.0)), Some(Value::str(&probe.1))];
        let exists = rows.contains(&probe);
        match store.lookup("MRPSessions", &key) {
            Some(row) => prop_assert!(exists && row[0].same(&Value::str(&probe.0))),
            None => prop_assert!(!exists),
        }
        let distinct: BTreeSet<_> = rows.iter().collect();
        prop_assert_eq!(store.len("MRPSessions"), distinct.len());
    }
}

fn corpus() -> Vec<common::corpus::Entry> {
    let mut c = common::corpus::hand_written();
    c.extend(common::corpus::generated(12));
    c
}

#[test]
fn monitor_checks_use_only_known_values() {
    for e in corpus() {
        let p = e.spec.participant(&e.participant).unwrap();
        let m = a2m_proxy(&e.spec, p, SynthOptions::default()).unwrap();
        let params: BTreeSet<String> = m.process.params.iter().map(|(x, _)| x.clone()).collect();
        let free = free_vars(&m.process.body);
        assert!(free.is_subset(&params), "{}: {:?} unknown", e.name, free.difference(&params).collect::<Vec<_>>());
    }
}

/// Inserts and events in pre-order, tables renamed to the monitor's.
fn effects(p: &Process, rename: bool) -> Vec<String> {
    let mut out = Vec::new();
    p.visit(&mut |n| match n {
        Process::Insert(tb, args, _) => {
            let tb = if rename { monitor_table(tb) } else { tb.clone() };
            out.push(format!("insert {tb}/{}", args.len()));
        }
        Process::Event(ev, args, _) => out.push(format!("event {ev}/{}", args.len())),
        _ => {}
    });
    out
}

#[test]
fn delayed_expressions_keep_their_order() {
    for e in corpus() {
        let p = e.spec.participant(&e.participant).unwrap();
        let m = a2m_proxy(&e.spec, p, SynthOptions::default()).unwrap();
        let want = effects(&p.body, true);
        let got = effects(&m.process.body, false);
        let mut it = got.iter();
        assert!(want.iter().all(|w| it.any(|g| g == w)), "{}: {want:?} not in order in {got:?}", e.name);
    }
}

/// A term with its variables blanked out.
fn shape(t: &Term) -> String {
    match t {
        Term::Var(_) => "_".into(),
        Term::Name(x) | Term::Const(x) => x.clone(),
        Term::Tuple(ts) => format!("({})", ts.iter().map(shape).collect::<Vec<_>>().join(",")),
        Term::Ctor(f, ts) => format!("{f}({})", ts.iter().map(shape).collect::<Vec<_>>().join(",")),
    }
}

fn eq_shapes(p: &Pattern, out: &mut Vec<String>) {
    match p {
        Pattern::Eq(t) => out.push(shape(t)),
        Pattern::Ctor(_, ps) | Pattern::Tuple(ps) => ps.iter().for_each(|q| eq_shapes(q, out)),
        Pattern::Bind(..) => {}
    }
}

#[derive(Default, Debug)]
struct Census {
    inserts: Vec<String>,
    gets: Vec<String>,
    ifs: Vec<String>,
    eqs: Vec<String>,
}

fn census(p: &Process, rename: bool) -> Census {
    let mut c = Census::default();
    let tb = |t: &String| if rename { monitor_table(t) } else { t.clone() };
    p.visit(&mut |n| match n {
        Process::Insert(t, args, _) => {
            c.inserts.push(format!("{}[{}]", tb(t), args.iter().map(shape).collect::<Vec<_>>().join(",")))
        }
        Process::Get(t, ps, _, _) => {
            let mut eqs = Vec::new();
            ps.iter().for_each(|q| eq_shapes(q, &mut eqs));
            c.gets.push(format!("{}/{}[{}]", tb(t), ps.len(), eqs.join(",")));
        }
        Process::If(a, b, _, _) => c.ifs.push(format!("{}={}", shape(a), shape(b))),
        Process::In(_, pat, _) | Process::Let(pat, _, _, _) => eq_shapes(pat, &mut c.eqs),
        _ => {}
    });
    c
}

fn contains_all(have: &[String], want: &[String]) -> bool {
    want.iter().all(|w| have.contains(w))
}

#[test]
fn removed_checks_reappear_in_the_proxy() {
    let spec = parse_spec(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/specs/oauth.bw.pv")).unwrap())
        .unwrap();
    let rp = spec.participant("RPApp").unwrap();
    let before = census(&rp.body, true);
    let after = census(&make_inattentive(&spec, &rp.body), true);
    let monitor = census(&a2m_proxy(&spec, rp, SynthOptions::default()).unwrap().process.body, false);
    assert!(after.inserts.is_empty() && after.gets.is_empty() && after.ifs.is_empty());
    assert!(!before.inserts.is_empty() && !before.gets.is_empty());
    assert!(contains_all(&monitor.inserts, &before.inserts), "{before:?}\n{monitor:?}");
    assert!(contains_all(&monitor.gets, &before.gets), "{before:?}\n{monitor:?}");
    let mut removed = before.eqs.clone();
    for s in &after.eqs {
        if let Some(i) = removed.iter().position(|r| r == s) {
            removed.remove(i);
        }
    }
    let mut checks = monitor.eqs.clone();
    checks.extend(monitor.ifs.iter().flat_map(|s| s.split('=').map(str::to_string).collect::<Vec<_>>()));
    assert!(contains_all(&checks, &removed), "{removed:?}\n{checks:?}");
    for s in &before.ifs {
        assert!(monitor.ifs.contains(s) || s.split('=').all(|side| checks.iter().any(|c| c == side)), "{s}");
    }
}
