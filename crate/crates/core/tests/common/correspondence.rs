//! Exhaustive reference evaluator for correspondence queries.

use std::collections::{BTreeMap, BTreeSet};

use bulwark_core::ast::{EventAtom, Query, Term};
use bulwark_core::runtime::TraceEntry;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn vars(atoms: &[&EventAtom]) -> Vec<String> {
    let mut out = BTreeSet::new();
    for a in atoms {
        for t in &a.args {
            if let Term::Var(x) = t {
                out.insert(x.clone());
            }
        }
    }
    out.into_iter().collect()
}

fn instance(a: &EventAtom, s: &BTreeMap<String, String>) -> Option<(String, Vec<String>)> {
    let args = a
        .args
        .iter()
        .map(|t| match t {
            Term::Var(x) => s.get(x).cloned(),
            Term::Name(n) | Term::Const(n) => Some(n.clone()),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Some((a.name.clone(), args))
}

fn assignments(vs: &[String], domain: &[String]) -> Vec<BTreeMap<String, String>> {
    let mut out = vec![BTreeMap::new()];
    for v in vs {
        out = out
            .into_iter()
            .flat_map(|s| {
                domain.iter().map(move |d| {
                    let mut s = s.clone();
                    s.insert(v.clone(), d.clone());
                    s
                })
            })
            .collect();
    }
    out
}

fn positions(trace: &[TraceEntry], atoms: &[(String, Vec<String>)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for (ev, args) in atoms {
        let hits: Vec<usize> =
            trace.iter().enumerate().filter(|(_, e)| e.event == *ev && e.args == *args).map(|(i, _)| i).collect();
        out = out.into_iter().flat_map(|p| hits.iter().map(move |i| [p.clone(), vec![*i]].concat())).collect();
    }
    out
}

/// Whether every joint premise match under every assignment over the trace's
/// values has a conclusion instance strictly before its last premise event.
pub fn brute_force_holds(trace: &[TraceEntry], q: &Query) -> bool {
    let Query::Correspondence { premise, conclusion } = q else {
        return true;
    };
    let domain: Vec<String> =
        trace.iter().flat_map(|e| e.args.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let pvars = vars(&premise.iter().collect::<Vec<_>>());
    let cvars: Vec<String> = vars(&[conclusion]).into_iter().filter(|v| !pvars.contains(v)).collect();
    for s in assignments(&pvars, &domain) {
        let Some(atoms) = premise.iter().map(|a| instance(a, &s)).collect::<Option<Vec<_>>>() else {
            continue;
        };
        for pos in positions(trace, &atoms) {
            let last = *pos.iter().max().unwrap_or(&trace.len());
            let justified = assignments(&cvars, &domain).into_iter().any(|ext| {
                let mut full = s.clone();
                full.extend(ext);
                let Some((ev, args)) = instance(conclusion, &full) else { return false };
                trace[..last].iter().any(|e| e.event == ev && e.args == args)
            });
            if !justified {
                return false;
            }
        }
    }
    true
}

const EVENTS: [(&str, usize); 3] = [("begin", 2), ("end", 2), ("mid", 1)];
const VALUES: [&str; 3] = ["x", "y", "z"];
const VARS: [&str; 3] = ["A", "B", "C"];

pub fn random_trace(rng: &mut StdRng) -> Vec<TraceEntry> {
    let len = rng.random_range(0..=12);
    (0..len)
        .map(|_| {
            let (ev, n) = EVENTS[rng.random_range(0..EVENTS.len())];
            let args = (0..n).map(|_| VALUES[rng.random_range(0..VALUES.len())].to_string()).collect();
            TraceEntry::new(ev, args, "s")
        })
        .collect()
}

fn random_atom(rng: &mut StdRng) -> EventAtom {
    let (ev, n) = EVENTS[rng.random_range(0..EVENTS.len())];
    let args = (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                Term::Name(VALUES[rng.random_range(0..VALUES.len())].to_string())
            } else {
                Term::Var(VARS[rng.random_range(0..VARS.len())].to_string())
            }
        })
        .collect();
    EventAtom { name: ev.to_string(), args }
}

pub fn random_query(rng: &mut StdRng) -> Query {
    let n = rng.random_range(1..=2);
    Query::Correspondence { premise: (0..n).map(|_| random_atom(rng)).collect(), conclusion: random_atom(rng) }
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
