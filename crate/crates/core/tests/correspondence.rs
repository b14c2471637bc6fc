mod common;

use bulwark_core::ast::{EventAtom, Query, Term};
use bulwark_core::runtime::{check_correspondence, TraceEntry, Verdict};
use common::correspondence::{brute_force_holds, random_query, random_trace, rng};

fn atom(name: &str, args: &[&str]) -> EventAtom {
    EventAtom { name: name.into(), args: args.iter().map(|a| Term::Var(a.to_string())).collect() }
}

fn entry(ev: &str, args: &[&str]) -> TraceEntry {
    TraceEntry::new(ev, args.iter().map(|a| a.to_string()).collect(), "s")
}

fn login_query() -> Query {
    Query::Correspondence {
        premise: vec![atom("rp_end", &["h", "idp", "c", "a", "r", "sec", "s", "k", "t"])],
        conclusion: atom("rp_begin", &["h", "idp", "c", "a", "r", "s"]),
    }
}

#[test]
fn empty_trace_holds() {
    assert!(check_correspondence(&[], &login_query()).holds());
}

#[test]
fn direct_witness_holds() {
    let trace = [
        entry("rp_begin", &["h", "idp", "c", "a", "r", "s"]),
        entry("ua_end", &["b", "h", "idp", "s", "k"]),
        entry("rp_end", &["h", "idp", "c", "a", "r", "sec", "s", "k", "t"]),
    ];
    assert!(check_correspondence(&trace, &login_query()).holds());
}

#[test]
fn swapped_session_is_violated() {
    let trace = [
        entry("rp_begin", &["h", "idp", "victim", "a", "r", "s1"]),
        entry("rp_begin", &["h", "idp", "attacker", "a", "r", "s2"]),
        entry("rp_end", &["h", "idp", "victim", "a", "r", "sec", "s2", "k", "t"]),
    ];
    match check_correspondence(&trace, &login_query()) {
        Verdict::Violated { entries, assignment } => {
            assert_eq!(entries, vec![2]);
            assert_eq!(assignment["s"], "s2");
        }
        Verdict::Holds => panic!("expected a violation"),
    }
}

#[test]
fn conclusion_after_premise_does_not_count() {
    let trace = [
        entry("rp_end", &["h", "idp", "c", "a", "r", "sec", "s", "k", "t"]),
        entry("rp_begin", &["h", "idp", "c", "a", "r", "s"]),
    ];
    assert!(!check_correspondence(&trace, &login_query()).holds());
}

#[test]
fn agrees_with_brute_force_on_random_traces() {
    let mut r = rng(7);
    let mut violated = 0;
    for i in 0..200 {
        let trace = random_trace(&mut r);
        let q = random_query(&mut r);
        let got = check_correspondence(&trace, &q);
        assert_eq!(got.holds(), brute_force_holds(&trace, &q), "case {i}: {q:?} on {trace:?}");
        if !got.holds() {
            violated += 1;
        }
    }
    assert!(violated > 20 && violated < 180, "degenerate sample: {violated} violations");
}
