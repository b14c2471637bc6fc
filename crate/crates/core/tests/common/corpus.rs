//! Small participant specifications for bounded trace comparisons.

use std::collections::BTreeSet;

use bulwark_core::interp::{inattentive_system, monitored_system, participant_system, Explorer};
use bulwark_core::transform::{a2m_proxy, SynthOptions};
use bulwark_core::{parse_spec, SystemSpec};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const DECLS: &str = "free c, d: channel.
free k: bitstring.
fun f1(bitstring): bitstring.
fun f2(bitstring, bitstring): bitstring.
fun g(bitstring): bitstring.
fun h(): bitstring.
table T(bitstring, bitstring).
table U(bitstring).
event e(bitstring).
";

pub struct Entry {
    pub name: String,
    pub spec: SystemSpec,
    pub participant: String,
}

fn pick<'a, T>(rng: &mut StdRng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn branch(rng: &mut StdRng, id: usize) -> String {
    let chan = *pick(rng, &["c", "d"]);
    let mut vars: Vec<String> = Vec::new();
    let v = |n: &str| format!("{n}{id}");
    let input = match rng.random_range(0..5) {
        0 => {
            vars.push(v("x"));
            format!("{}: bitstring", v("x"))
        }
        1 => {
            vars.extend([v("x"), v("y")]);
            format!("({}: bitstring, {}: bitstring)", v("x"), v("y"))
        }
        2 => {
            vars.push(v("x"));
            format!("(=k, {}: bitstring)", v("x"))
        }
        3 => {
            vars.extend([v("x"), v("y")]);
            format!("f2({}, {})", v("x"), v("y"))
        }
        _ => {
            vars.push(v("x"));
            format!("f1({})", v("x"))
        }
    };
    let mut body = format!("in({chan}, {input});\n");
    for step in 0..rng.random_range(1..=3) {
        let a = pick(rng, &vars).clone();
        let b = pick(rng, &vars).clone();
        match rng.random_range(0..7) {
            0 => {
                let n = format!("n{id}_{step}");
                body.push_str(&format!("new {n}: bitstring;\n"));
                vars.push(n);
            }
            1 => body.push_str(&format!("insert T({a}, {b});\n")),
            2 => body.push_str(&format!("insert U({a});\n")),
            3 => {
                body.push_str(&format!("get U(={a}) in\n"));
            }
            4 => body.push_str(&format!("if {a} = k then\n")),
            5 => {
                let z = format!("z{id}_{step}");
                body.push_str(&format!("let ({z}: bitstring) = g({a}) in\n"));
                vars.push(z);
            }
            _ => body.push_str(&format!("event e({a});\n")),
        }
    }
    if rng.random_bool(0.3) {
        let other = if chan == "c" { "d" } else { "c" };
        let q = format!("q{id}");
        let r = format!("r{id}");
        body.push_str(&format!("new {q}: bitstring;\nout({other}, f1({q}));\nin({other}, (={q}, {r}: bitstring));\n"));
        vars.push(r);
    }
    let a = pick(rng, &vars).clone();
    let b = pick(rng, &vars).clone();
    let out = match rng.random_range(0..3) {
        0 => format!("({a}, {b})"),
        1 => format!("f1({a})"),
        _ => format!("f2({a}, h())"),
    };
    body.push_str(&format!("out({chan}, {out})"));
    format!("({body})")
}

fn generated_text(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..=2);
    let branches: Vec<String> = (0..n).map(|i| branch(rng, i)).collect();
    format!("{DECLS}let P(k: bitstring) =\n{}.\nprocess !P(k)\n", branches.join("\n|\n"))
}

const MAX_NODES: usize = 18;

/// Generated specs the proxy synthesis accepts, deterministically seeded.
pub fn generated(count: usize) -> Vec<Entry> {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < count && tries < 1000 {
        tries += 1;
        let text = generated_text(&mut rng);
        let Ok(spec) = parse_spec(&text) else { continue };
        let p = spec.participant("P").expect("generated participant");
        let mut nodes = 0;
        p.body.visit(&mut |_| nodes += 1);
        if nodes <= MAX_NODES && a2m_proxy(&spec, p, SynthOptions::default()).is_ok() {
            out.push(Entry { name: format!("gen{tries}"), spec, participant: "P".into() });
        }
    }
    out
}

pub fn hand_written() -> Vec<Entry> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/corpus");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let mut out: Vec<Entry> = files
        .into_iter()
        .map(|f| {
            let spec = parse_spec(&std::fs::read_to_string(&f).unwrap())
                .unwrap_or_else(|e| panic!("{f:?}: {:#?}", e.problems()));
            Entry { name: f.file_stem().unwrap().to_string_lossy().into(), spec, participant: "P".into() }
        })
        .collect();
    let oauth =
        parse_spec(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/specs/oauth.bw.pv")).unwrap())
            .unwrap();
    for p in ["RPApp", "TTPApp"] {
        out.push(Entry { name: format!("oauth-{p}"), spec: oauth.clone(), participant: p.into() });
    }
    out
}

pub struct Comparison {
    pub ideal: usize,
    pub monitored: usize,
    pub inattentive: usize,
    pub equivalent: bool,
    pub contained: bool,
}

pub fn compare(e: &Entry, depth: usize) -> Comparison {
    let p = e.spec.participant(&e.participant).unwrap();
    let m = a2m_proxy(&e.spec, p, SynthOptions::default()).unwrap();
    let ex = Explorer::for_participant(p, depth);
    let ideal: BTreeSet<_> = ex.traces(participant_system(p));
    let monitored = ex.traces(monitored_system(&e.spec, p, &m));
    let inattentive = ex.traces(inattentive_system(&e.spec, p));
    Comparison {
        ideal: ideal.len(),
        monitored: monitored.len(),
        inattentive: inattentive.len(),
        equivalent: ideal == monitored,
        contained: ideal.is_subset(&inattentive),
    }
}
