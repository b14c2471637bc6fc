use std::collections::BTreeSet;
use std::hint::black_box;

use bulwark_core::deploy::{search_deployment, Candidate, ThreatModel};
use bulwark_core::runtime::codec::{decode_wire, encode_wire};
use bulwark_core::runtime::{check_correspondence, TraceEntry, Value};
use bulwark_core::swgen::emit_service_worker;
use bulwark_core::testbed::{Scenario, TestbedOracle, OAUTH_SPEC};
use bulwark_core::transform::{a2m_proxy, a2m_sw, SynthOptions};
use bulwark_core::{parse_spec, SystemSpec};
use criterion::{criterion_group, criterion_main, Criterion};

fn synthesis(c: &mut Criterion) {
    c.bench_function("parse oauth spec", |b| b.iter(|| parse_spec(black_box(OAUTH_SPEC)).unwrap()));
    let spec = parse_spec(OAUTH_SPEC).unwrap();
    let rp = spec.participant("RPApp").unwrap();
    let ua = spec.participant("UA").unwrap();
    c.bench_function("a2m proxy RP", |b| b.iter(|| a2m_proxy(&spec, rp, SynthOptions::default()).unwrap()));
    c.bench_function("a2m sw RP", |b| b.iter(|| a2m_sw(&spec, rp, ua, SynthOptions::default()).unwrap()));
    let sc = Scenario::case("cs2").unwrap();
    let m = a2m_sw(&sc.spec, sc.spec.participant("RPApp").unwrap(), ua, SynthOptions::default()).unwrap();
    c.bench_function("emit RP worker", |b| b.iter(|| emit_service_worker(&m, &sc.config).unwrap()));
}

fn search(c: &mut Criterion) {
    let mut g = c.benchmark_group("placement");
    g.sample_size(10);
    for (case, who) in [("cs2", "RPApp"), ("cs6", "ShopApp")] {
        let sc = Scenario::case(case).unwrap();
        let oracle = TestbedOracle { scenario: sc.clone() };
        let inatt: BTreeSet<String> = [who.to_string()].into();
        g.bench_function(format!("testbed oracle {case}"), |b| {
            b.iter(|| search_deployment(&sc.spec, &inatt, sc.threat, &oracle).unwrap())
        });
    }
    let spec = parse_spec(OAUTH_SPEC).unwrap();
    let inatt: BTreeSet<String> = ["RPApp".to_string(), "TTPApp".to_string()].into();
    let reject = |_: &SystemSpec, _: &Candidate| Err::<(), _>("no".to_string());
    g.bench_function("enumerate all options", |b| {
        b.iter(|| search_deployment(&spec, &inatt, ThreatModel::TRUSTED, &reject).unwrap_err())
    });
    g.finish();
}

fn runtime(c: &mut Criterion) {
    let sc = Scenario::case("cs2").unwrap();
    let codec = sc.config.codec("codereqparams").unwrap().clone();
    let args = vec![Value::str("390639"), Value::str("http://rp.example:8080/fb-callback"), Value::str("5d938a")];
    c.bench_function("codec encode", |b| b.iter(|| encode_wire(&codec, black_box(&args)).unwrap()));
    let wire = encode_wire(&codec, &args).unwrap();
    c.bench_function("codec decode", |b| b.iter(|| decode_wire(&codec, black_box(&wire)).unwrap()));
    let q = &sc.spec.queries[0];
    let mut trace = Vec::new();
    for i in 0..40 {
        let s = format!("s{i}");
        trace.push(TraceEntry::new(
            "rp_begin",
            vec!["h".into(), "fb".into(), "c".into(), "a".into(), "r".into(), s.clone()],
            "x",
        ));
        trace.push(TraceEntry::new(
            "ua_end",
            vec!["b".into(), "h".into(), "fb".into(), s.clone(), format!("k{i}")],
            "x",
        ));
        trace.push(TraceEntry::new(
            "rp_end",
            vec![
                "h".into(),
                "fb".into(),
                "c".into(),
                "a".into(),
                "r".into(),
                "sec".into(),
                s,
                format!("k{i}"),
                "t".into(),
            ],
            "x",
        ));
    }
    c.bench_function("correspondence 120 events", |b| b.iter(|| check_correspondence(black_box(&trace), q)));
}

criterion_group!(benches, synthesis, search, runtime);
criterion_main!(benches);
