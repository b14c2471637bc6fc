use bulwark_core::alpha::{alpha_equiv_participant, first_difference};
use bulwark_core::transform::{a2m_proxy, a2m_sw, SynthOptions};
use bulwark_core::*;

fn spec_dir() -> String {
    format!("{}/specs", env!("CARGO_MANIFEST_DIR"))
}

fn oauth() -> SystemSpec {
    parse_spec(&std::fs::read_to_string(format!("{}/oauth.bw.pv", spec_dir())).unwrap()).unwrap()
}

fn golden(base: &SystemSpec, file: &str, name: &str) -> Participant {
    let src = std::fs::read_to_string(format!("{}/{file}", spec_dir())).unwrap();
    let spec = parse_spec_extending(base, &src).unwrap();
    spec.participant(name).unwrap().clone()
}

#[test]
fn proxy_matches_golden() {
    let spec = oauth();
    let rp = spec.participant("RPApp").unwrap();
    let m = a2m_proxy(&spec, rp, SynthOptions::default()).unwrap();
    let g = golden(&spec, "rp_proxy.golden.bw.pv", "RPProxy");
    assert!(
        alpha_equiv_participant(&m.process, &g),
        "{}\n{:?}",
        pretty::participant(&m.process),
        first_difference(&m.process.body, &g.body)
    );
}

#[test]
fn sw_matches_golden() {
    let spec = oauth();
    let rp = spec.participant("RPApp").unwrap();
    let ua = spec.participant("UA").unwrap();
    let m = a2m_sw(&spec, rp, ua, SynthOptions::default()).unwrap();
    let g = golden(&spec, "rp_sw.golden.bw.pv", "RPServiceWorker");
    assert!(
        alpha_equiv_participant(&m.process, &g),
        "{}\n{:?}",
        pretty::participant(&m.process),
        first_difference(&m.process.body, &g.body)
    );
}
