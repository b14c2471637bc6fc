use bulwark_core::*;

fn load(name: &str) -> SystemSpec {
    let path = format!("{}/specs/{name}", env!("CARGO_MANIFEST_DIR"));
    let src = std::fs::read_to_string(&path).unwrap();
    match parse_spec(&src) {
        Ok(s) => s,
        Err(e) => panic!("{name}: {:#?}", e.problems()),
    }
}

#[test]
fn oauth_parses() {
    let spec = load("oauth.bw.pv");
    assert_eq!(spec.participants.len(), 3);
    assert_eq!(spec.queries.len(), 2);
}

#[test]
fn goldens_parse() {
    let base = load("oauth.bw.pv");
    for f in ["rp_proxy.golden.bw.pv", "rp_sw.golden.bw.pv"] {
        let src = std::fs::read_to_string(format!("{}/specs/{f}", env!("CARGO_MANIFEST_DIR"))).unwrap();
        if let Err(e) = parse_spec_extending(&base, &src) {
            panic!("{f}: {:#?}", e.problems());
        }
    }
}
