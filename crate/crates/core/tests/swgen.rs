use bulwark_core::ast::Participant;
use bulwark_core::runtime::{ProtocolConfig, WorkerConfig};
use bulwark_core::swgen::{
    check_syntax, emit_registration_snippet, emit_service_worker, snippet_script, EmitError, SyntaxError,
};
use bulwark_core::testbed::Scenario;
use bulwark_core::transform::{a2m_proxy, a2m_sw, Monitor, SynthOptions};
use bulwark_core::Process;

fn rp_worker(case: &str) -> (Monitor, ProtocolConfig) {
    let sc = Scenario::case(case).unwrap();
    let rp = sc.spec.participant("RPApp").unwrap();
    let ua = sc.spec.participant_for_role("UA").unwrap();
    (a2m_sw(&sc.spec, rp, ua, SynthOptions::default()).unwrap(), sc.config)
}

fn syntax_ok(src: &str) {
    match check_syntax(src) {
        Ok(()) | Err(SyntaxError::Unavailable) => {}
        Err(SyntaxError::Invalid(e)) => panic!("{e}\n{src}"),
    }
}

#[test]
fn relying_party_worker_stores_and_looks_up_state() {
    let (m, cfg) = rp_worker("cs2");
    let js = emit_service_worker(&m, &cfg).unwrap();
    let store = js.find("io.store(\"MRPSessions\"").expect("login branch stores the session");
    let lookup = js.find("io.lookup(\"MRPSessions\"").expect("callback branch looks it up");
    assert!(store < lookup);
    let forward = js[lookup..].find("io.rawRequest(").expect("callback is fetched after the lookup");
    assert!(forward > 0);
    assert!(js.contains("M.browser()"));
    assert!(js.contains("self.addEventListener(\"fetch\""));
    assert!(js.contains("io.passThrough()"));
    syntax_ok(&js);
}

#[test]
fn stateless_worker_is_valid() {
    let (m, cfg) = rp_worker("cs5");
    syntax_ok(&emit_service_worker(&m, &cfg).unwrap());
}

#[test]
fn emission_is_deterministic() {
    let (m, cfg) = rp_worker("cs2");
    assert_eq!(emit_service_worker(&m, &cfg).unwrap(), emit_service_worker(&m, &cfg).unwrap());
}

#[test]
fn nil_monitor_passes_everything_through() {
    let (_, cfg) = rp_worker("cs2");
    let m = Monitor {
        process: Participant { name: "Idle".into(), params: vec![("b".into(), "Browser".into())], body: Process::Nil },
        relays: Vec::new(),
        tables: Vec::new(),
    };
    let js = emit_service_worker(&m, &cfg).unwrap();
    assert!(!js.contains("io.block("));
    assert!(js.contains("return io.passThrough();"));
    syntax_ok(&js);
}

#[test]
fn proxy_monitor_is_not_a_worker() {
    let sc = Scenario::case("cs2").unwrap();
    let rp = sc.spec.participant("RPApp").unwrap();
    let m = a2m_proxy(&sc.spec, rp, SynthOptions::default()).unwrap();
    assert!(matches!(emit_service_worker(&m, &sc.config), Err(EmitError::UnsupportedConstruct(_))));
}

#[test]
fn missing_origin_and_codecs_are_reported() {
    let (m, mut cfg) = rp_worker("cs2");
    let mut no_origin = cfg.clone();
    no_origin.worker = None;
    assert_eq!(emit_service_worker(&m, &no_origin), Err(EmitError::MissingOrigin));
    cfg.constructors.remove("codereqparams");
    match emit_service_worker(&m, &cfg) {
        Err(EmitError::MissingCodec(c)) => assert_eq!(c, vec!["codereqparams".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn default_registration_snippet() {
    let html = emit_registration_snippet(&ProtocolConfig::default());
    assert!(html.contains(".register(\"/bulwark-sw.js\", { scope: \"/\" })"), "{html}");
    syntax_ok(snippet_script(&html));
}

#[test]
fn custom_scope_snippet() {
    let cfg = ProtocolConfig {
        worker: Some(WorkerConfig {
            origin: "http://shop.test".into(),
            path: "/shop/sw.js".into(),
            scope: "/shop/".into(),
        }),
        ..Default::default()
    };
    let html = emit_registration_snippet(&cfg);
    assert!(html.contains("scope: \"/shop/\""));
    assert!(html.contains("\"/shop/sw.js\""));
    syntax_ok(snippet_script(&html));
}
