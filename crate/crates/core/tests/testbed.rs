use std::collections::BTreeSet;

use bulwark_core::deploy::{DeployedMonitor, MonitorKind};
use bulwark_core::testbed::{run_blocking, RunReport, Scenario, Vuln};
use bulwark_core::transform::{a2m_proxy, a2m_sw, SynthOptions};

fn set(ps: &[&str]) -> BTreeSet<String> {
    ps.iter().map(|p| p.to_string()).collect()
}

fn monitor(sc: &Scenario, name: &str, kind: MonitorKind) -> DeployedMonitor {
    let p = sc.spec.participant(name).unwrap();
    let monitor = match kind {
        MonitorKind::Proxy => a2m_proxy(&sc.spec, p, SynthOptions::default()).unwrap(),
        MonitorKind::ServiceWorker => {
            let ua = sc.spec.participant_for_role("UA").unwrap();
            a2m_sw(&sc.spec, p, ua, SynthOptions::default()).unwrap()
        }
    };
    DeployedMonitor { participant: name.into(), kind, monitor }
}

fn run(case: &str, inattentive: &[&str], monitors: &[(&str, MonitorKind)]) -> RunReport {
    let sc = Scenario::case(case).unwrap();
    let ms: Vec<_> = monitors.iter().map(|(n, k)| monitor(&sc, n, *k)).collect();
    let r = run_blocking(&sc, &set(inattentive), &ms).unwrap();
    eprintln!("{}", r.to_json());
    r
}

fn attack(r: &RunReport, v: Vuln) -> bool {
    r.attacks.iter().find(|a| a.vuln == v).unwrap().succeeded
}

#[test]
fn session_swap_without_monitor() {
    let r = run("cs2", &["RPApp"], &[]);
    assert!(r.honest_completed, "{}", r.honest_detail);
    assert!(attack(&r, Vuln::NoStateCheck));
}

#[test]
fn session_swap_stopped_by_worker() {
    let r = run("cs2", &["RPApp"], &[("RPApp", MonitorKind::ServiceWorker)]);
    assert!(r.honest_completed, "{}", r.honest_detail);
    assert!(!attack(&r, Vuln::NoStateCheck));
    assert!(!r.blocked.is_empty());
}

#[test]
fn session_swap_stopped_by_proxy() {
    let r = run("cs2", &["RPApp"], &[("RPApp", MonitorKind::Proxy)]);
    assert!(r.honest_completed, "{}", r.honest_detail);
    assert!(!attack(&r, Vuln::NoStateCheck));
}

#[test]
fn code_redirection_needs_provider_proxy() {
    let r = run("cs1", &["TTPApp"], &[]);
    assert!(r.honest_completed, "{}", r.honest_detail);
    assert!(attack(&r, Vuln::NoReduriBinding));
    assert!(r.queries.iter().any(|q| !q.holds));
    let r = run("cs1", &["TTPApp"], &[("TTPApp", MonitorKind::Proxy)]);
    assert!(r.secure(), "{:?}", r.witness());
}

#[test]
fn payment_attacks_without_monitor() {
    let r = run("cs6", &["ShopApp"], &[]);
    assert!(r.honest_completed, "{}", r.honest_detail);
    assert!(attack(&r, Vuln::NoIpnRevalidation));
    assert!(attack(&r, Vuln::NoMerchantCheck));
    let r = run("cs8", &["ShopApp"], &[]);
    assert!(attack(&r, Vuln::NoTokenFreshness));
}

#[test]
fn payment_attacks_stopped_by_shop_proxy() {
    for case in ["cs6", "cs8"] {
        let r = run(case, &["ShopApp"], &[("ShopApp", MonitorKind::Proxy)]);
        assert!(r.secure(), "{case}: {:?}", r.witness());
    }
}
