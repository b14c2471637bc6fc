use std::collections::BTreeSet;

use bulwark_core::deploy::{
    enumerate_options, parse_results, search_deployment, Candidate, DeployError, Placement, ThreatModel,
};
use bulwark_core::testbed::{experiments, Scenario, TestbedOracle};
use bulwark_core::SystemSpec;

fn names(ps: &[&str]) -> Vec<String> {
    ps.iter().map(|p| p.to_string()).collect()
}

#[test]
fn options_are_ordered_by_score_then_participant_order() {
    let opts = enumerate_options(&names(&["RPApp", "TTPApp"]));
    assert_eq!(opts.len(), 9);
    let scores: Vec<u32> = opts.iter().map(|o| o.score()).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(opts[0].placements["RPApp"], Placement::ServiceWorker);
    assert_eq!(opts[1].placements["RPApp"], Placement::ServiceWorker);
    assert_eq!(opts[1].placements["TTPApp"], Placement::Proxy);
    assert_eq!(opts[2].placements["RPApp"], Placement::Proxy);
    assert_eq!(opts[2].placements["TTPApp"], Placement::ServiceWorker);
}

#[test]
fn empty_inattentive_set_needs_no_monitor() {
    let sc = Scenario::case("cs1").unwrap();
    let never = |_: &SystemSpec, _: &Candidate| -> Result<(), String> { panic!("verifier called") };
    let m = search_deployment(&sc.spec, &BTreeSet::new(), ThreatModel::TRUSTED, &never).unwrap();
    assert!(m.monitors.is_empty());
}

#[test]
fn unknown_participant_is_rejected() {
    let sc = Scenario::case("cs1").unwrap();
    let ok = |_: &SystemSpec, _: &Candidate| Ok(());
    let inatt: BTreeSet<String> = names(&["Nobody"]).into_iter().collect();
    assert!(matches!(
        search_deployment(&sc.spec, &inatt, ThreatModel::TRUSTED, &ok),
        Err(DeployError::UnknownParticipant(_))
    ));
}

#[test]
fn provider_worker_is_rejected_before_verification() {
    let sc = Scenario::case("cs1").unwrap();
    let ok = |_: &SystemSpec, _: &Candidate| Ok(());
    let inatt: BTreeSet<String> = names(&["TTPApp"]).into_iter().collect();
    let m = search_deployment(&sc.spec, &inatt, ThreatModel::TRUSTED, &ok).unwrap();
    assert_eq!(m.option.placements["TTPApp"], Placement::Proxy);
    assert_eq!(m.rejected.len(), 1);
    assert!(m.rejected[0].witness.contains("unobservable"), "{}", m.rejected[0].witness);
}

#[test]
fn nothing_passes_an_always_failing_verifier() {
    let sc = Scenario::case("cs2").unwrap();
    let no = |_: &SystemSpec, _: &Candidate| Err("insecure".to_string());
    let inatt: BTreeSet<String> = names(&["RPApp"]).into_iter().collect();
    match search_deployment(&sc.spec, &inatt, ThreatModel::TRUSTED, &no) {
        Err(DeployError::NoSecurePlacement(r)) => assert_eq!(r.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn verifier_output_parsing() {
    assert!(parse_results("RESULT event(a) ==> event(b) is true.\n").is_ok());
    assert!(parse_results("RESULT q1 is true.\nRESULT q2 is false.\n").is_err());
    assert!(parse_results("nothing here").is_err());
}

#[test]
fn testbed_oracle_reproduces_case_study_placements() {
    let expected: [&[(&str, Placement)]; 10] = [
        &[("TTPApp", Placement::Proxy)],
        &[("RPApp", Placement::ServiceWorker)],
        &[("RPApp", Placement::ServiceWorker), ("TTPApp", Placement::Proxy)],
        &[("RPApp", Placement::ServiceWorker)],
        &[("RPApp", Placement::ServiceWorker)],
        &[("RPApp", Placement::ServiceWorker)],
        &[("RPApp", Placement::ServiceWorker)],
        &[("ShopApp", Placement::Proxy)],
        &[("ShopApp", Placement::Proxy)],
        &[("ShopApp", Placement::Proxy)],
    ];
    for ((case, inatt), want) in experiments().into_iter().zip(expected) {
        let sc = Scenario::case(&case).unwrap();
        let threat = sc.threat;
        let oracle = TestbedOracle { scenario: sc.clone() };
        let m = search_deployment(&sc.spec, &inatt, threat, &oracle).unwrap();
        let got: Vec<(&str, Placement)> = m.option.placements.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(got, want, "{case} {inatt:?}: rejected {:?}", m.rejected);
    }
}

#[test]
fn composed_system_parses() {
    use bulwark_core::deploy::compose_spec;
    let cases: [(&str, &[(&str, Placement)]); 3] = [
        ("cs1", &[("RPApp", Placement::Both), ("TTPApp", Placement::Proxy)]),
        ("cs5", &[("RPApp", Placement::ServiceWorker)]),
        ("cs6", &[("ShopApp", Placement::Proxy)]),
    ];
    for (case, want) in cases {
        let sc = Scenario::case(case).unwrap();
        let inatt: BTreeSet<String> = want.iter().map(|(p, _)| p.to_string()).collect();
        let chosen = |_: &SystemSpec, c: &Candidate| {
            let hit = want.iter().all(|(p, pl)| c.option.placements.get(*p) == Some(pl));
            if hit {
                Ok(())
            } else {
                Err("not this one".to_string())
            }
        };
        let m = search_deployment(&sc.spec, &inatt, ThreatModel::TRUSTED, &chosen).unwrap();
        let text = compose_spec(&sc.spec, &Candidate { option: m.option, monitors: m.monitors });
        if let Err(e) = bulwark_core::parse_spec(&text) {
            panic!("{case}: {:#?}\n{text}", e.problems());
        }
        assert!(text.contains("Inattentive"));
    }
}

#[test]
fn search_returns_the_easiest_accepted_option() {
    use std::sync::Mutex;
    for (case, inatt) in [("cs1", names(&["RPApp", "TTPApp"])), ("cs6", names(&["ShopApp"]))] {
        let sc = Scenario::case(case).unwrap();
        let inatt: BTreeSet<String> = inatt.into_iter().collect();
        let oracle = TestbedOracle { scenario: sc.clone() };
        let accepted = Mutex::new(Vec::new());
        let record = |spec: &SystemSpec, c: &Candidate| {
            if bulwark_core::deploy::VerifierHook::verify(&oracle, spec, c).is_ok() {
                accepted.lock().unwrap().push(c.option.score());
            }
            Err("recorded".to_string())
        };
        let _ = search_deployment(&sc.spec, &inatt, sc.threat, &record);
        let best = search_deployment(&sc.spec, &inatt, sc.threat, &oracle).unwrap();
        let accepted = accepted.into_inner().unwrap();
        assert!(!accepted.is_empty());
        assert!(accepted.iter().all(|s| best.option.score() <= *s), "{case}: {} vs {accepted:?}", best.option.score());
    }
}

#[test]
fn payment_worker_is_elided_for_untrusted_clients() {
    let sc = Scenario::case("cs7").unwrap();
    assert!(!sc.threat.client_trusted);
    let inatt: BTreeSet<String> = names(&["ShopApp"]).into_iter().collect();
    let oracle = TestbedOracle { scenario: sc.clone() };
    let m = search_deployment(&sc.spec, &inatt, sc.threat, &oracle).unwrap();
    let sw = m.rejected.iter().find(|r| r.option.placements["ShopApp"] == Placement::ServiceWorker).unwrap();
    assert!(sw.witness.contains("unobservable"), "{}", sw.witness);
}

#[test]
fn worker_monitors_are_elided_for_untrusted_clients() {
    use bulwark_core::deploy::{DeployedMonitor, DeploymentOption, MonitorKind};
    use bulwark_core::testbed::oracle_verify;
    use bulwark_core::transform::{a2m_sw, SynthOptions};
    let sc = Scenario::case("cs2").unwrap();
    let rp = sc.spec.participant("RPApp").unwrap();
    let ua = sc.spec.participant_for_role("UA").unwrap();
    let monitor = a2m_sw(&sc.spec, rp, ua, SynthOptions::default()).unwrap();
    let candidate = Candidate {
        option: DeploymentOption { placements: [("RPApp".to_string(), Placement::ServiceWorker)].into() },
        monitors: vec![DeployedMonitor { participant: "RPApp".into(), kind: MonitorKind::ServiceWorker, monitor }],
    };
    assert!(oracle_verify(&sc, &candidate.effective(&ThreatModel::TRUSTED)).is_ok());
    let elided = candidate.effective(&ThreatModel::UNTRUSTED);
    assert!(elided.monitors.is_empty());
    let w = oracle_verify(&sc, &elided).unwrap_err();
    assert!(w.contains("#13"), "{w}");
}

#[test]
fn relay_channels_are_fresh() {
    let sc = Scenario::case("cs1").unwrap();
    let ok = |_: &SystemSpec, _: &Candidate| Ok(());
    let inatt: BTreeSet<String> = names(&["RPApp", "TTPApp"]).into_iter().collect();
    let m = search_deployment(&sc.spec, &inatt, ThreatModel::TRUSTED, &ok).unwrap();
    assert!(!m.mch.is_empty());
    let mut seen = BTreeSet::new();
    for relays in m.mch.values() {
        for (c, (to, from)) in relays {
            assert!(sc.spec.is_channel(c));
            for r in [to, from] {
                assert!(!sc.spec.is_channel(r) && !sc.spec.free_names.iter().any(|(n, _)| n == r), "{r}");
                assert!(seen.insert(r.clone()), "{r} reused");
            }
        }
    }
}

#[test]
fn provider_redirect_check_is_unobservable_by_a_worker() {
    use bulwark_core::transform::{a2m_sw, SynthOptions, TransformError};
    let sc = Scenario::case("cs1").unwrap();
    let ttp = sc.spec.participant("TTPApp").unwrap();
    let ua = sc.spec.participant_for_role("UA").unwrap();
    match a2m_sw(&sc.spec, ttp, ua, SynthOptions::default()) {
        Err(TransformError::Unobservable(w)) => assert!(w.contains("reduri") || w.contains("token"), "{w}"),
        other => panic!("{other:?}"),
    }
}
