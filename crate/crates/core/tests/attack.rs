// SPDX-License-Identifier: Apache-2.0

mod common;

use std::sync::Arc;

use singleton_enclave::adversary::{
    configure_report_server, report_server_config, run_attack_naive, run_attack_singleton, run_demo_with_keys,
    Impersonator, ReportServer, Strategy,
};
use singleton_enclave::attestation::{create_quote, verify_quote, ReportData};
use singleton_enclave::codes::ErrorCode;
use singleton_enclave::scenario::{Scenario, VICTIM_POLICY};
use singleton_enclave::seed;
use singleton_enclave::starter::{ChannelKey, RuntimeError};
use singleton_enclave::verifier::{EventKind, PolicyMode};

fn impersonator(sc: &Scenario) -> Impersonator {
    Impersonator::new(sc.address(), VICTIM_POLICY, ChannelKey::generate(&mut seed::seeded("atk", "imp")))
}

fn common_server(sc: &Scenario) -> ReportServer {
    let rt = sc.starter("adv").construct_common(&sc.start_request()).unwrap();
    ReportServer::from_runtime(rt, Arc::clone(&sc.keys.platform)).unwrap()
}

#[test]
fn report_server_is_indistinguishable() {
    let sc = Scenario::start(common::keys(), PolicyMode::Naive, Some("atk")).unwrap();
    let honest = sc.starter("h").construct_common(&sc.start_request()).unwrap();
    let server = configure_report_server(
        honest.enclave().clone(),
        Arc::clone(&sc.keys.platform),
        report_server_config(),
    );
    assert!(server.enclave().runtime_config.is_some());
    assert!(honest.enclave().runtime_config.is_none());
    for rd in [[0u8; 64], [0xffu8; 64], std::array::from_fn::<u8, 64, _>(|i| i as u8)] {
        let rd: ReportData = rd;
        let forged = server.report(&rd);
        assert_eq!(forged.to_bytes(), honest.report(&sc.keys.platform, &rd).to_bytes());
        assert!(sc.keys.platform.verify_report(&forged).is_ok());
        let q = server.quote(&rd, &[7; 32]).unwrap();
        assert!(verify_quote(&q, sc.keys.platform.quoting_public(), &[7; 32]).is_ok());
        let _ = create_quote(&sc.keys.platform, &forged, &[7; 32]).unwrap();
    }
}

#[test]
fn naive_attack_obtains_secrets() {
    let sc = Scenario::start(common::keys(), PolicyMode::Naive, Some("atk")).unwrap();
    let imp = impersonator(&sc);
    let secrets = run_attack_naive(&imp, &common_server(&sc)).unwrap();
    assert_eq!(secrets, sc.secrets);
    assert!(sc.verifier.events().iter().any(|e| e.kind == EventKind::AttestedNaive));
}

#[test]
fn singleton_attack_fails_every_strategy() {
    let sc = Scenario::start(common::keys(), PolicyMode::Singleton, Some("atk")).unwrap();
    let imp = impersonator(&sc);
    let server = common_server(&sc);

    let a = run_attack_singleton(&imp, &server, None).unwrap_err();
    assert_eq!(a.code(), Some(ErrorCode::TokenUnknown));

    let req = sc.start_request();
    let (rt, _) = sc.starter("victim").run_singleton(&req).unwrap();
    let b = run_attack_singleton(&imp, &server, Some(rt.enclave().instance_page.token)).unwrap_err();
    assert_eq!(b.code(), Some(ErrorCode::TokenUsed));

    let fresh = imp.request_fresh(&sc.common_sigstruct).unwrap();
    let c = run_attack_singleton(&imp, &server, Some(fresh.token)).unwrap_err();
    assert_eq!(c.code(), Some(ErrorCode::MrenclaveMismatch));

    // An older singleton, reconfigured after its attestation, fails the same way.
    let older = configure_report_server(rt.enclave().clone(), Arc::clone(&sc.keys.platform), report_server_config());
    let c2 = run_attack_singleton(&imp, &older, Some(fresh.token)).unwrap_err();
    assert_eq!(c2.code(), Some(ErrorCode::MrenclaveMismatch));

    assert!(!sc.verifier.events().iter().any(|e| e.kind == EventKind::AttestedNaive));
}

#[test]
fn fresh_singleton_cannot_become_a_report_server() {
    let sc = Scenario::start(common::keys(), PolicyMode::Singleton, Some("atk")).unwrap();
    let imp = impersonator(&sc);
    let issued = imp.request_fresh(&sc.common_sigstruct).unwrap();
    let st = sc.starter("adv");
    let rt = st.construct_singleton(&sc.start_request(), &issued.instance_page, &issued.sigstruct).unwrap();
    let err = ReportServer::from_runtime(rt, Arc::clone(&sc.keys.platform)).unwrap_err();
    assert_eq!(err, RuntimeError::AttestationRequired);
}

#[test]
fn demo_outcomes() {
    let keys = common::keys();
    let naive = run_demo_with_keys(keys.clone(), PolicyMode::Naive, None, Some("demo")).unwrap();
    assert!(naive.expected());
    assert_eq!(naive.obtained.as_ref(), Some(&naive.victim_secrets));
    for s in Strategy::ALL {
        let o = run_demo_with_keys(keys.clone(), PolicyMode::Singleton, Some(s), Some("demo")).unwrap();
        assert!(o.expected(), "{s}: {:?}", o.transcript);
        assert_eq!(o.code, Some(s.expected_code()));
        assert!(o.obtained.is_none());
    }
    let again = run_demo_with_keys(keys, PolicyMode::Naive, None, Some("demo")).unwrap();
    assert_eq!(again.transcript, naive.transcript);
}
