// SPDX-License-Identifier: Apache-2.0

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use singleton_enclave::enclave::{
    base_hash_of, build_and_measure, einit, extend_with_instance_bytes, extend_with_instance_page, Attributes,
    BlueprintPage, EinitError, EinitToken, EnclaveBlueprint, InstancePage, MeasuredEnclave, PageSecInfo,
};
use singleton_enclave::hashcore::{Digest, HashState};
use singleton_enclave::sigstruct::{sign_common, SigStruct};

// Expected values below come from an independent Python model of the record
// stream (hashlib for digests, a pure-Python compression loop for the
// snapshot words).
const ORACLE_BASE_HEX: &str = "53494e4201b5c39ccb03efc2f72a84a4b7b2da90028f972c6a8bd001ffa0b9682245c53bbf00000000000028c0";
const ORACLE_NO_INSTANCE: &str = "47916679f228044a2ffeaee7507ae2834d4649134df51d7e8339314a99b0f76e";
const ORACLE_COMMON: &str = "49b492a7da5568f89f0f507c0badf69e797b8a77430c382c2be1460a9d71e320";
const ORACLE_SINGLETON: &str = "be73fe80e380c49d17d652618a1123fc4b42b3761777cfa6213cff2633ec5c4e";

fn two_page() -> EnclaveBlueprint {
    EnclaveBlueprint::new(
        16384,
        Attributes::new(Attributes::MODE64),
        vec![
            BlueprintPage::new(0, b"interpreter", PageSecInfo::reg_rx()).unwrap(),
            BlueprintPage::new(4096, b"data", PageSecInfo::reg_rw()).unwrap(),
        ],
    )
    .unwrap()
}

fn oracle_page() -> InstancePage {
    let token: [u8; 32] = std::array::from_fn(|i| i as u8);
    InstancePage::new(token, Digest([0xaa; 32]))
}

#[test]
fn frozen_vectors_match_oracle() {
    let bp = two_page();
    let base = base_hash_of(&bp).unwrap();
    assert_eq!(base.to_hex(), ORACLE_BASE_HEX);
    assert_eq!(base.length(), 10432);
    assert_eq!(base.finalize().to_hex(), ORACLE_NO_INSTANCE);
    assert_eq!(build_and_measure(&bp).unwrap().1.to_hex(), ORACLE_NO_INSTANCE);

    let off = bp.instance_page_offset();
    assert_eq!(off, 12288);
    assert_eq!(extend_with_instance_page(&base, &InstancePage::common(), off).unwrap().to_hex(), ORACLE_COMMON);
    assert_eq!(extend_with_instance_page(&base, &oracle_page(), off).unwrap().to_hex(), ORACLE_SINGLETON);
    let with_page = bp.with_instance_page(oracle_page()).unwrap();
    assert_eq!(build_and_measure(&with_page).unwrap().1.to_hex(), ORACLE_SINGLETON);
}

#[test]
fn log_replay_reproduces_mrenclave() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for _ in 0..10 {
        let bp = common::random_blueprint(&mut rng, 4).with_instance_page(oracle_page()).unwrap();
        let (log, mr) = build_and_measure(&bp).unwrap();
        let mut h = HashState::new();
        for r in log.records() {
            h.update(r).unwrap();
        }
        assert_eq!(h.length(), 64 * log.records().len() as u64);
        assert_eq!(h.finalize(), mr);
    }
}

#[test]
fn splice_equivalence_random() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..40 {
        let bp = common::random_blueprint(&mut rng, 8);
        let page = InstancePage::new(rng.gen(), Digest(rng.gen()));
        let spliced = extend_with_instance_page(&base_hash_of(&bp).unwrap(), &page, bp.instance_page_offset()).unwrap();
        let full = build_and_measure(&bp.with_instance_page(page).unwrap()).unwrap().1;
        assert_eq!(spliced, full);
    }
}

#[test]
fn page_order_matters() {
    let a = BlueprintPage::new(0, b"first", PageSecInfo::reg_rx()).unwrap();
    let b = BlueprintPage::new(4096, b"second", PageSecInfo::reg_rx()).unwrap();
    let swapped_a = BlueprintPage::new(0, b"second", PageSecInfo::reg_rx()).unwrap();
    let swapped_b = BlueprintPage::new(4096, b"first", PageSecInfo::reg_rx()).unwrap();
    let attrs = Attributes::new(Attributes::MODE64);
    let x = EnclaveBlueprint::new(16384, attrs, vec![a, b]).unwrap();
    let y = EnclaveBlueprint::new(16384, attrs, vec![swapped_a, swapped_b]).unwrap();
    assert_ne!(build_and_measure(&x).unwrap().1, build_and_measure(&y).unwrap().1);
}

#[test]
fn unmeasured_tail_of_instance_page_is_free() {
    let bp = two_page();
    let base = base_hash_of(&bp).unwrap();
    let mut raw = oracle_page().to_bytes();
    let honest = extend_with_instance_bytes(&base, &raw, bp.instance_page_offset()).unwrap();
    for i in [1024, 2048, 4095] {
        raw[i] ^= 0xff;
    }
    assert_eq!(extend_with_instance_bytes(&base, &raw, bp.instance_page_offset()).unwrap(), honest);
    raw[1023] ^= 1;
    assert_ne!(extend_with_instance_bytes(&base, &raw, bp.instance_page_offset()).unwrap(), honest);
}

#[test]
fn einit_rejects_any_single_bit_change() {
    let keys = common::keys();
    let bp = two_page();
    let (_, ss) = sign_common(&bp, &keys.signer, 1, 1, 0).unwrap();
    let measured = MeasuredEnclave::from_blueprint(&bp).unwrap();
    let ok = einit(&measured, &ss, &EinitToken::default()).unwrap();
    assert_eq!(ok.mrenclave, ss.body.mrenclave);
    assert_eq!(ok.mrsigner, keys.signer.mrsigner());
    assert!(ok.runtime_config.is_none());

    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for _ in 0..16 {
        let mut m = measured.clone();
        m.mrenclave.0[rng.gen_range(0..32)] ^= 1 << rng.gen_range(0..8);
        assert!(matches!(
            einit(&m, &ss, &EinitToken::default()),
            Err(EinitError::MrenclaveMismatch { .. })
        ));

        let mut bytes = ss.to_bytes();
        let i = rng.gen_range(0..bytes.len());
        bytes[i] ^= 1 << rng.gen_range(0..8);
        let rejected = match SigStruct::from_bytes(&bytes) {
            Ok(t) => einit(&measured, &t, &EinitToken::default()).is_err(),
            Err(_) => true,
        };
        assert!(rejected, "flip at byte {i} accepted");
    }
}

#[test]
fn einit_checks_attributes_under_mask() {
    let keys = common::keys();
    let bp = two_page();
    let (_, ss) = sign_common(&bp, &keys.signer, 1, 1, 0).unwrap();
    let debug_bp = EnclaveBlueprint::new(
        16384,
        Attributes::new(Attributes::MODE64 | Attributes::DEBUG),
        bp.pages().to_vec(),
    )
    .unwrap();
    // Same pages, so the same MRENCLAVE: only the attribute check can fail.
    let measured = MeasuredEnclave::from_blueprint(&debug_bp).unwrap();
    assert_eq!(measured.mrenclave, ss.body.mrenclave);
    assert!(matches!(
        einit(&measured, &ss, &EinitToken::default()),
        Err(EinitError::AttributeMismatch)
    ));
}
