// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use sha2::{Digest as _, Sha256};

use singleton_enclave::hashcore::{sha256, BaseEnclaveHash, HashError, HashState, BASE_HASH_LEN};

fn oracle(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_oracle(data in proptest::collection::vec(any::<u8>(), 0..8192)) {
        prop_assert_eq!(sha256(&data).0, oracle(&data));
    }

    #[test]
    fn arbitrary_split_is_invisible(data in proptest::collection::vec(any::<u8>(), 0..2048), cut in any::<prop::sample::Index>()) {
        let at = cut.index(data.len() + 1);
        let mut s = HashState::new();
        s.update(&data[..at]).unwrap();
        s.update(&data[at..]).unwrap();
        prop_assert_eq!(s.length(), data.len() as u64);
        prop_assert_eq!(s.pending().len(), data.len() % 64);
        prop_assert_eq!(s.finalize().0, oracle(&data));
    }

    #[test]
    fn export_resume_continues_stream(blocks in 0usize..64, tail in proptest::collection::vec(any::<u8>(), 0..300), seed in any::<u8>()) {
        let prefix: Vec<u8> = (0..blocks * 64).map(|i| (i as u8).wrapping_mul(seed)).collect();
        let mut s = HashState::new();
        s.update(&prefix).unwrap();
        let snap = s.export_base().unwrap();
        let bytes = snap.to_bytes();
        prop_assert_eq!(bytes.len(), BASE_HASH_LEN);
        let back = BaseEnclaveHash::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &snap);
        let mut r = HashState::resume(&back);
        prop_assert_eq!(r.export_base().unwrap(), snap);
        r.update(&tail).unwrap();
        let full = [prefix.as_slice(), tail.as_slice()].concat();
        prop_assert_eq!(r.finalize().0, oracle(&full));
        prop_assert_eq!(snap.finalize().0, oracle(&prefix));
    }

    #[test]
    fn hex_rendering_round_trips(blocks in 0u64..1_000_000, words in any::<[u32; 8]>()) {
        let b = BaseEnclaveHash::from_parts(words, blocks * 64).unwrap();
        let h = b.to_hex();
        prop_assert_eq!(h.len(), 90);
        prop_assert_eq!(BaseEnclaveHash::from_hex(&h).unwrap(), b);
    }
}

#[test]
fn mid_block_snapshot_rejected() {
    let mut s = HashState::new();
    s.update(&[0u8; 100]).unwrap();
    assert!(matches!(s.export_base(), Err(HashError::NotBlockAligned { pending: 36 })));
}

#[test]
fn malformed_snapshots_rejected() {
    let good = HashState::new().export_base().unwrap().to_bytes();
    let mut bad_magic = good;
    bad_magic[0] ^= 1;
    let mut bad_version = good;
    bad_version[4] = 2;
    let mut misaligned = good;
    misaligned[BASE_HASH_LEN - 1] = 1;
    for b in [&bad_magic[..], &bad_version[..], &misaligned[..], &good[..44]] {
        assert!(matches!(BaseEnclaveHash::from_bytes(b), Err(HashError::MalformedSnapshot(_))));
    }
}

#[test]
fn fresh_snapshot_finalizes_to_empty_digest() {
    let snap = HashState::new().export_base().unwrap();
    assert_eq!(snap.length(), 0);
    assert_eq!(
        snap.finalize().to_hex(),
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    );
}
