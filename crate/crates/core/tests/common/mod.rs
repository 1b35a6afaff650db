// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::sync::OnceLock;

use rand::{Rng, RngCore};

use singleton_enclave::enclave::{Attributes, BlueprintPage, EnclaveBlueprint, PageSecInfo};
use singleton_enclave::scenario::Keys;
use singleton_enclave::sigstruct::SignerKey;

/// One key set per test binary; RSA-3072 generation is the slow part.
pub fn keys() -> Keys {
    static K: OnceLock<Keys> = OnceLock::new();
    K.get_or_init(|| Keys::generate(Some("integration")).expect("keygen")).clone()
}

pub fn other_signer() -> SignerKey {
    static K: OnceLock<SignerKey> = OnceLock::new();
    K.get_or_init(|| SignerKey::from_seed_label("integration", "rogue").expect("keygen"))
        .clone()
}

const SECINFOS: [PageSecInfo; 3] = [PageSecInfo::reg_rx(), PageSecInfo::reg_rw(), PageSecInfo::tcs()];

/// Blueprint with 1..=max_pages random pages, leaving the last page free.
pub fn random_blueprint<R: RngCore>(rng: &mut R, max_pages: usize) -> EnclaveBlueprint {
    let size_pages: u64 = 1 << rng.gen_range(4..=6);
    let n = rng.gen_range(1..=max_pages);
    let mut slots: Vec<u64> = (0..size_pages - 1).collect();
    for i in 0..n {
        let j = rng.gen_range(i..slots.len());
        slots.swap(i, j);
    }
    let mut offsets: Vec<u64> = slots[..n].to_vec();
    offsets.sort_unstable();
    let pages = offsets
        .into_iter()
        .map(|slot| {
            let mut content = vec![0u8; rng.gen_range(0..=4096)];
            rng.fill_bytes(&mut content);
            let si = SECINFOS[rng.gen_range(0..SECINFOS.len())];
            BlueprintPage::new(slot * 4096, &content, si).unwrap()
        })
        .collect();
    let attrs = Attributes::new(if rng.gen() { Attributes::MODE64 } else { Attributes::MODE64 | Attributes::DEBUG });
    EnclaveBlueprint::new(size_pages * 4096, attrs, pages).unwrap()
}
