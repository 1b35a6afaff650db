// SPDX-License-Identifier: Apache-2.0

//! A self-contained victim deployment: signer and platform keys, a small
//! enclave blueprint, one registered policy and an in-process verifier
//! listening on loopback. Used by the attack demo, the retrieval benchmark
//! and the end-to-end tests.

use std::sync::Arc;

use anyhow::Context as _;

use crate::attestation::PlatformKeys;
use crate::enclave::{Attributes, BlueprintPage, EnclaveBlueprint, PageSecInfo};
use crate::hashcore::BaseEnclaveHash;
use crate::seed;
use crate::sigstruct::{sign_common, SigStruct, SignerKey};
use crate::starter::{StartRequest, Starter};
use crate::transport::{Server, ServerHandle};
use crate::verifier::{Policy, PolicyMode, SecretsBundle, TokenRegistry, Verifier};

pub const VICTIM_POLICY: &str = "victim-app";
pub const VICTIM_ENCLAVE_SIZE: u64 = 64 * 1024;

/// Keys the adversary never gets: the enclave signer (held by the verifier)
/// and the platform's report/quoting keys.
#[derive(Clone, Debug)]
pub struct Keys {
    pub signer: SignerKey,
    pub platform: Arc<PlatformKeys>,
}

impl Keys {
    pub fn generate(seed: Option<&str>) -> anyhow::Result<Self> {
        let signer = match seed {
            Some(s) => SignerKey::from_seed_label(s, "signer")?,
            None => SignerKey::generate(None)?,
        };
        let mut rng = seed::rng_for(seed, "platform");
        let platform = PlatformKeys::generate(&mut rng, "platform-0")?;
        Ok(Keys {
            signer,
            platform: Arc::new(platform),
        })
    }
}

/// Code page, data page and TCS; the last page of the enclave stays free
/// for the instance page.
pub fn sample_blueprint() -> EnclaveBlueprint {
    let code: Vec<u8> = b"sinclave-demo interpreter v1\n".iter().copied().cycle().take(4096).collect();
    let data = b"print(config['API_KEY'])\n";
    let pages = vec![
        BlueprintPage::new(0, &code, PageSecInfo::reg_rx()).expect("static page"),
        BlueprintPage::new(4096, data, PageSecInfo::reg_rw()).expect("static page"),
        BlueprintPage::new(8192, &[], PageSecInfo::tcs()).expect("static page"),
    ];
    EnclaveBlueprint::new(VICTIM_ENCLAVE_SIZE, Attributes::new(Attributes::MODE64), pages).expect("static blueprint")
}

/// The configuration the victim's verifier guards. Seeded runs get the same
/// values every time.
pub fn victim_secrets(seed: Option<&str>) -> SecretsBundle {
    let mut rng = seed::rng_for(seed, "victim-secrets");
    let mut key = [0u8; 16];
    rand::RngCore::fill_bytes(&mut rng, &mut key);
    SecretsBundle::new()
        .with("API_KEY", hex::encode(key))
        .with("DB_URL", "postgres://victim-db.internal/prod")
}

pub struct Scenario {
    pub keys: Keys,
    pub blueprint: EnclaveBlueprint,
    pub base_hash: BaseEnclaveHash,
    pub common_sigstruct: SigStruct,
    pub secrets: SecretsBundle,
    pub verifier: Arc<Verifier>,
    seed: Option<String>,
    server: Option<ServerHandle>,
}

impl Scenario {
    /// Registers the victim policy in `mode` and serves on 127.0.0.1:0.
    pub fn start(keys: Keys, mode: PolicyMode, seed: Option<&str>) -> anyhow::Result<Self> {
        Self::start_with_registry(keys, mode, seed, TokenRegistry::in_memory())
    }

    pub fn start_with_registry(
        keys: Keys,
        mode: PolicyMode,
        seed: Option<&str>,
        registry: TokenRegistry,
    ) -> anyhow::Result<Self> {
        let blueprint = sample_blueprint();
        let (base_hash, common_sigstruct) = sign_common(&blueprint, &keys.signer, 1, 1, 0)?;
        let secrets = victim_secrets(seed);
        let verifier = Verifier::new(keys.signer.clone(), registry, seed::rng_for(seed, "verifier"));
        verifier.trust_platform(keys.platform.quoting_public().clone());
        verifier.register_policy(Policy::new(
            VICTIM_POLICY,
            mode,
            base_hash,
            common_sigstruct.clone(),
            blueprint.instance_page_offset(),
            secrets.clone(),
        ))?;
        let verifier = Arc::new(verifier);
        let server = Server::bind("127.0.0.1:0", Arc::clone(&verifier))
            .and_then(Server::spawn)
            .context("starting verifier server")?;
        Ok(Scenario {
            keys,
            blueprint,
            base_hash,
            common_sigstruct,
            secrets,
            verifier,
            seed: seed.map(str::to_owned),
            server: Some(server),
        })
    }

    pub fn address(&self) -> String {
        self.server.as_ref().expect("server running").addr().to_string()
    }

    pub fn seed(&self) -> Option<&str> {
        self.seed.as_deref()
    }

    pub fn start_request(&self) -> StartRequest {
        StartRequest {
            policy_name: VICTIM_POLICY.into(),
            blueprint: self.blueprint.clone(),
            common_sigstruct: self.common_sigstruct.clone(),
            verifier_address: self.address(),
        }
    }

    /// A starter on the victim platform with its own RNG stream.
    pub fn starter(&self, label: &str) -> Starter {
        let rng = seed::rng_for(self.seed(), &format!("starter/{label}"));
        Starter::new(Arc::clone(&self.keys.platform), rng)
    }

    pub fn shutdown(mut self) {
        if let Some(s) = self.server.take() {
            s.shutdown();
        }
    }
}
