// SPDX-License-Identifier: Apache-2.0

//! The untrusted starter and the simulated in-enclave runtime.
//!
//! The starter fetches an instance page and on-demand SIGSTRUCT from the
//! verifier, builds and initializes the enclave, and lets the runtime attest.
//! The runtime inspects its instance page: a common (zeroed) page means it
//! may be configured without attestation; any other page means the only way
//! to obtain a configuration is a successful attestation against the
//! verifier named in the page.

use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use crate::attestation::{bind_channel, create_quote, create_report, AttestationError, PlatformKeys, Report, ReportData};
use crate::codes::ErrorCode;
use crate::enclave::{
    einit, EinitError, EinitToken, EnclaveBlueprint, EnclaveError, InitializedEnclave, InstancePage, MeasuredEnclave,
};
use crate::seed::BoxRng;
use crate::sigstruct::SigStruct;
use crate::transport::{ClientError, IssuedMaterial, VerifierClient};
use crate::verifier::SecretsBundle;

#[derive(Debug, Error)]
pub enum StarterError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("enclave construction failed: {0}")]
    Construction(#[from] EnclaveError),
    #[error("EINIT failed: {0}")]
    Einit(#[from] EinitError),
    #[error(transparent)]
    Attestation(#[from] AttestationError),
    #[error("verifier identity {presented} does not match instance page {expected}")]
    VerifierIdentity { expected: String, presented: String },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl StarterError {
    /// Code reported by the verifier, if the failure came from it.
    pub fn verifier_code(&self) -> Option<ErrorCode> {
        match self {
            StarterError::Client(c) => c.code(),
            _ => None,
        }
    }

    pub fn code_str(&self) -> &'static str {
        match self {
            StarterError::VerifierIdentity { .. } => "E_VERIFIER_IDENTITY",
            other => other.verifier_code().map_or("E_STARTER", ErrorCode::as_str),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("singleton enclave accepts configuration only through attestation")]
    AttestationRequired,
    #[error("common enclave has nothing to attest for")]
    NotSingleton,
    #[error("enclave is already configured")]
    AlreadyConfigured,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuntimeState {
    /// Common enclave, not yet configured.
    Unconfigured,
    /// Singleton enclave waiting for its one attestation.
    AwaitingAttestation,
    Configured,
}

/// Simulated runtime inside an initialized enclave.
#[derive(Clone, Debug)]
pub struct EnclaveRuntime {
    enclave: InitializedEnclave,
    state: RuntimeState,
}

impl EnclaveRuntime {
    pub fn launch(enclave: InitializedEnclave) -> Self {
        let state = if enclave.instance_page.is_common() {
            RuntimeState::Unconfigured
        } else {
            RuntimeState::AwaitingAttestation
        };
        EnclaveRuntime { enclave, state }
    }

    pub fn enclave(&self) -> &InitializedEnclave {
        &self.enclave
    }

    pub fn state(&self) -> RuntimeState {
        self.state
    }

    pub fn requires_attestation(&self) -> bool {
        !self.enclave.instance_page.is_common()
    }

    /// Loads a configuration from outside without attestation, as a common
    /// enclave's runtime allows.
    pub fn configure_unattested(&mut self, config: SecretsBundle) -> Result<(), RuntimeError> {
        if self.requires_attestation() {
            return Err(RuntimeError::AttestationRequired);
        }
        self.enclave.runtime_config = Some(config);
        self.state = RuntimeState::Configured;
        Ok(())
    }

    fn accept_attested(&mut self, config: SecretsBundle) {
        self.enclave.runtime_config = Some(config);
        self.state = RuntimeState::Configured;
    }

    pub fn report(&self, platform: &PlatformKeys, reportdata: &ReportData) -> Report {
        create_report(platform, &self.enclave, reportdata)
    }
}

/// Ephemeral public key for one attestation attempt. Frames travel in
/// plaintext; only the public half is ever bound into evidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelKey {
    pub public: [u8; 32],
}

impl ChannelKey {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut public = [0u8; 32];
        rng.fill_bytes(&mut public);
        ChannelKey { public }
    }
}

#[derive(Clone, Debug)]
pub struct StartRequest {
    pub policy_name: String,
    pub blueprint: EnclaveBlueprint,
    pub common_sigstruct: SigStruct,
    pub verifier_address: String,
}

pub struct Starter {
    platform: Arc<PlatformKeys>,
    rng: BoxRng,
}

impl Starter {
    pub fn new(platform: Arc<PlatformKeys>, rng: BoxRng) -> Self {
        Starter { platform, rng }
    }

    pub fn platform(&self) -> &Arc<PlatformKeys> {
        &self.platform
    }

    pub fn request_singleton(&self, req: &StartRequest) -> Result<IssuedMaterial, StarterError> {
        let mut client = VerifierClient::connect(&req.verifier_address)?;
        let issued = client.request_singleton(&req.policy_name, &req.common_sigstruct)?;
        client.close();
        Ok(issued)
    }

    /// Builds the blueprint with `page` in the instance slot and runs EINIT
    /// with `sigstruct`.
    pub fn construct_singleton(
        &self,
        req: &StartRequest,
        page: &InstancePage,
        sigstruct: &SigStruct,
    ) -> Result<EnclaveRuntime, StarterError> {
        let bp = req.blueprint.with_instance_page(*page)?;
        let measured = MeasuredEnclave::from_blueprint(&bp)?;
        let enclave = einit(&measured, sigstruct, &EinitToken::default())?;
        Ok(EnclaveRuntime::launch(enclave))
    }

    /// The common enclave: zeroed instance page and the common SIGSTRUCT.
    pub fn construct_common(&self, req: &StartRequest) -> Result<EnclaveRuntime, StarterError> {
        self.construct_singleton(req, &InstancePage::common(), &req.common_sigstruct)
    }

    /// The runtime's attestation step, driven over a fresh connection.
    pub fn run_attestation(
        &mut self,
        runtime: &mut EnclaveRuntime,
        verifier_address: &str,
    ) -> Result<SecretsBundle, StarterError> {
        match runtime.state() {
            RuntimeState::AwaitingAttestation => {}
            RuntimeState::Configured => return Err(RuntimeError::AlreadyConfigured.into()),
            RuntimeState::Unconfigured => return Err(RuntimeError::NotSingleton.into()),
        }
        let page = runtime.enclave().instance_page;

        let mut client = VerifierClient::connect(verifier_address)?;
        let presented = client.verifier_identity();
        if presented != page.verifier_identity {
            client.close();
            return Err(StarterError::VerifierIdentity {
                expected: page.verifier_identity.to_hex(),
                presented: presented.to_hex(),
            });
        }

        let channel = ChannelKey::generate(&mut self.rng);
        let report = runtime.report(&self.platform, &bind_channel(&channel.public));
        let quote = create_quote(&self.platform, &report, client.nonce())?;
        let config = client.attest(&quote, &page.token, &channel.public)?;
        client.close();
        runtime.accept_attested(config.clone());
        Ok(config)
    }

    /// Whole flow: request, construct, attest.
    pub fn run_singleton(&mut self, req: &StartRequest) -> Result<(EnclaveRuntime, SecretsBundle), StarterError> {
        let issued = self.request_singleton(req)?;
        let mut runtime = self.construct_singleton(req, &issued.instance_page, &issued.sigstruct)?;
        let secrets = self.run_attestation(&mut runtime, &req.verifier_address)?;
        Ok((runtime, secrets))
    }
}
