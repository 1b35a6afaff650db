// SPDX-License-Identifier: Apache-2.0

//! The reuse attack.
//!
//! A report server is a legitimately built enclave whose runtime was handed
//! an unmeasured configuration telling it to emit reports over whatever
//! reportdata it is given. Because reports describe the enclave as it was
//! at EINIT, those reports are indistinguishable from the honest enclave's.
//! The impersonator runs outside any enclave, speaks the verifier protocol
//! and binds its own channel key through the report server.
//!
//! The adversary controls the starter, the network and all client code. It
//! does not hold the platform keys (it can only ask the platform to MAC and
//! quote reports for enclaves it runs) or the verifier's signer key.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::attestation::{bind_channel, create_quote, AttestationError, Nonce, PlatformKeys, Quote, Report, ReportData};
use crate::codes::ErrorCode;
use crate::enclave::{Configuration, InitializedEnclave};
use crate::scenario::{Keys, Scenario, VICTIM_POLICY};
use crate::seed;
use crate::sigstruct::SigStruct;
use crate::starter::{ChannelKey, EnclaveRuntime, RuntimeError};
use crate::transport::{ClientError, IssuedMaterial, VerifierClient};
use crate::verifier::{PolicyMode, SecretsBundle, Token};

pub const REPORT_SERVER_MODE: (&str, &str) = ("runtime.mode", "serve-reports");

/// Enclave that answers any reportdata with a valid report. It has no
/// network listener; the impersonator calls it in-process.
#[derive(Clone, Debug)]
pub struct ReportServer {
    enclave: InitializedEnclave,
    platform: Arc<PlatformKeys>,
}

/// Installs `config` as the enclave's runtime configuration. Nothing about
/// the enclave's measured identity changes.
pub fn configure_report_server(
    mut enclave: InitializedEnclave,
    platform: Arc<PlatformKeys>,
    config: Configuration,
) -> ReportServer {
    enclave.runtime_config = Some(config);
    ReportServer { enclave, platform }
}

/// The configuration an adversary loads into the victim's runtime.
pub fn report_server_config() -> Configuration {
    Configuration::new().with(REPORT_SERVER_MODE.0, REPORT_SERVER_MODE.1)
}

impl ReportServer {
    /// Goes through the runtime's own configuration hook, which only
    /// common enclaves expose.
    pub fn from_runtime(mut runtime: EnclaveRuntime, platform: Arc<PlatformKeys>) -> Result<Self, RuntimeError> {
        runtime.configure_unattested(report_server_config())?;
        Ok(ReportServer {
            enclave: runtime.enclave().clone(),
            platform,
        })
    }

    pub fn enclave(&self) -> &InitializedEnclave {
        &self.enclave
    }

    pub fn report(&self, reportdata: &ReportData) -> Report {
        crate::attestation::create_report(&self.platform, &self.enclave, reportdata)
    }

    /// Report plus the platform's quote over it.
    pub fn quote(&self, reportdata: &ReportData, nonce: &Nonce) -> Result<Quote, AttestationError> {
        create_quote(&self.platform, &self.report(reportdata), nonce)
    }
}

pub struct Impersonator {
    pub verifier_address: String,
    pub policy_name: String,
    pub channel: ChannelKey,
}

impl Impersonator {
    pub fn new(verifier_address: impl Into<String>, policy_name: impl Into<String>, channel: ChannelKey) -> Self {
        Impersonator {
            verifier_address: verifier_address.into(),
            policy_name: policy_name.into(),
            channel,
        }
    }

    /// Anyone holding the public common SIGSTRUCT can ask for a token.
    pub fn request_fresh(&self, common: &SigStruct) -> Result<IssuedMaterial, ClientError> {
        let mut client = VerifierClient::connect(&self.verifier_address)?;
        let issued = client.request_singleton(&self.policy_name, common)?;
        client.close();
        Ok(issued)
    }

    fn evidence(&self, client: &VerifierClient, server: &ReportServer) -> Result<Quote, AttackError> {
        Ok(server.quote(&bind_channel(&self.channel.public), client.nonce())?)
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Evidence(#[from] AttestationError),
}

impl AttackError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            AttackError::Client(c) => c.code(),
            AttackError::Evidence(_) => None,
        }
    }
}

/// Against a naive policy this releases the victim's secrets to the
/// impersonator.
pub fn run_attack_naive(imp: &Impersonator, server: &ReportServer) -> Result<SecretsBundle, AttackError> {
    let mut client = VerifierClient::connect(&imp.verifier_address)?;
    let quote = imp.evidence(&client, server)?;
    let secrets = client.attest_naive(&quote, &imp.channel.public)?;
    client.close();
    Ok(secrets)
}

/// Submits report-server evidence under `stolen_token` (all zeros when
/// absent). A singleton verifier rejects every variant; `Ok` is a
/// regression.
pub fn run_attack_singleton(
    imp: &Impersonator,
    server: &ReportServer,
    stolen_token: Option<Token>,
) -> Result<SecretsBundle, AttackError> {
    let token = stolen_token.unwrap_or([0u8; 32]);
    let mut client = VerifierClient::connect(&imp.verifier_address)?;
    let quote = imp.evidence(&client, server)?;
    let secrets = client.attest(&quote, &token, &imp.channel.public)?;
    client.close();
    Ok(secrets)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// No token at all.
    NoToken,
    /// The token of an enclave that already attested.
    ReplayToken,
    /// A fresh token, but evidence from an enclave with a different page.
    MismatchedPage,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::NoToken, Strategy::ReplayToken, Strategy::MismatchedPage];

    pub fn expected_code(self) -> ErrorCode {
        match self {
            Strategy::NoToken => ErrorCode::TokenUnknown,
            Strategy::ReplayToken => ErrorCode::TokenUsed,
            Strategy::MismatchedPage => ErrorCode::MrenclaveMismatch,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Strategy::NoToken => 'a',
            Strategy::ReplayToken => 'b',
            Strategy::MismatchedPage => 'c',
        }
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Strategy::NoToken),
            "b" => Ok(Strategy::ReplayToken),
            "c" => Ok(Strategy::MismatchedPage),
            other => Err(format!("unknown strategy {other:?} (expected a, b or c)")),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Result of one scripted attack run.
#[derive(Clone, Debug)]
pub struct DemoOutcome {
    pub mode: PolicyMode,
    pub strategy: Option<Strategy>,
    pub transcript: Vec<String>,
    /// Secrets the impersonator walked away with.
    pub obtained: Option<SecretsBundle>,
    /// Error code the verifier answered with.
    pub code: Option<ErrorCode>,
    pub victim_secrets: SecretsBundle,
}

impl DemoOutcome {
    /// Naive mode: the attack must succeed with the exact secrets. Singleton
    /// mode: it must fail with the strategy's designated code and nothing
    /// released.
    pub fn expected(&self) -> bool {
        match (self.mode, self.strategy) {
            (PolicyMode::Naive, _) => self.obtained.as_ref() == Some(&self.victim_secrets),
            (PolicyMode::Singleton, Some(s)) => self.obtained.is_none() && self.code == Some(s.expected_code()),
            (PolicyMode::Singleton, None) => false,
        }
    }
}

/// Stands up a victim deployment in `mode` and attacks it. With a seed the
/// transcript is identical from run to run.
pub fn run_demo(mode: PolicyMode, strategy: Option<Strategy>, seed: Option<&str>) -> anyhow::Result<DemoOutcome> {
    let keys = Keys::generate(seed)?;
    run_demo_with_keys(keys, mode, strategy, seed)
}

pub fn run_demo_with_keys(
    keys: Keys,
    mode: PolicyMode,
    strategy: Option<Strategy>,
    seed: Option<&str>,
) -> anyhow::Result<DemoOutcome> {
    let scenario = Scenario::start(keys, mode, seed)?;
    let mut t = Vec::new();
    t.push(format!("victim policy {VICTIM_POLICY} registered in {mode:?} mode"));
    t.push(format!("common MRENCLAVE {}", scenario.common_sigstruct.body.mrenclave));

    // The adversary starts the victim's code as a common enclave and loads
    // the report-server configuration.
    let req = scenario.start_request();
    let starter = scenario.starter("adversary");
    let runtime = starter.construct_common(&req)?;
    let server = ReportServer::from_runtime(runtime, Arc::clone(&scenario.keys.platform))?;
    t.push(format!("report server MRENCLAVE {}", server.enclave().mrenclave));

    let mut rng = seed::rng_for(seed, "impersonator");
    let imp = Impersonator::new(scenario.address(), VICTIM_POLICY, ChannelKey::generate(&mut rng));
    t.push(format!("impersonator channel key {}", hex::encode(imp.channel.public)));

    let result = match mode {
        PolicyMode::Naive => run_attack_naive(&imp, &server),
        PolicyMode::Singleton => {
            let s = strategy.ok_or_else(|| anyhow::anyhow!("singleton mode needs a strategy"))?;
            t.push(format!("strategy {s}: {s:?}"));
            let token = match s {
                Strategy::NoToken => None,
                Strategy::ReplayToken => {
                    let mut honest = scenario.starter("victim");
                    let (rt, _) = honest.run_singleton(&req)?;
                    let token = rt.enclave().instance_page.token;
                    t.push(format!("honest enclave attested; token {} copied from its page", hex::encode(token)));
                    Some(token)
                }
                Strategy::MismatchedPage => {
                    let issued = imp.request_fresh(&scenario.common_sigstruct)?;
                    t.push(format!("fresh token {} issued to the impersonator", hex::encode(issued.token)));
                    // The only enclave whose evidence matches that token is
                    // the honest singleton, and its runtime has no hook for
                    // an unattested configuration.
                    let fresh = starter.construct_singleton(&req, &issued.instance_page, &issued.sigstruct)?;
                    let refused = ReportServer::from_runtime(fresh, Arc::clone(&scenario.keys.platform))
                        .err()
                        .map_or("accepted".to_owned(), |e| e.to_string());
                    t.push(format!("fresh singleton as report server: {refused}"));
                    Some(issued.token)
                }
            };
            run_attack_singleton(&imp, &server, token)
        }
    };

    let (obtained, code) = match result {
        Ok(secrets) => {
            t.push(format!("verifier released configuration with keys {:?}", secrets.entries.keys().collect::<Vec<_>>()));
            (Some(secrets), None)
        }
        Err(e) => {
            let code = e.code();
            t.push(format!("verifier rejected: {}", code.map_or("no code", ErrorCode::as_str)));
            if code.is_none() {
                t.push(format!("error: {e}"));
            }
            (None, code)
        }
    };
    let victim_secrets = scenario.secrets.clone();
    scenario.shutdown();
    Ok(DemoOutcome {
        mode,
        strategy,
        transcript: t,
        obtained,
        code,
        victim_secrets,
    })
}
