// SPDX-License-Identifier: Apache-2.0

//! The trusted verifier: policy store, attestation-token issuance with
//! on-demand SIGSTRUCTs, exactly-once attestation and secret release.
//!
//! Policies in [`PolicyMode::Naive`] follow the plain attestation protocol
//! (quote + channel binding, no token) and are kept to demonstrate the reuse
//! attack.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestation::{bind_channel, verify_quote, Nonce, Quote, Report};
use crate::codes::ErrorCode;
use crate::crypto::{ct_eq, RsaPublic};
use crate::enclave::{extend_with_instance_page, Attributes, Configuration, InstancePage};
use crate::hashcore::{BaseEnclaveHash, Digest};
use crate::seed::BoxRng;
use crate::sigstruct::{SigStruct, SignerKey};

pub type SecretsBundle = Configuration;
pub type Token = [u8; 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Naive,
    Singleton,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub name: String,
    pub mode: PolicyMode,
    pub base_hash: BaseEnclaveHash,
    pub common_sigstruct: SigStruct,
    pub expected_mrsigner: Digest,
    pub expected_attributes: Attributes,
    pub attribute_mask: Attributes,
    pub instance_page_offset: u64,
    pub secrets: SecretsBundle,
}

impl Policy {
    /// Fills the expected signer and attributes from `common_sigstruct`.
    pub fn new(
        name: impl Into<String>,
        mode: PolicyMode,
        base_hash: BaseEnclaveHash,
        common_sigstruct: SigStruct,
        instance_page_offset: u64,
        secrets: SecretsBundle,
    ) -> Self {
        Policy {
            name: name.into(),
            mode,
            base_hash,
            expected_mrsigner: common_sigstruct.mrsigner(),
            expected_attributes: common_sigstruct.body.attributes,
            attribute_mask: common_sigstruct.body.attribute_mask,
            common_sigstruct,
            instance_page_offset,
            secrets,
        }
    }

    /// The common SIGSTRUCT must be the base hash finalized with a zeroed
    /// instance page, and must be signed by the expected signer.
    pub fn check_consistency(&self) -> Result<(), RegistrationError> {
        let signer = self
            .common_sigstruct
            .verify()
            .map_err(|e| RegistrationError::PolicyInvalid(format!("common SIGSTRUCT: {e}")))?;
        if signer.mrsigner != self.expected_mrsigner {
            return Err(RegistrationError::PolicyInvalid("expected_mrsigner differs from SIGSTRUCT signer".into()));
        }
        let common = extend_with_instance_page(&self.base_hash, &InstancePage::common(), self.instance_page_offset)
            .map_err(|e| RegistrationError::PolicyInvalid(e.to_string()))?;
        if common != self.common_sigstruct.body.mrenclave {
            return Err(RegistrationError::PolicyInvalid(
                "common SIGSTRUCT does not match the base enclave hash".into(),
            ));
        }
        Ok(())
    }

    pub fn common_mrenclave(&self) -> Digest {
        self.common_sigstruct.body.mrenclave
    }
}

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("policy invalid: {0}")]
    PolicyInvalid(String),
    #[error("policy {0:?} already registered")]
    DuplicateName(String),
}

/// Failures visible to protocol clients. Each maps to one [`ErrorCode`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifierError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("presented SIGSTRUCT does not match the registered common SIGSTRUCT")]
    SigstructMismatch,
    #[error("quote rejected: {0}")]
    QuoteInvalid(String),
    #[error("unknown attestation token")]
    TokenUnknown,
    #[error("attestation token already used")]
    TokenUsed,
    #[error("MRENCLAVE {got} does not match expected {expected}")]
    MrenclaveMismatch { expected: Digest, got: Digest },
    #[error("MRSIGNER mismatch")]
    SignerMismatch,
    #[error("attributes mismatch under policy mask")]
    AttributeMismatch,
    #[error("reportdata does not bind the presented channel key")]
    ChannelBinding,
    #[error("verifier storage failure: {0}")]
    Storage(String),
}

impl VerifierError {
    /// Wire code. Storage failures have none; the session is dropped.
    pub fn code(&self) -> Option<ErrorCode> {
        Some(match self {
            VerifierError::UnknownPolicy(_) => ErrorCode::UnknownPolicy,
            VerifierError::SigstructMismatch => ErrorCode::SigstructInvalid,
            VerifierError::QuoteInvalid(_) => ErrorCode::QuoteInvalid,
            VerifierError::TokenUnknown => ErrorCode::TokenUnknown,
            VerifierError::TokenUsed => ErrorCode::TokenUsed,
            VerifierError::MrenclaveMismatch { .. } => ErrorCode::MrenclaveMismatch,
            VerifierError::SignerMismatch => ErrorCode::SignerMismatch,
            VerifierError::AttributeMismatch => ErrorCode::AttrMismatch,
            VerifierError::ChannelBinding => ErrorCode::ChannelBinding,
            VerifierError::Storage(_) => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenState {
    Issued,
    Consumed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenRecord {
    pub token: Token,
    pub policy_name: String,
    pub expected_mrenclave: Digest,
    pub issued_sigstruct: SigStruct,
    pub state: TokenState,
    pub issued_at: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum JournalEntry {
    Issued {
        token: String,
        policy: String,
        expected_mrenclave: Digest,
        sigstruct: SigStruct,
        issued_at: u64,
    },
    Consumed {
        token: String,
    },
}

const MAX_JOURNAL_RECORD: usize = 64 * 1024;

/// Token records plus an optional append-only journal. Each journal record
/// is a big-endian u32 length followed by a JSON object.
pub struct TokenRegistry {
    records: Mutex<HashMap<Token, TokenRecord>>,
    journal: Option<Mutex<File>>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum ConsumeError {
    Unknown,
    Used,
    Storage(String),
}

fn parse_token(s: &str) -> io::Result<Token> {
    let mut t = [0u8; 32];
    hex::decode_to_slice(s, &mut t).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    Ok(t)
}

impl TokenRegistry {
    pub fn in_memory() -> Self {
        TokenRegistry {
            records: Mutex::new(HashMap::new()),
            journal: None,
        }
    }

    /// Opens (or creates) a journal and replays it. A torn record at the end
    /// of the file is cut off.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).create(true).append(true).open(path)?;
        let mut data = Vec::new();
        file.read_to_end(&mut data)?;

        let mut records = HashMap::new();
        let mut pos = 0usize;
        while pos + 4 <= data.len() {
            let len = u32::from_be_bytes(data[pos..pos + 4].try_into().unwrap()) as usize;
            if len > MAX_JOURNAL_RECORD || pos + 4 + len > data.len() {
                break;
            }
            let entry: JournalEntry = serde_json::from_slice(&data[pos + 4..pos + 4 + len])
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            match entry {
                JournalEntry::Issued {
                    token,
                    policy,
                    expected_mrenclave,
                    sigstruct,
                    issued_at,
                } => {
                    let token = parse_token(&token)?;
                    records.insert(
                        token,
                        TokenRecord {
                            token,
                            policy_name: policy,
                            expected_mrenclave,
                            issued_sigstruct: sigstruct,
                            state: TokenState::Issued,
                            issued_at,
                        },
                    );
                }
                JournalEntry::Consumed { token } => {
                    let token = parse_token(&token)?;
                    match records.get_mut(&token) {
                        Some(r) => r.state = TokenState::Consumed,
                        None => {
                            return Err(io::Error::new(
                                io::ErrorKind::InvalidData,
                                "journal consumes a token it never issued",
                            ))
                        }
                    }
                }
            }
            pos += 4 + len;
        }
        if pos != data.len() {
            warn!("token journal {}: dropping {} trailing bytes", path.display(), data.len() - pos);
            file.set_len(pos as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(TokenRegistry {
            records: Mutex::new(records),
            journal: Some(Mutex::new(file)),
        })
    }

    fn append(&self, entry: &JournalEntry) -> io::Result<()> {
        let Some(journal) = &self.journal else {
            return Ok(());
        };
        let body = serde_json::to_vec(entry)?;
        let mut buf = Vec::with_capacity(body.len() + 4);
        buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
        buf.extend_from_slice(&body);
        let mut f = journal.lock();
        f.write_all(&buf)?;
        f.sync_data()
    }

    /// Returns `Ok(false)` if the token already exists.
    pub fn insert_issued(&self, record: TokenRecord) -> io::Result<bool> {
        let mut records = self.records.lock();
        if records.contains_key(&record.token) {
            return Ok(false);
        }
        self.append(&JournalEntry::Issued {
            token: hex::encode(record.token),
            policy: record.policy_name.clone(),
            expected_mrenclave: record.expected_mrenclave,
            sigstruct: record.issued_sigstruct.clone(),
            issued_at: record.issued_at,
        })?;
        records.insert(record.token, record);
        Ok(true)
    }

    pub fn get(&self, token: &Token) -> Option<TokenRecord> {
        self.records.lock().get(token).cloned()
    }

    /// Atomically moves `token` from issued to consumed. The transition is
    /// journaled before this returns `Ok`.
    pub fn consume(&self, token: &Token) -> Result<(), ConsumeError> {
        let mut records = self.records.lock();
        let record = records.get_mut(token).ok_or(ConsumeError::Unknown)?;
        if record.state == TokenState::Consumed {
            return Err(ConsumeError::Used);
        }
        record.state = TokenState::Consumed;
        // A failed journal write leaves the token burned in memory too.
        self.append(&JournalEntry::Consumed {
            token: hex::encode(token),
        })
        .map_err(|e| ConsumeError::Storage(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.records.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tokens(&self) -> Vec<Token> {
        self.records.lock().keys().copied().collect()
    }
}

/// Material handed to a starter for one singleton enclave.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SingletonIssue {
    pub token: Token,
    pub instance_page: InstancePage,
    pub sigstruct: SigStruct,
    pub expected_mrenclave: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Issued,
    AttestedSingleton,
    AttestedNaive,
    Rejected(Option<ErrorCode>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifierEvent {
    pub kind: EventKind,
    pub policy: Option<String>,
}

pub struct Verifier {
    signer: SignerKey,
    identity: Digest,
    platforms: RwLock<Vec<RsaPublic>>,
    policies: RwLock<HashMap<String, Arc<Policy>>>,
    registry: TokenRegistry,
    rng: Mutex<BoxRng>,
    events: Mutex<Vec<VerifierEvent>>,
}

impl Verifier {
    /// `signer` signs every on-demand SIGSTRUCT; its modulus digest is the
    /// verifier identity written into instance pages.
    pub fn new(signer: SignerKey, registry: TokenRegistry, rng: BoxRng) -> Self {
        let identity = signer.mrsigner();
        Verifier {
            signer,
            identity,
            platforms: RwLock::new(Vec::new()),
            policies: RwLock::new(HashMap::new()),
            registry,
            rng: Mutex::new(rng),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn with_journal(signer: SignerKey, journal: &Path, rng: BoxRng) -> io::Result<Self> {
        Ok(Self::new(signer, TokenRegistry::open(journal)?, rng))
    }

    pub fn identity(&self) -> Digest {
        self.identity
    }

    pub fn signer_public(&self) -> &RsaPublic {
        self.signer.public()
    }

    pub fn registry(&self) -> &TokenRegistry {
        &self.registry
    }

    pub fn trust_platform(&self, quoting_public: RsaPublic) {
        let mut p = self.platforms.write();
        if !p.contains(&quoting_public) {
            p.push(quoting_public);
        }
    }

    pub fn register_policy(&self, policy: Policy) -> Result<(), RegistrationError> {
        policy.check_consistency()?;
        if *policy.common_sigstruct.modulus != *self.signer.modulus() {
            return Err(RegistrationError::PolicyInvalid(
                "common SIGSTRUCT is not signed by this verifier's signer key".into(),
            ));
        }
        let mut policies = self.policies.write();
        if policies.contains_key(&policy.name) {
            return Err(RegistrationError::DuplicateName(policy.name));
        }
        info!("registered {:?} policy {}", policy.mode, policy.name);
        policies.insert(policy.name.clone(), Arc::new(policy));
        Ok(())
    }

    pub fn policy(&self, name: &str) -> Option<Arc<Policy>> {
        self.policies.read().get(name).cloned()
    }

    /// Re-runs the registration consistency check on every policy.
    pub fn recheck_policies(&self) -> Result<(), RegistrationError> {
        self.policies.read().values().try_for_each(|p| p.check_consistency())
    }

    pub fn fresh_nonce(&self) -> Nonce {
        let mut n = [0u8; 32];
        self.rng.lock().fill_bytes(&mut n);
        n
    }

    pub fn events(&self) -> Vec<VerifierEvent> {
        self.events.lock().clone()
    }

    fn record(&self, kind: EventKind, policy: Option<&str>) {
        self.events.lock().push(VerifierEvent {
            kind,
            policy: policy.map(str::to_owned),
        });
    }

    fn rejected<T>(&self, err: VerifierError, policy: Option<&str>) -> Result<T, VerifierError> {
        info!("rejected ({}): {err}", err.code().map_or("-", ErrorCode::as_str));
        self.record(EventKind::Rejected(err.code()), policy);
        Err(err)
    }

    fn instance_page_for(&self, token: Token) -> InstancePage {
        InstancePage::new(token, self.identity)
    }

    /// Recomputes the MRENCLAVE a singleton enclave for `token` must have.
    pub fn expected_mrenclave(&self, policy_name: &str, token: &Token) -> Result<Digest, VerifierError> {
        let policy = self
            .policy(policy_name)
            .ok_or_else(|| VerifierError::UnknownPolicy(policy_name.into()))?;
        self.expected_for(&policy, token)
    }

    fn expected_for(&self, policy: &Policy, token: &Token) -> Result<Digest, VerifierError> {
        extend_with_instance_page(&policy.base_hash, &self.instance_page_for(*token), policy.instance_page_offset)
            .map_err(|e| VerifierError::Storage(e.to_string()))
    }

    pub fn issue_singleton(&self, policy_name: &str, presented: &SigStruct) -> Result<SingletonIssue, VerifierError> {
        let Some(policy) = self.policy(policy_name).filter(|p| p.mode == PolicyMode::Singleton) else {
            return self.rejected(VerifierError::UnknownPolicy(policy_name.into()), Some(policy_name));
        };
        if presented.to_bytes() != policy.common_sigstruct.to_bytes() {
            return self.rejected(VerifierError::SigstructMismatch, Some(policy_name));
        }

        for _ in 0..8 {
            let mut token = [0u8; 32];
            self.rng.lock().fill_bytes(&mut token);
            if self.registry.get(&token).is_some() {
                continue;
            }
            let page = self.instance_page_for(token);
            let expected = self.expected_for(&policy, &token)?;
            let sigstruct = SigStruct::derive_singleton(&policy.common_sigstruct, expected, &self.signer)
                .map_err(|e| VerifierError::Storage(e.to_string()))?;
            let record = TokenRecord {
                token,
                policy_name: policy.name.clone(),
                expected_mrenclave: expected,
                issued_sigstruct: sigstruct.clone(),
                state: TokenState::Issued,
                issued_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            };
            if !self
                .registry
                .insert_issued(record)
                .map_err(|e| VerifierError::Storage(e.to_string()))?
            {
                continue;
            }
            self.record(EventKind::Issued, Some(policy_name));
            return Ok(SingletonIssue {
                token,
                instance_page: page,
                sigstruct,
                expected_mrenclave: expected,
            });
        }
        Err(VerifierError::Storage("token generator keeps repeating".into()))
    }

    fn verified_report(&self, quote: &Quote, nonce: &Nonce) -> Result<Report, VerifierError> {
        let platforms = self.platforms.read();
        let mut last = String::from("no trusted platform");
        for p in platforms.iter() {
            match verify_quote(quote, p, nonce) {
                Ok(r) => return Ok(r),
                Err(e) => last = e.to_string(),
            }
        }
        Err(VerifierError::QuoteInvalid(last))
    }

    fn check_identity(policy: &Policy, report: &Report, channel_pub: &[u8]) -> Result<(), VerifierError> {
        if report.mrsigner != policy.expected_mrsigner {
            return Err(VerifierError::SignerMismatch);
        }
        let mask = &policy.attribute_mask;
        if report.attributes.masked(mask) != policy.expected_attributes.masked(mask) {
            return Err(VerifierError::AttributeMismatch);
        }
        if !ct_eq(&report.reportdata, &bind_channel(channel_pub)) {
            return Err(VerifierError::ChannelBinding);
        }
        Ok(())
    }

    /// Singleton attestation. Secrets are released at most once per token.
    pub fn attest_singleton(
        &self,
        quote: &Quote,
        token: &Token,
        channel_pub: &[u8],
        session_nonce: &Nonce,
    ) -> Result<SecretsBundle, VerifierError> {
        let report = match self.verified_report(quote, session_nonce) {
            Ok(r) => r,
            Err(e) => return self.rejected(e, None),
        };
        let Some(record) = self.registry.get(token) else {
            return self.rejected(VerifierError::TokenUnknown, None);
        };
        let name = record.policy_name.as_str();
        if record.state == TokenState::Consumed {
            return self.rejected(VerifierError::TokenUsed, Some(name));
        }
        let Some(policy) = self.policy(name) else {
            return self.rejected(VerifierError::UnknownPolicy(name.into()), Some(name));
        };
        if report.mrenclave != record.expected_mrenclave {
            let err = VerifierError::MrenclaveMismatch {
                expected: record.expected_mrenclave,
                got: report.mrenclave,
            };
            return self.rejected(err, Some(name));
        }
        if let Err(e) = Self::check_identity(&policy, &report, channel_pub) {
            return self.rejected(e, Some(name));
        }
        match self.registry.consume(token) {
            Ok(()) => {}
            Err(ConsumeError::Used) => return self.rejected(VerifierError::TokenUsed, Some(name)),
            Err(ConsumeError::Unknown) => return self.rejected(VerifierError::TokenUnknown, Some(name)),
            Err(ConsumeError::Storage(s)) => return self.rejected(VerifierError::Storage(s), Some(name)),
        }
        info!("singleton attestation for {name} succeeded");
        self.record(EventKind::AttestedSingleton, Some(name));
        Ok(policy.secrets.clone())
    }

    /// Plain attestation: quote, identity and channel binding only.
    pub fn attest_naive(
        &self,
        quote: &Quote,
        channel_pub: &[u8],
        session_nonce: &Nonce,
    ) -> Result<SecretsBundle, VerifierError> {
        let report = match self.verified_report(quote, session_nonce) {
            Ok(r) => r,
            Err(e) => return self.rejected(e, None),
        };
        let policy = self
            .policies
            .read()
            .values()
            .find(|p| p.mode == PolicyMode::Naive && p.common_mrenclave() == report.mrenclave)
            .cloned();
        let Some(policy) = policy else {
            let err = VerifierError::MrenclaveMismatch {
                expected: Digest::ZERO,
                got: report.mrenclave,
            };
            return self.rejected(err, None);
        };
        if let Err(e) = Self::check_identity(&policy, &report, channel_pub) {
            return self.rejected(e, Some(&policy.name));
        }
        info!("naive attestation for {} succeeded", policy.name);
        self.record(EventKind::AttestedNaive, Some(&policy.name));
        Ok(policy.secrets.clone())
    }
}

/// Loads every `*.json` policy file in `dir`.
pub fn load_policy_dir(dir: &Path) -> io::Result<Vec<Policy>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclave::{base_hash_of, BlueprintPage, EnclaveBlueprint, PageSecInfo};
    use crate::seed;
    use crate::sigstruct::SigStructBody;
    use std::sync::OnceLock;

    fn signer() -> &'static SignerKey {
        static K: OnceLock<SignerKey> = OnceLock::new();
        K.get_or_init(|| SignerKey::from_seed_label("verifier-unit", "signer").unwrap())
    }

    fn other_signer() -> &'static SignerKey {
        static K: OnceLock<SignerKey> = OnceLock::new();
        K.get_or_init(|| SignerKey::from_seed_label("verifier-unit", "other").unwrap())
    }

    fn blueprint() -> EnclaveBlueprint {
        let page = BlueprintPage::new(0, b"interpreter", PageSecInfo::reg_rx()).unwrap();
        EnclaveBlueprint::new(16384, Attributes::new(Attributes::MODE64), vec![page]).unwrap()
    }

    fn policy(name: &str, mode: PolicyMode, key: &SignerKey) -> Policy {
        let bp = blueprint();
        let base = base_hash_of(&bp).unwrap();
        let off = bp.instance_page_offset();
        let common = extend_with_instance_page(&base, &InstancePage::common(), off).unwrap();
        let ss = SigStruct::sign(
            key,
            SigStructBody {
                date: 0,
                attributes: bp.attributes(),
                attribute_mask: Attributes::all_ones(),
                mrenclave: common,
                isvprodid: 1,
                isvsvn: 1,
            },
        )
        .unwrap();
        Policy::new(name, mode, base, ss, off, Configuration::new().with("API_KEY", "s3cret"))
    }

    fn verifier() -> Verifier {
        Verifier::new(signer().clone(), TokenRegistry::in_memory(), Box::new(seed::seeded("v", "rng")))
    }

    #[test]
    fn registration() {
        let v = verifier();
        v.register_policy(policy("p", PolicyMode::Singleton, signer())).unwrap();
        assert!(matches!(
            v.register_policy(policy("p", PolicyMode::Singleton, signer())),
            Err(RegistrationError::DuplicateName(_))
        ));
        assert!(v.recheck_policies().is_ok());

        let mut wrong_base = policy("q", PolicyMode::Singleton, signer());
        wrong_base.base_hash = crate::hashcore::HashState::new().export_base().unwrap();
        assert!(matches!(v.register_policy(wrong_base), Err(RegistrationError::PolicyInvalid(_))));

        assert!(matches!(
            v.register_policy(policy("r", PolicyMode::Singleton, other_signer())),
            Err(RegistrationError::PolicyInvalid(_))
        ));
    }

    #[test]
    fn issuance() {
        let v = verifier();
        let p = policy("p", PolicyMode::Singleton, signer());
        let common = p.common_sigstruct.clone();
        v.register_policy(p).unwrap();

        let a = v.issue_singleton("p", &common).unwrap();
        let b = v.issue_singleton("p", &common).unwrap();
        assert_ne!(a.token, b.token);
        assert_ne!(a.expected_mrenclave, b.expected_mrenclave);
        assert_ne!(a.sigstruct.signature, b.sigstruct.signature);
        assert_eq!(a.sigstruct.verify().unwrap().mrsigner, signer().mrsigner());
        assert_eq!(a.instance_page.verifier_identity, v.identity());
        assert_eq!(v.expected_mrenclave("p", &a.token).unwrap(), a.expected_mrenclave);
        assert_eq!(v.registry().get(&a.token).unwrap().expected_mrenclave, a.expected_mrenclave);
        assert_eq!(v.registry().len(), 2);

        let mut tampered = common.clone();
        tampered.body.isvsvn += 1;
        assert_eq!(v.issue_singleton("p", &tampered).unwrap_err(), VerifierError::SigstructMismatch);
        assert!(matches!(v.issue_singleton("nope", &common), Err(VerifierError::UnknownPolicy(_))));
        assert!(matches!(v.expected_mrenclave("nope", &a.token), Err(VerifierError::UnknownPolicy(_))));
    }

    #[test]
    fn naive_policy_cannot_issue() {
        let v = verifier();
        let p = policy("n", PolicyMode::Naive, signer());
        let common = p.common_sigstruct.clone();
        v.register_policy(p).unwrap();
        assert!(matches!(v.issue_singleton("n", &common), Err(VerifierError::UnknownPolicy(_))));
    }

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            VerifierError::UnknownPolicy(String::new()),
            VerifierError::SigstructMismatch,
            VerifierError::QuoteInvalid(String::new()),
            VerifierError::TokenUnknown,
            VerifierError::TokenUsed,
            VerifierError::MrenclaveMismatch {
                expected: Digest::ZERO,
                got: Digest::ZERO,
            },
            VerifierError::SignerMismatch,
            VerifierError::AttributeMismatch,
            VerifierError::ChannelBinding,
        ];
        let codes: std::collections::HashSet<_> = errs.iter().map(|e| e.code().unwrap()).collect();
        assert_eq!(codes.len(), errs.len());
        assert!(!codes.contains(&ErrorCode::Protocol));
        assert_eq!(VerifierError::Storage(String::new()).code(), None);
    }

    fn record(token: Token) -> TokenRecord {
        let p = policy("p", PolicyMode::Singleton, signer());
        TokenRecord {
            token,
            policy_name: "p".into(),
            expected_mrenclave: Digest([4; 32]),
            issued_sigstruct: p.common_sigstruct,
            state: TokenState::Issued,
            issued_at: 1,
        }
    }

    #[test]
    fn registry_consume_once() {
        let r = TokenRegistry::in_memory();
        assert!(r.insert_issued(record([1; 32])).unwrap());
        assert!(!r.insert_issued(record([1; 32])).unwrap());
        assert_eq!(r.consume(&[2; 32]), Err(ConsumeError::Unknown));
        assert_eq!(r.consume(&[1; 32]), Ok(()));
        assert_eq!(r.consume(&[1; 32]), Err(ConsumeError::Used));
    }

    #[test]
    fn journal_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.journal");
        {
            let r = TokenRegistry::open(&path).unwrap();
            r.insert_issued(record([1; 32])).unwrap();
            r.insert_issued(record([2; 32])).unwrap();
            r.consume(&[1; 32]).unwrap();
        }
        let r = TokenRegistry::open(&path).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.get(&[1; 32]).unwrap().state, TokenState::Consumed);
        assert_eq!(r.get(&[2; 32]).unwrap().state, TokenState::Issued);
        assert_eq!(r.consume(&[1; 32]), Err(ConsumeError::Used));
        assert_eq!(r.get(&[2; 32]).unwrap(), record([2; 32]));
    }

    #[test]
    fn journal_torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.journal");
        {
            let r = TokenRegistry::open(&path).unwrap();
            r.insert_issued(record([1; 32])).unwrap();
        }
        let good_len = std::fs::metadata(&path).unwrap().len();
        {
            let mut f = OpenOptions::new().append(true).open(&path).unwrap();
            f.write_all(&[0, 0, 0, 50, b'{']).unwrap();
        }
        let r = TokenRegistry::open(&path).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), good_len);
        r.consume(&[1; 32]).unwrap();
        drop(r);
        let r = TokenRegistry::open(&path).unwrap();
        assert_eq!(r.get(&[1; 32]).unwrap().state, TokenState::Consumed);
    }

    #[test]
    fn policy_dir_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = policy("p", PolicyMode::Naive, signer());
        std::fs::write(dir.path().join("p.json"), serde_json::to_string_pretty(&p).unwrap()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let loaded = load_policy_dir(dir.path()).unwrap();
        assert_eq!(loaded, vec![p]);
    }
}
