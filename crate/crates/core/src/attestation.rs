// SPDX-License-Identifier: Apache-2.0

//! Hardware-analog attestation evidence.
//!
//! A [`Report`] is MACed with a platform-local key and reflects the
//! enclave's identity as fixed at EINIT. Anything the enclave does
//! afterwards, including being reconfigured, is invisible in its reports.
//! A [`Quote`] countersigns a report together with a verifier nonce using the
//! platform's RSA quoting key.

use std::fmt;

use base64::Engine as _;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{ct_eq, hmac_sha256, KeyError, RsaKey, RsaPublic, SIGNATURE_LEN};
use crate::enclave::{Attributes, InitializedEnclave};
use crate::hashcore::{sha256, sha256_concat, Digest};

pub const REPORTDATA_LEN: usize = 64;
pub const NONCE_LEN: usize = 32;
/// mrenclave ∥ mrsigner ∥ attributes ∥ isvprodid ∥ isvsvn ∥ reportdata
pub const REPORT_BODY_LEN: usize = 32 + 32 + 16 + 2 + 2 + REPORTDATA_LEN;
pub const REPORT_LEN: usize = REPORT_BODY_LEN + 32;
pub const QUOTE_LEN: usize = REPORT_LEN + NONCE_LEN + SIGNATURE_LEN;

pub type ReportData = [u8; REPORTDATA_LEN];
pub type Nonce = [u8; NONCE_LEN];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttestationError {
    #[error("report MAC does not verify under this platform")]
    BadReportMac,
    #[error("quote signature invalid")]
    QuoteSigInvalid,
    #[error("quote nonce does not match the session nonce")]
    NonceMismatch,
    #[error("malformed evidence: {0}")]
    Malformed(&'static str),
}

/// Per-platform secrets: the report MAC key and the quoting key.
#[derive(Clone)]
pub struct PlatformKeys {
    report_mac_key: [u8; 32],
    quoting_key: RsaKey,
    pub platform_id: String,
}

impl fmt::Debug for PlatformKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlatformKeys")
            .field("platform_id", &self.platform_id)
            .field("quoting_key", self.quoting_key.public())
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
struct PlatformKeysFile {
    platform_id: String,
    report_mac_key: String,
    quoting_key_pem: String,
}

impl PlatformKeys {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(
        rng: &mut R,
        platform_id: impl Into<String>,
    ) -> Result<Self, KeyError> {
        let mut report_mac_key = [0u8; 32];
        rng.fill_bytes(&mut report_mac_key);
        let quoting_key = RsaKey::generate(rng)?;
        Ok(PlatformKeys {
            report_mac_key,
            quoting_key,
            platform_id: platform_id.into(),
        })
    }

    /// Stands in for the attestation service's certificate for this platform.
    pub fn quoting_public(&self) -> &RsaPublic {
        self.quoting_key.public()
    }

    pub fn to_json(&self) -> Result<String, KeyError> {
        let file = PlatformKeysFile {
            platform_id: self.platform_id.clone(),
            report_mac_key: hex::encode(self.report_mac_key),
            quoting_key_pem: self.quoting_key.to_pkcs1_pem()?,
        };
        serde_json::to_string_pretty(&file).map_err(|e| KeyError::Encoding(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, KeyError> {
        let file: PlatformKeysFile =
            serde_json::from_str(text).map_err(|e| KeyError::Encoding(e.to_string()))?;
        let mut report_mac_key = [0u8; 32];
        hex::decode_to_slice(&file.report_mac_key, &mut report_mac_key)
            .map_err(|e| KeyError::Encoding(e.to_string()))?;
        Ok(PlatformKeys {
            report_mac_key,
            quoting_key: RsaKey::from_pkcs1_pem(&file.quoting_key_pem)?,
            platform_id: file.platform_id,
        })
    }

    fn mac(&self, body: &[u8; REPORT_BODY_LEN]) -> [u8; 32] {
        hmac_sha256(&self.report_mac_key, body).0
    }

    pub fn verify_report(&self, report: &Report) -> Result<(), AttestationError> {
        if ct_eq(&self.mac(&report.body_bytes()), &report.mac) {
            Ok(())
        } else {
            Err(AttestationError::BadReportMac)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Report {
    pub mrenclave: Digest,
    pub mrsigner: Digest,
    pub attributes: Attributes,
    pub isvprodid: u16,
    pub isvsvn: u16,
    pub reportdata: ReportData,
    pub mac: [u8; 32],
}

impl fmt::Debug for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Report")
            .field("mrenclave", &self.mrenclave)
            .field("mrsigner", &self.mrsigner)
            .field("attributes", &self.attributes)
            .field("isvprodid", &self.isvprodid)
            .field("isvsvn", &self.isvsvn)
            .field("reportdata", &hex::encode(self.reportdata))
            .finish_non_exhaustive()
    }
}

impl Report {
    pub fn body_bytes(&self) -> [u8; REPORT_BODY_LEN] {
        let mut out = [0u8; REPORT_BODY_LEN];
        out[..32].copy_from_slice(self.mrenclave.as_bytes());
        out[32..64].copy_from_slice(self.mrsigner.as_bytes());
        out[64..80].copy_from_slice(&self.attributes.0);
        out[80..82].copy_from_slice(&self.isvprodid.to_be_bytes());
        out[82..84].copy_from_slice(&self.isvsvn.to_be_bytes());
        out[84..].copy_from_slice(&self.reportdata);
        out
    }

    pub fn to_bytes(&self) -> [u8; REPORT_LEN] {
        let mut out = [0u8; REPORT_LEN];
        out[..REPORT_BODY_LEN].copy_from_slice(&self.body_bytes());
        out[REPORT_BODY_LEN..].copy_from_slice(&self.mac);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != REPORT_LEN {
            return Err(AttestationError::Malformed("report length"));
        }
        Ok(Report {
            mrenclave: Digest(bytes[..32].try_into().unwrap()),
            mrsigner: Digest(bytes[32..64].try_into().unwrap()),
            attributes: Attributes(bytes[64..80].try_into().unwrap()),
            isvprodid: u16::from_be_bytes(bytes[80..82].try_into().unwrap()),
            isvsvn: u16::from_be_bytes(bytes[82..84].try_into().unwrap()),
            reportdata: bytes[84..REPORT_BODY_LEN].try_into().unwrap(),
            mac: bytes[REPORT_BODY_LEN..].try_into().unwrap(),
        })
    }
}

/// EREPORT. Only initialization-time identity goes into the report; the
/// enclave's runtime configuration is never consulted.
pub fn create_report(platform: &PlatformKeys, enclave: &InitializedEnclave, reportdata: &ReportData) -> Report {
    let mut report = Report {
        mrenclave: enclave.mrenclave,
        mrsigner: enclave.mrsigner,
        attributes: enclave.attributes,
        isvprodid: enclave.isvprodid,
        isvsvn: enclave.isvsvn,
        reportdata: *reportdata,
        mac: [0; 32],
    };
    report.mac = platform.mac(&report.body_bytes());
    report
}

#[derive(Clone, PartialEq, Eq)]
pub struct Quote {
    pub report: Report,
    pub nonce: Nonce,
    pub signature: Box<[u8; SIGNATURE_LEN]>,
}

impl fmt::Debug for Quote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Quote")
            .field("report", &self.report)
            .field("nonce", &hex::encode(self.nonce))
            .finish_non_exhaustive()
    }
}

fn quote_digest(report: &Report, nonce: &Nonce) -> Digest {
    sha256_concat(&[&report.to_bytes(), nonce])
}

impl Quote {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(QUOTE_LEN);
        out.extend_from_slice(&self.report.to_bytes());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.signature[..]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttestationError> {
        if bytes.len() != QUOTE_LEN {
            return Err(AttestationError::Malformed("quote length"));
        }
        Ok(Quote {
            report: Report::from_bytes(&bytes[..REPORT_LEN])?,
            nonce: bytes[REPORT_LEN..REPORT_LEN + NONCE_LEN].try_into().unwrap(),
            signature: Box::new(bytes[REPORT_LEN + NONCE_LEN..].try_into().unwrap()),
        })
    }

    pub fn to_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(self.to_bytes())
    }

    pub fn from_base64(s: &str) -> Result<Self, AttestationError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s.trim())
            .map_err(|_| AttestationError::Malformed("invalid base64"))?;
        Self::from_bytes(&bytes)
    }
}

/// Quoting-enclave step: checks the report MAC locally, then signs.
pub fn create_quote(platform: &PlatformKeys, report: &Report, nonce: &Nonce) -> Result<Quote, AttestationError> {
    platform.verify_report(report)?;
    let signature = platform
        .quoting_key
        .sign_digest(&quote_digest(report, nonce))
        .map_err(|_| AttestationError::QuoteSigInvalid)?;
    Ok(Quote {
        report: *report,
        nonce: *nonce,
        signature: Box::new(signature),
    })
}

/// Verifier-side check. The same quote verifies any number of times;
/// rejecting repeats is up to the caller.
pub fn verify_quote(quote: &Quote, platform_pub: &RsaPublic, expected_nonce: &Nonce) -> Result<Report, AttestationError> {
    if !platform_pub.verify_digest(&quote_digest(&quote.report, &quote.nonce), &quote.signature[..]) {
        return Err(AttestationError::QuoteSigInvalid);
    }
    if !ct_eq(&quote.nonce, expected_nonce) {
        return Err(AttestationError::NonceMismatch);
    }
    Ok(quote.report)
}

/// reportdata binding a channel public key: SHA-256(key) ∥ 32 zero bytes.
pub fn bind_channel(channel_pub: &[u8]) -> ReportData {
    let mut out = [0u8; REPORTDATA_LEN];
    out[..32].copy_from_slice(sha256(channel_pub).as_bytes());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclave::InstancePage;
    use crate::seed;
    use std::sync::OnceLock;

    fn platform(label: &str) -> PlatformKeys {
        PlatformKeys::generate(&mut seed::seeded("attestation-unit", label), label).unwrap()
    }

    fn platform_a() -> &'static PlatformKeys {
        static P: OnceLock<PlatformKeys> = OnceLock::new();
        P.get_or_init(|| platform("a"))
    }

    fn platform_b() -> &'static PlatformKeys {
        static P: OnceLock<PlatformKeys> = OnceLock::new();
        P.get_or_init(|| platform("b"))
    }

    fn enclave() -> InitializedEnclave {
        InitializedEnclave {
            mrenclave: Digest([1; 32]),
            mrsigner: Digest([2; 32]),
            attributes: Attributes::new(Attributes::MODE64),
            isvprodid: 1,
            isvsvn: 2,
            instance_page: InstancePage::common(),
            runtime_config: None,
        }
    }

    #[test]
    fn report_copies_identity() {
        let e = enclave();
        let r = create_report(platform_a(), &e, &[7; 64]);
        assert_eq!(r.mrenclave, e.mrenclave);
        assert_eq!(r.mrsigner, e.mrsigner);
        assert!(platform_a().verify_report(&r).is_ok());
        let r2 = create_report(platform_a(), &e, &[8; 64]);
        assert!(platform_a().verify_report(&r2).is_ok());
        assert_eq!(platform_b().verify_report(&r), Err(AttestationError::BadReportMac));
        assert_eq!(Report::from_bytes(&r.to_bytes()).unwrap(), r);
    }

    #[test]
    fn report_ignores_runtime_config() {
        let mut e = enclave();
        let before = create_report(platform_a(), &e, &[3; 64]);
        e.runtime_config = Some(crate::enclave::Configuration::new().with("mode", "serve-reports"));
        let after = create_report(platform_a(), &e, &[3; 64]);
        assert_eq!(before.to_bytes(), after.to_bytes());
    }

    #[test]
    fn quote_round_trip_and_errors() {
        let r = create_report(platform_a(), &enclave(), &[0; 64]);
        let q = create_quote(platform_a(), &r, &[9; 32]).unwrap();
        assert_eq!(verify_quote(&q, platform_a().quoting_public(), &[9; 32]).unwrap(), r);
        assert_eq!(verify_quote(&q, platform_a().quoting_public(), &[9; 32]).unwrap(), r);
        assert_eq!(
            verify_quote(&q, platform_a().quoting_public(), &[8; 32]),
            Err(AttestationError::NonceMismatch)
        );
        assert_eq!(
            verify_quote(&q, platform_b().quoting_public(), &[9; 32]),
            Err(AttestationError::QuoteSigInvalid)
        );
        assert_eq!(Quote::from_bytes(&q.to_bytes()).unwrap(), q);
        assert_eq!(Quote::from_base64(&q.to_base64()).unwrap(), q);
        assert_eq!(q.to_bytes().len(), QUOTE_LEN);

        let mut bad = r;
        bad.mac[0] ^= 1;
        assert_eq!(create_quote(platform_a(), &bad, &[0; 32]), Err(AttestationError::BadReportMac));
    }

    #[test]
    fn channel_binding() {
        let a = bind_channel(b"key-a");
        assert_eq!(a, bind_channel(b"key-a"));
        assert!(a[32..].iter().all(|&b| b == 0));
        assert_ne!(a, bind_channel(b"key-b"));
        assert_eq!(&a[..32], sha256(b"key-a").as_bytes());
    }

    #[test]
    fn platform_json_round_trip() {
        let json = platform_a().to_json().unwrap();
        let back = PlatformKeys::from_json(&json).unwrap();
        let r = create_report(&back, &enclave(), &[1; 64]);
        assert!(platform_a().verify_report(&r).is_ok());
        assert_eq!(back.quoting_public(), platform_a().quoting_public());
    }
}
