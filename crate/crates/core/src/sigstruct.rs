// SPDX-License-Identifier: Apache-2.0

//! SIGSTRUCT: the signed enclave identity checked at EINIT.
//!
//! Byte layout (big-endian integers):
//!
//! ```text
//!   0  header        "SINSIG01"
//!   8  date          u64, unix seconds
//!  16  attributes    16 bytes
//!  32  attr mask     16 bytes
//!  48  mrenclave     32 bytes
//!  80  isvprodid     u16
//!  82  isvsvn        u16
//!  84  modulus       384 bytes
//! 468  exponent      u32 (65537)
//! ---- 472 signed bytes ----
//! 472  signature     384 bytes, RSASSA-PKCS1-v1_5 / SHA-256
//! ```

use std::fmt;

use base64::Engine as _;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::{KeyError, RsaKey, RsaPublic, MODULUS_LEN, RSA_EXPONENT, SIGNATURE_LEN};
use crate::enclave::{base_hash_of, extend_with_instance_page, Attributes, EnclaveBlueprint, EnclaveError, InstancePage};
use crate::hashcore::{sha256, BaseEnclaveHash, Digest};
use crate::seed;

pub const SIGSTRUCT_HEADER: [u8; 8] = *b"SINSIG01";
pub const SIGNED_LEN: usize = 472;
pub const SIGSTRUCT_LEN: usize = SIGNED_LEN + SIGNATURE_LEN;

const OFF_DATE: usize = 8;
const OFF_ATTRIBUTES: usize = 16;
const OFF_MASK: usize = 32;
const OFF_MRENCLAVE: usize = 48;
const OFF_PRODID: usize = 80;
const OFF_SVN: usize = 82;
const OFF_MODULUS: usize = 84;
const OFF_EXPONENT: usize = 468;

#[derive(Debug, Error)]
pub enum SigError {
    #[error("SIGSTRUCT invalid: {0}")]
    Invalid(&'static str),
    #[error("signer key does not match the SIGSTRUCT modulus")]
    KeyMismatch,
    #[error(transparent)]
    Key(#[from] KeyError),
}

/// The enclave signer's RSA-3072 key.
#[derive(Clone, Debug)]
pub struct SignerKey(RsaKey);

impl SignerKey {
    /// Seeded keys are deterministic; unseeded keys use OS entropy.
    pub fn generate(seed: Option<[u8; 32]>) -> Result<Self, SigError> {
        match seed {
            Some(s) => {
                let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::from_seed(s);
                Self::generate_with(&mut rng)
            }
            None => Self::generate_with(&mut rand::rngs::OsRng),
        }
    }

    pub fn generate_with<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Self, SigError> {
        Ok(SignerKey(RsaKey::generate(rng)?))
    }

    /// Key derived from a master seed string and a label.
    pub fn from_seed_label(master: &str, label: &str) -> Result<Self, SigError> {
        Self::generate(Some(seed::derive_seed(master, label)))
    }

    pub fn public(&self) -> &RsaPublic {
        self.0.public()
    }

    pub fn modulus(&self) -> &[u8; MODULUS_LEN] {
        self.0.public().modulus()
    }

    pub fn mrsigner(&self) -> Digest {
        self.0.public().fingerprint()
    }

    pub fn to_pem(&self) -> Result<String, SigError> {
        Ok(self.0.to_pkcs1_pem()?)
    }

    pub fn from_pem(pem: &str) -> Result<Self, SigError> {
        Ok(SignerKey(RsaKey::from_pkcs1_pem(pem)?))
    }
}

/// MRSIGNER of a verified SIGSTRUCT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignerIdentity {
    pub mrsigner: Digest,
}

/// The signed, non-key fields of a SIGSTRUCT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SigStructBody {
    pub date: u64,
    pub attributes: Attributes,
    pub attribute_mask: Attributes,
    pub mrenclave: Digest,
    pub isvprodid: u16,
    pub isvsvn: u16,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SigStruct {
    pub body: SigStructBody,
    pub modulus: Box<[u8; MODULUS_LEN]>,
    pub exponent: u32,
    pub signature: Box<[u8; SIGNATURE_LEN]>,
}

impl fmt::Debug for SigStruct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigStruct")
            .field("body", &self.body)
            .field("mrsigner", &self.mrsigner())
            .finish_non_exhaustive()
    }
}

/// The 472 signed bytes for `body` under `modulus`/`exponent`.
pub fn canonical_bytes(body: &SigStructBody, modulus: &[u8; MODULUS_LEN], exponent: u32) -> [u8; SIGNED_LEN] {
    let mut out = [0u8; SIGNED_LEN];
    out[..OFF_DATE].copy_from_slice(&SIGSTRUCT_HEADER);
    out[OFF_DATE..OFF_ATTRIBUTES].copy_from_slice(&body.date.to_be_bytes());
    out[OFF_ATTRIBUTES..OFF_MASK].copy_from_slice(&body.attributes.0);
    out[OFF_MASK..OFF_MRENCLAVE].copy_from_slice(&body.attribute_mask.0);
    out[OFF_MRENCLAVE..OFF_PRODID].copy_from_slice(body.mrenclave.as_bytes());
    out[OFF_PRODID..OFF_SVN].copy_from_slice(&body.isvprodid.to_be_bytes());
    out[OFF_SVN..OFF_MODULUS].copy_from_slice(&body.isvsvn.to_be_bytes());
    out[OFF_MODULUS..OFF_EXPONENT].copy_from_slice(modulus);
    out[OFF_EXPONENT..].copy_from_slice(&exponent.to_be_bytes());
    out
}

impl SigStruct {
    pub fn sign(key: &SignerKey, body: SigStructBody) -> Result<Self, SigError> {
        let modulus = *key.modulus();
        let digest = sha256(&canonical_bytes(&body, &modulus, RSA_EXPONENT));
        let signature = key.0.sign_digest(&digest)?;
        Ok(SigStruct {
            body,
            modulus: Box::new(modulus),
            exponent: RSA_EXPONENT,
            signature: Box::new(signature),
        })
    }

    pub fn signed_bytes(&self) -> [u8; SIGNED_LEN] {
        canonical_bytes(&self.body, &self.modulus, self.exponent)
    }

    /// SHA-256 of the embedded modulus. Not authenticated on its own; use
    /// [`SigStruct::verify`].
    pub fn mrsigner(&self) -> Digest {
        sha256(&self.modulus[..])
    }

    /// Checks the signature under the embedded key.
    pub fn verify(&self) -> Result<SignerIdentity, SigError> {
        if self.exponent != RSA_EXPONENT {
            return Err(SigError::Invalid("unsupported exponent"));
        }
        let public =
            RsaPublic::from_modulus(&self.modulus).map_err(|_| SigError::Invalid("bad modulus"))?;
        let digest = sha256(&self.signed_bytes());
        if !public.verify_digest(&digest, &self.signature[..]) {
            return Err(SigError::Invalid("signature mismatch"));
        }
        Ok(SignerIdentity {
            mrsigner: public.fingerprint(),
        })
    }

    /// Re-signs `common` for a singleton enclave: identical except for
    /// MRENCLAVE and signature.
    pub fn derive_singleton(
        common: &SigStruct,
        singleton_mrenclave: Digest,
        key: &SignerKey,
    ) -> Result<SigStruct, SigError> {
        common.verify()?;
        if key.modulus() != &*common.modulus {
            return Err(SigError::KeyMismatch);
        }
        let body = SigStructBody {
            mrenclave: singleton_mrenclave,
            ..common.body
        };
        SigStruct::sign(key, body)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SIGSTRUCT_LEN);
        out.extend_from_slice(&self.signed_bytes());
        out.extend_from_slice(&self.signature[..]);
        out
    }

    /// Parses the 856-byte layout. Does not verify the signature.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SigError> {
        if bytes.len() != SIGSTRUCT_LEN {
            return Err(SigError::Invalid("wrong length"));
        }
        if bytes[..OFF_DATE] != SIGSTRUCT_HEADER {
            return Err(SigError::Invalid("bad header"));
        }
        let body = SigStructBody {
            date: u64::from_be_bytes(bytes[OFF_DATE..OFF_ATTRIBUTES].try_into().unwrap()),
            attributes: Attributes(bytes[OFF_ATTRIBUTES..OFF_MASK].try_into().unwrap()),
            attribute_mask: Attributes(bytes[OFF_MASK..OFF_MRENCLAVE].try_into().unwrap()),
            mrenclave: Digest(bytes[OFF_MRENCLAVE..OFF_PRODID].try_into().unwrap()),
            isvprodid: u16::from_be_bytes(bytes[OFF_PRODID..OFF_SVN].try_into().unwrap()),
            isvsvn: u16::from_be_bytes(bytes[OFF_SVN..OFF_MODULUS].try_into().unwrap()),
        };
        Ok(SigStruct {
            body,
            modulus: Box::new(bytes[OFF_MODULUS..OFF_EXPONENT].try_into().unwrap()),
            exponent: u32::from_be_bytes(bytes[OFF_EXPONENT..SIGNED_LEN].try_into().unwrap()),
            signature: Box::new(bytes[SIGNED_LEN..].try_into().unwrap()),
        })
    }

    pub fn to_base64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(self.to_bytes())
    }

    pub fn from_base64(s: &str) -> Result<Self, SigError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s.trim())
            .map_err(|_| SigError::Invalid("invalid base64"))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, SigError> {
        let bytes = hex::decode(s.trim()).map_err(|_| SigError::Invalid("invalid hex"))?;
        Self::from_bytes(&bytes)
    }
}

/// Signer-tool step: measures `bp` as a common enclave (zeroed instance
/// page) and signs it. Returns the base enclave hash alongside.
pub fn sign_common(
    bp: &EnclaveBlueprint,
    key: &SignerKey,
    isvprodid: u16,
    isvsvn: u16,
    date: u64,
) -> Result<(BaseEnclaveHash, SigStruct), CommonSignError> {
    let bp = bp.without_instance_page();
    let base = base_hash_of(&bp)?;
    let mrenclave = extend_with_instance_page(&base, &InstancePage::common(), bp.instance_page_offset())?;
    let body = SigStructBody {
        date,
        attributes: bp.attributes(),
        attribute_mask: Attributes::all_ones(),
        mrenclave,
        isvprodid,
        isvsvn,
    };
    Ok((base, SigStruct::sign(key, body)?))
}

#[derive(Debug, Error)]
pub enum CommonSignError {
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Sig(#[from] SigError),
}

impl Serialize for SigStruct {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for SigStruct {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SigStruct::from_base64(&s).map_err(serde::de::Error::custom)
    }
}
