// SPDX-License-Identifier: Apache-2.0

//! RSA-3072 PKCS#1 v1.5 signing keys and HMAC-SHA-256.

use std::fmt;

use rand::{CryptoRng, RngCore};
use rsa::pkcs1::{
    DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey, LineEnding,
};
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, Pkcs1v15Sign, RsaPrivateKey, RsaPublicKey};
use thiserror::Error;

use crate::hashcore::{sha256, Digest, HashState, BLOCK_LEN};

pub const RSA_BITS: usize = 3072;
pub const MODULUS_LEN: usize = RSA_BITS / 8;
pub const SIGNATURE_LEN: usize = MODULUS_LEN;
pub const RSA_EXPONENT: u32 = 65537;

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("key generation failed: {0}")]
    Generate(String),
    #[error("key encoding: {0}")]
    Encoding(String),
    #[error("expected a {RSA_BITS}-bit modulus with exponent 65537")]
    WrongShape,
    #[error("signing failed: {0}")]
    Sign(String),
}

/// An RSA-3072 private key with public exponent 65537.
#[derive(Clone)]
pub struct RsaKey {
    inner: RsaPrivateKey,
    public: RsaPublic,
}

impl fmt::Debug for RsaKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RsaKey")
            .field("fingerprint", &self.public.fingerprint())
            .finish_non_exhaustive()
    }
}

impl RsaKey {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Self, KeyError> {
        let inner = RsaPrivateKey::new_with_exp(&mut RngAdapter(rng), RSA_BITS, &BigUint::from(RSA_EXPONENT))
            .map_err(|e| KeyError::Generate(e.to_string()))?;
        Self::from_private(inner)
    }

    fn from_private(inner: RsaPrivateKey) -> Result<Self, KeyError> {
        let public = RsaPublic::from_public(inner.to_public_key())?;
        Ok(RsaKey { inner, public })
    }

    pub fn public(&self) -> &RsaPublic {
        &self.public
    }

    pub fn to_pkcs1_pem(&self) -> Result<String, KeyError> {
        self.inner
            .to_pkcs1_pem(LineEnding::LF)
            .map(|s| s.to_string())
            .map_err(|e| KeyError::Encoding(e.to_string()))
    }

    pub fn from_pkcs1_pem(pem: &str) -> Result<Self, KeyError> {
        let inner =
            RsaPrivateKey::from_pkcs1_pem(pem).map_err(|e| KeyError::Encoding(e.to_string()))?;
        Self::from_private(inner)
    }

    /// Deterministic RSASSA-PKCS1-v1_5 signature over a SHA-256 digest.
    pub fn sign_digest(&self, digest: &Digest) -> Result<[u8; SIGNATURE_LEN], KeyError> {
        let sig = self
            .inner
            .sign(Pkcs1v15Sign::new::<sha2::Sha256>(), digest.as_bytes())
            .map_err(|e| KeyError::Sign(e.to_string()))?;
        let mut out = [0u8; SIGNATURE_LEN];
        out.copy_from_slice(&sig);
        Ok(out)
    }
}

/// Public half of an [`RsaKey`].
#[derive(Clone, PartialEq, Eq)]
pub struct RsaPublic {
    key: RsaPublicKey,
    modulus: [u8; MODULUS_LEN],
}

impl fmt::Debug for RsaPublic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RsaPublic({})", self.fingerprint())
    }
}

impl RsaPublic {
    fn from_public(key: RsaPublicKey) -> Result<Self, KeyError> {
        if key.n().bits() != RSA_BITS || key.e() != &BigUint::from(RSA_EXPONENT) {
            return Err(KeyError::WrongShape);
        }
        let mut modulus = [0u8; MODULUS_LEN];
        modulus.copy_from_slice(&key.n().to_bytes_be());
        Ok(RsaPublic { key, modulus })
    }

    /// Rebuilds a public key from a big-endian modulus (exponent 65537).
    pub fn from_modulus(modulus: &[u8; MODULUS_LEN]) -> Result<Self, KeyError> {
        let key = RsaPublicKey::new(BigUint::from_bytes_be(modulus), BigUint::from(RSA_EXPONENT))
            .map_err(|e| KeyError::Encoding(e.to_string()))?;
        Self::from_public(key)
    }

    pub fn modulus(&self) -> &[u8; MODULUS_LEN] {
        &self.modulus
    }

    /// SHA-256 of the big-endian modulus.
    pub fn fingerprint(&self) -> Digest {
        sha256(&self.modulus)
    }

    pub fn verify_digest(&self, digest: &Digest, signature: &[u8]) -> bool {
        signature.len() == SIGNATURE_LEN
            && self
                .key
                .verify(Pkcs1v15Sign::new::<sha2::Sha256>(), digest.as_bytes(), signature)
                .is_ok()
    }

    pub fn to_pkcs1_pem(&self) -> Result<String, KeyError> {
        self.key
            .to_pkcs1_pem(LineEnding::LF)
            .map_err(|e| KeyError::Encoding(e.to_string()))
    }

    pub fn from_pkcs1_pem(pem: &str) -> Result<Self, KeyError> {
        let key = RsaPublicKey::from_pkcs1_pem(pem).map_err(|e| KeyError::Encoding(e.to_string()))?;
        Self::from_public(key)
    }
}

// `RsaPrivateKey::new` wants a sized RNG.
struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

impl<R: CryptoRng + ?Sized> CryptoRng for RngAdapter<'_, R> {}

/// HMAC-SHA-256 built on [`HashState`].
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> Digest {
    let mut block_key = [0u8; BLOCK_LEN];
    if key.len() > BLOCK_LEN {
        block_key[..32].copy_from_slice(sha256(key).as_bytes());
    } else {
        block_key[..key.len()].copy_from_slice(key);
    }
    let ipad = block_key.map(|b| b ^ 0x36);
    let opad = block_key.map(|b| b ^ 0x5c);

    let mut inner = HashState::new();
    inner.update(&ipad).expect("short input");
    inner.update(message).expect("short input");
    let inner = inner.finalize();

    let mut outer = HashState::new();
    outer.update(&opad).expect("short input");
    outer.update(inner.as_bytes()).expect("short input");
    outer.finalize()
}

/// Constant-time byte comparison.
pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
