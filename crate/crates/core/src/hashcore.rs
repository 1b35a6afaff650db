// SPDX-License-Identifier: Apache-2.0

//! Portable SHA-256 with block-boundary suspend/resume.
//!
//! Every 64 bytes of compressed input leave the hash in a self-contained
//! intermediate state: the eight chaining words plus the number of bytes
//! consumed so far. [`BaseEnclaveHash`] is the serialized form of such a
//! state. Enclave measurements are built out of 64-byte records, so a
//! measurement can be paused after the common part of an enclave and later
//! resumed by anyone holding the snapshot.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const BLOCK_LEN: usize = 64;
pub const DIGEST_LEN: usize = 32;

/// Serialized size of a [`BaseEnclaveHash`].
pub const BASE_HASH_LEN: usize = 45;
pub const BASE_HASH_MAGIC: [u8; 4] = *b"SINB";
pub const BASE_HASH_VERSION: u8 = 0x01;

/// Largest byte count whose bit length still fits the 64-bit padding field.
pub const MAX_MESSAGE_LEN: u64 = u64::MAX >> 3;

const IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];

thread_local! {
    static COMPRESSIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of compression-function invocations performed on the calling
/// thread since it started. Used to check that base-hash finalization does
/// a bounded amount of work.
pub fn compressions_on_this_thread() -> u64 {
    COMPRESSIONS.with(Cell::get)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("message exceeds the SHA-256 length limit")]
    MessageTooLong,
    #[error("snapshot requested with {pending} bytes buffered mid-block")]
    NotBlockAligned { pending: usize },
    #[error("malformed base enclave hash: {0}")]
    MalformedSnapshot(&'static str),
}

/// A 32-byte SHA-256 output (MRENCLAVE, MRSIGNER, ...).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl From<[u8; DIGEST_LEN]> for Digest {
    fn from(b: [u8; DIGEST_LEN]) -> Self {
        Digest(b)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Running SHA-256 state.
///
/// `length` counts bytes, not bits; it is converted to a bit count only when
/// the final padding block is written.
#[derive(Clone, PartialEq, Eq)]
pub struct HashState {
    h: [u32; 8],
    length: u64,
    pending: [u8; BLOCK_LEN],
}

impl Default for HashState {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for HashState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HashState")
            .field("h", &format_args!("{:08x?}", self.h))
            .field("length", &self.length)
            .field("pending", &hex::encode(self.pending()))
            .finish()
    }
}

impl HashState {
    pub fn new() -> Self {
        HashState {
            h: IV,
            length: 0,
            pending: [0; BLOCK_LEN],
        }
    }

    /// Total bytes fed through [`HashState::update`].
    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn chaining_words(&self) -> &[u32; 8] {
        &self.h
    }

    /// Bytes buffered but not yet compressed (`length mod 64` of them).
    pub fn pending(&self) -> &[u8] {
        &self.pending[..self.pending_len()]
    }

    fn pending_len(&self) -> usize {
        (self.length % BLOCK_LEN as u64) as usize
    }

    pub fn is_block_aligned(&self) -> bool {
        self.pending_len() == 0
    }

    pub fn update(&mut self, data: &[u8]) -> Result<(), HashError> {
        let new_len = self
            .length
            .checked_add(data.len() as u64)
            .filter(|&l| l <= MAX_MESSAGE_LEN)
            .ok_or(HashError::MessageTooLong)?;

        let mut input = data;
        let fill = self.pending_len();
        if fill > 0 {
            let take = (BLOCK_LEN - fill).min(input.len());
            self.pending[fill..fill + take].copy_from_slice(&input[..take]);
            input = &input[take..];
            if fill + take < BLOCK_LEN {
                self.length = new_len;
                return Ok(());
            }
            let block = self.pending;
            compress(&mut self.h, &block);
        }

        let mut blocks = input.chunks_exact(BLOCK_LEN);
        for block in &mut blocks {
            compress(&mut self.h, block.try_into().expect("64-byte chunk"));
        }
        let rest = blocks.remainder();
        self.pending[..rest.len()].copy_from_slice(rest);
        self.length = new_len;
        Ok(())
    }

    /// Builder-style [`HashState::update`].
    pub fn chain(mut self, data: &[u8]) -> Result<Self, HashError> {
        self.update(data)?;
        Ok(self)
    }

    pub fn finalize(self) -> Digest {
        let mut h = self.h;
        let fill = self.pending_len();
        let bit_len = self.length.wrapping_mul(8).to_be_bytes();

        let mut block = [0u8; BLOCK_LEN];
        block[..fill].copy_from_slice(&self.pending[..fill]);
        block[fill] = 0x80;
        if fill + 1 > BLOCK_LEN - 8 {
            compress(&mut h, &block);
            block = [0u8; BLOCK_LEN];
        }
        block[BLOCK_LEN - 8..].copy_from_slice(&bit_len);
        compress(&mut h, &block);
        digest_from_words(&h)
    }

    /// Snapshot the state. Only permitted at a block boundary.
    pub fn export_base(&self) -> Result<BaseEnclaveHash, HashError> {
        if !self.is_block_aligned() {
            return Err(HashError::NotBlockAligned {
                pending: self.pending_len(),
            });
        }
        Ok(BaseEnclaveHash {
            h: self.h,
            length: self.length,
        })
    }

    /// Continue a stream from a snapshot.
    pub fn resume(base: &BaseEnclaveHash) -> Self {
        HashState {
            h: base.h,
            length: base.length,
            pending: [0; BLOCK_LEN],
        }
    }
}

/// One-shot SHA-256.
pub fn sha256(data: &[u8]) -> Digest {
    let mut st = HashState::new();
    st.update(data).expect("in-memory buffers never reach 2^61 bytes");
    st.finalize()
}

/// SHA-256 over the concatenation of `parts`.
pub fn sha256_concat(parts: &[&[u8]]) -> Digest {
    let mut st = HashState::new();
    for p in parts {
        st.update(p).expect("in-memory buffers never reach 2^61 bytes");
    }
    st.finalize()
}

fn digest_from_words(h: &[u32; 8]) -> Digest {
    let mut out = [0u8; DIGEST_LEN];
    for (chunk, word) in out.chunks_exact_mut(4).zip(h) {
        chunk.copy_from_slice(&word.to_be_bytes());
    }
    Digest(out)
}

fn compress(h: &mut [u32; 8], block: &[u8; BLOCK_LEN]) {
    COMPRESSIONS.with(|c| c.set(c.get() + 1));

    let mut w = [0u32; 64];
    for (i, chunk) in block.chunks_exact(4).enumerate() {
        w[i] = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    for i in 16..64 {
        let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
        let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
        w[i] = w[i - 16]
            .wrapping_add(s0)
            .wrapping_add(w[i - 7])
            .wrapping_add(s1);
    }

    let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = *h;
    for i in 0..64 {
        let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
        let ch = (e & f) ^ (!e & g);
        let t1 = hh
            .wrapping_add(s1)
            .wrapping_add(ch)
            .wrapping_add(K[i])
            .wrapping_add(w[i]);
        let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
        let maj = (a & b) ^ (a & c) ^ (b & c);
        let t2 = s0.wrapping_add(maj);
        hh = g;
        g = f;
        f = e;
        e = d.wrapping_add(t1);
        d = c;
        c = b;
        b = a;
        a = t1.wrapping_add(t2);
    }

    for (word, v) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
        *word = word.wrapping_add(v);
    }
}

/// Serialized intermediate SHA-256 state of a paused enclave measurement.
///
/// Layout (45 bytes): `"SINB"` ∥ version `0x01` ∥ eight big-endian chaining
/// words ∥ big-endian byte count.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseEnclaveHash {
    h: [u32; 8],
    length: u64,
}

impl fmt::Debug for BaseEnclaveHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BaseEnclaveHash({})", self.to_hex())
    }
}

impl fmt::Display for BaseEnclaveHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl BaseEnclaveHash {
    /// Builds a snapshot from raw parts, validating alignment.
    pub fn from_parts(h: [u32; 8], length: u64) -> Result<Self, HashError> {
        if !length.is_multiple_of(BLOCK_LEN as u64) {
            return Err(HashError::MalformedSnapshot("length is not a multiple of 64"));
        }
        if length > MAX_MESSAGE_LEN {
            return Err(HashError::MalformedSnapshot("length exceeds SHA-256 limit"));
        }
        Ok(BaseEnclaveHash { h, length })
    }

    pub fn chaining_words(&self) -> &[u32; 8] {
        &self.h
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn to_bytes(&self) -> [u8; BASE_HASH_LEN] {
        let mut out = [0u8; BASE_HASH_LEN];
        out[..4].copy_from_slice(&BASE_HASH_MAGIC);
        out[4] = BASE_HASH_VERSION;
        for (i, word) in self.h.iter().enumerate() {
            out[5 + 4 * i..9 + 4 * i].copy_from_slice(&word.to_be_bytes());
        }
        out[37..].copy_from_slice(&self.length.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HashError> {
        if bytes.len() != BASE_HASH_LEN {
            return Err(HashError::MalformedSnapshot("wrong length"));
        }
        if bytes[..4] != BASE_HASH_MAGIC {
            return Err(HashError::MalformedSnapshot("bad magic"));
        }
        if bytes[4] != BASE_HASH_VERSION {
            return Err(HashError::MalformedSnapshot("unsupported version"));
        }
        let mut h = [0u32; 8];
        for (i, word) in h.iter_mut().enumerate() {
            *word = u32::from_be_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap());
        }
        let length = u64::from_be_bytes(bytes[37..].try_into().unwrap());
        Self::from_parts(h, length)
    }

    /// Lowercase hex, 90 characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        let bytes = hex::decode(s.trim()).map_err(|_| HashError::MalformedSnapshot("invalid hex"))?;
        Self::from_bytes(&bytes)
    }

    pub fn resume(&self) -> HashState {
        HashState::resume(self)
    }

    /// Finalizes the paused stream directly.
    ///
    /// A snapshot sits on a block boundary, so the padding is always exactly
    /// one block: a single compression regardless of how much input
    /// preceded it.
    pub fn finalize(&self) -> Digest {
        let mut h = self.h;
        let mut block = [0u8; BLOCK_LEN];
        block[0] = 0x80;
        block[BLOCK_LEN - 8..].copy_from_slice(&(self.length << 3).to_be_bytes());
        compress(&mut h, &block);
        digest_from_words(&h)
    }
}

impl FromStr for BaseEnclaveHash {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for BaseEnclaveHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BaseEnclaveHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
