// SPDX-License-Identifier: Apache-2.0

//! Enclave construction and measurement.
//!
//! Construction is modeled as a stream of 64-byte measurement records hashed
//! with [`crate::hashcore`]:
//!
//! | record   | layout                                                        |
//! |----------|---------------------------------------------------------------|
//! | ECREATE  | `"ECREATE\0"` ∥ size (u64 BE) ∥ 48 zero bytes                  |
//! | EADD     | `"EADD\0\0\0\0"` ∥ offset (u64 BE) ∥ secinfo (u64 BE) ∥ 40 zeros |
//! | EEXTEND  | `"EEXTEND\0"` ∥ offset (u64 BE) ∥ 48 zeros, then the 256-byte chunk as four records |
//!
//! Regular pages get one EADD and sixteen EEXTENDs. The instance page that
//! individualizes a singleton enclave is always the last page of the enclave
//! and only its first 1024 bytes are measured (one EADD, four EEXTENDs).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashcore::{BaseEnclaveHash, Digest, HashError, HashState};
use crate::sigstruct::{SigError, SigStruct};

pub const PAGE_SIZE: u64 = 4096;
pub const EEXTEND_CHUNK: usize = 256;
pub const RECORD_LEN: usize = 64;
pub const MIN_ENCLAVE_SIZE: u64 = 8192;

/// Bytes of the instance page covered by the measurement.
pub const INSTANCE_MEASURED_LEN: usize = 1024;
pub const INSTANCE_PROTOCOL_VERSION: u32 = 1;

const ECREATE_TAG: &[u8; 8] = b"ECREATE\0";
const EADD_TAG: &[u8; 8] = b"EADD\0\0\0\0";
const EEXTEND_TAG: &[u8; 8] = b"EEXTEND\0";

pub type Record = [u8; RECORD_LEN];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnclaveError {
    #[error("invalid enclave size {0}: must be a power of two >= 8192")]
    InvalidSize(u64),
    #[error("reserved attribute bits set")]
    ReservedAttributes,
    #[error("offset {offset:#x} is not {align}-byte aligned")]
    Misaligned { offset: u64, align: u64 },
    #[error("offset {offset:#x} outside enclave of size {size:#x}")]
    OutOfRange { offset: u64, size: u64 },
    #[error("page offsets must be strictly increasing (at {0:#x})")]
    PageOrder(u64),
    #[error("EEXTEND chunk must be 256 bytes, got {0}")]
    ChunkLength(usize),
    #[error("page content exceeds 4096 bytes ({0})")]
    PageContentLength(usize),
    #[error("invalid secinfo flags {0:#x}")]
    InvalidSecInfo(u64),
    #[error("no free slot at {0:#x} for the instance page")]
    InstanceSlotOccupied(u64),
    #[error("invalid instance page: {0}")]
    InvalidInstancePage(&'static str),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Hash(#[from] HashError),
}

#[derive(Debug, Error)]
pub enum EinitError {
    #[error("SIGSTRUCT signature invalid")]
    SigInvalid(#[from] SigError),
    #[error("SIGSTRUCT mrenclave {expected} does not match measured {measured}")]
    MrenclaveMismatch { expected: Digest, measured: Digest },
    #[error("enclave attributes do not match SIGSTRUCT under its mask")]
    AttributeMismatch,
    #[error("launch denied")]
    LaunchDenied,
}

/// 128-bit enclave attribute field. Bit 0 is DEBUG, bit 1 is MODE64; bit `n`
/// lives in byte `n / 8`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Attributes(pub [u8; 16]);

impl Attributes {
    pub const DEBUG: u8 = 0b01;
    pub const MODE64: u8 = 0b10;
    const DEFINED: u8 = Self::DEBUG | Self::MODE64;

    pub const fn new(flags: u8) -> Self {
        let mut a = [0u8; 16];
        a[0] = flags;
        Attributes(a)
    }

    pub const fn all_ones() -> Self {
        Attributes([0xff; 16])
    }

    pub fn validate(&self) -> Result<(), EnclaveError> {
        if self.0[0] & !Self::DEFINED != 0 || self.0[1..].iter().any(|&b| b != 0) {
            return Err(EnclaveError::ReservedAttributes);
        }
        Ok(())
    }

    pub fn is_debug(&self) -> bool {
        self.0[0] & Self::DEBUG != 0
    }

    pub fn masked(&self, mask: &Attributes) -> Attributes {
        let mut out = [0u8; 16];
        for (o, (a, m)) in out.iter_mut().zip(self.0.iter().zip(&mask.0)) {
            *o = a & m;
        }
        Attributes(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 16];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Attributes(out))
    }
}

impl fmt::Debug for Attributes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Attributes({})", self.to_hex())
    }
}

impl Serialize for Attributes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Attributes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Attributes::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Page security information: R/W/X in bits 0..=2, page type in bits 8..=15.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct PageSecInfo {
    flags: u64,
}

impl PageSecInfo {
    pub const R: u64 = 1;
    pub const W: u64 = 2;
    pub const X: u64 = 4;
    pub const PT_REG: u64 = 0x01 << 8;
    pub const PT_TCS: u64 = 0x02 << 8;

    pub fn new(flags: u64) -> Result<Self, EnclaveError> {
        let page_type = flags & 0xff00;
        if flags & !(0x7 | 0xff00) != 0 || !(page_type == Self::PT_REG || page_type == Self::PT_TCS) {
            return Err(EnclaveError::InvalidSecInfo(flags));
        }
        Ok(PageSecInfo { flags })
    }

    pub const fn reg_rw() -> Self {
        PageSecInfo {
            flags: Self::PT_REG | Self::R | Self::W,
        }
    }

    pub const fn reg_rx() -> Self {
        PageSecInfo {
            flags: Self::PT_REG | Self::R | Self::X,
        }
    }

    pub const fn tcs() -> Self {
        PageSecInfo { flags: Self::PT_TCS }
    }

    pub fn flags(&self) -> u64 {
        self.flags
    }
}

/// One 4 KiB page of the enclave image.
#[derive(Clone, PartialEq, Eq)]
pub struct BlueprintPage {
    pub offset: u64,
    pub content: Box<[u8; PAGE_SIZE as usize]>,
    pub secinfo: PageSecInfo,
}

impl fmt::Debug for BlueprintPage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlueprintPage")
            .field("offset", &format_args!("{:#x}", self.offset))
            .field("secinfo", &self.secinfo)
            .finish_non_exhaustive()
    }
}

impl BlueprintPage {
    /// Zero-pads `content` to a full page.
    pub fn new(offset: u64, content: &[u8], secinfo: PageSecInfo) -> Result<Self, EnclaveError> {
        if content.len() > PAGE_SIZE as usize {
            return Err(EnclaveError::PageContentLength(content.len()));
        }
        let mut page = Box::new([0u8; PAGE_SIZE as usize]);
        page[..content.len()].copy_from_slice(content);
        Ok(BlueprintPage {
            offset,
            content: page,
            secinfo,
        })
    }
}

/// Page-by-page description of an enclave.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnclaveBlueprint {
    enclave_size: u64,
    attributes: Attributes,
    pages: Vec<BlueprintPage>,
    instance_page: Option<InstancePageBytes>,
}

impl EnclaveBlueprint {
    pub fn new(
        enclave_size: u64,
        attributes: Attributes,
        pages: Vec<BlueprintPage>,
    ) -> Result<Self, EnclaveError> {
        validate_size(enclave_size)?;
        attributes.validate()?;
        let mut prev: Option<u64> = None;
        for p in &pages {
            check_offset(p.offset, PAGE_SIZE, enclave_size)?;
            if prev.is_some_and(|q| p.offset <= q) {
                return Err(EnclaveError::PageOrder(p.offset));
            }
            prev = Some(p.offset);
        }
        Ok(EnclaveBlueprint {
            enclave_size,
            attributes,
            pages,
            instance_page: None,
        })
    }

    pub fn enclave_size(&self) -> u64 {
        self.enclave_size
    }

    pub fn attributes(&self) -> Attributes {
        self.attributes
    }

    pub fn pages(&self) -> &[BlueprintPage] {
        &self.pages
    }

    pub fn instance_page(&self) -> Option<&InstancePageBytes> {
        self.instance_page.as_ref()
    }

    /// The instance page always occupies the last page of the enclave.
    pub fn instance_page_offset(&self) -> u64 {
        self.enclave_size - PAGE_SIZE
    }

    pub fn has_free_instance_slot(&self) -> bool {
        self.pages
            .last()
            .is_none_or(|p| p.offset < self.instance_page_offset())
    }

    /// Returns a copy with `page` placed in the instance slot.
    pub fn with_instance_page(&self, page: impl Into<InstancePageBytes>) -> Result<Self, EnclaveError> {
        if !self.has_free_instance_slot() {
            return Err(EnclaveError::InstanceSlotOccupied(self.instance_page_offset()));
        }
        let mut bp = self.clone();
        bp.instance_page = Some(page.into());
        Ok(bp)
    }

    pub fn without_instance_page(&self) -> Self {
        EnclaveBlueprint {
            instance_page: None,
            ..self.clone()
        }
    }

    pub fn from_manifest_file(path: &Path) -> Result<Self, EnclaveError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnclaveError::Manifest(format!("{}: {e}", path.display())))?;
        let manifest: BlueprintManifest =
            serde_json::from_str(&text).map_err(|e| EnclaveError::Manifest(e.to_string()))?;
        manifest.into_blueprint(path.parent())
    }
}

fn validate_size(size: u64) -> Result<(), EnclaveError> {
    if size < MIN_ENCLAVE_SIZE || !size.is_power_of_two() {
        return Err(EnclaveError::InvalidSize(size));
    }
    Ok(())
}

fn check_offset(offset: u64, align: u64, size: u64) -> Result<(), EnclaveError> {
    if !offset.is_multiple_of(align) {
        return Err(EnclaveError::Misaligned { offset, align });
    }
    if offset >= size {
        return Err(EnclaveError::OutOfRange { offset, size });
    }
    Ok(())
}

/// JSON manifest describing an [`EnclaveBlueprint`].
///
/// ```json
/// {
///   "enclave_size": 65536,
///   "attributes": "02000000000000000000000000000000",
///   "pages": [
///     { "offset": 0, "secinfo": "0x105", "content_hex": "90c3" },
///     { "offset": 4096, "secinfo": 259, "file": "data.bin" }
///   ]
/// }
/// ```
///
/// `file` paths are relative to the manifest. Content shorter than a page
/// is zero-padded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlueprintManifest {
    pub enclave_size: u64,
    #[serde(default)]
    pub attributes: Option<String>,
    pub pages: Vec<ManifestPage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPage {
    pub offset: u64,
    pub secinfo: SecInfoValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SecInfoValue {
    Number(u64),
    Text(String),
}

impl SecInfoValue {
    fn value(&self) -> Result<u64, EnclaveError> {
        match self {
            SecInfoValue::Number(n) => Ok(*n),
            SecInfoValue::Text(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(h) => u64::from_str_radix(h, 16),
                    None => t.parse(),
                };
                parsed.map_err(|_| EnclaveError::Manifest(format!("bad secinfo {s:?}")))
            }
        }
    }
}

impl BlueprintManifest {
    pub fn into_blueprint(self, base_dir: Option<&Path>) -> Result<EnclaveBlueprint, EnclaveError> {
        let attributes = match &self.attributes {
            Some(h) => Attributes::from_hex(h)
                .map_err(|e| EnclaveError::Manifest(format!("attributes: {e}")))?,
            None => Attributes::new(Attributes::MODE64),
        };
        let mut pages = Vec::with_capacity(self.pages.len());
        for p in &self.pages {
            let content = match (&p.content_hex, &p.file) {
                (Some(h), None) => hex::decode(h)
                    .map_err(|e| EnclaveError::Manifest(format!("page {:#x}: {e}", p.offset)))?,
                (None, Some(f)) => {
                    let path = base_dir.map(|d| d.join(f)).unwrap_or_else(|| f.into());
                    std::fs::read(&path)
                        .map_err(|e| EnclaveError::Manifest(format!("{}: {e}", path.display())))?
                }
                (None, None) => Vec::new(),
                (Some(_), Some(_)) => {
                    return Err(EnclaveError::Manifest(format!(
                        "page {:#x}: give either content_hex or file",
                        p.offset
                    )))
                }
            };
            let secinfo = PageSecInfo::new(p.secinfo.value()?)?;
            pages.push(BlueprintPage::new(p.offset, &content, secinfo)?);
        }
        EnclaveBlueprint::new(self.enclave_size, attributes, pages)
    }

    pub fn from_blueprint(bp: &EnclaveBlueprint) -> Self {
        BlueprintManifest {
            enclave_size: bp.enclave_size,
            attributes: Some(bp.attributes.to_hex()),
            pages: bp
                .pages
                .iter()
                .map(|p| ManifestPage {
                    offset: p.offset,
                    secinfo: SecInfoValue::Text(format!("{:#x}", p.secinfo.flags())),
                    content_hex: Some(hex::encode(&p.content[..])),
                    file: None,
                })
                .collect(),
        }
    }
}

/// Ordered measurement records and the running hash over them.
#[derive(Clone, Debug)]
pub struct MeasurementLog {
    enclave_size: u64,
    attributes: Attributes,
    records: Vec<Record>,
    running: HashState,
}

impl MeasurementLog {
    /// ECREATE. Attributes are kept beside the log but are not hashed;
    /// EINIT checks them against the SIGSTRUCT instead.
    pub fn ecreate(size: u64, attributes: Attributes) -> Result<Self, EnclaveError> {
        validate_size(size)?;
        attributes.validate()?;
        let mut rec = [0u8; RECORD_LEN];
        rec[..8].copy_from_slice(ECREATE_TAG);
        rec[8..16].copy_from_slice(&size.to_be_bytes());
        let mut log = MeasurementLog {
            enclave_size: size,
            attributes,
            records: Vec::new(),
            running: HashState::new(),
        };
        log.push(rec)?;
        Ok(log)
    }

    fn push(&mut self, rec: Record) -> Result<(), EnclaveError> {
        self.running.update(&rec)?;
        self.records.push(rec);
        Ok(())
    }

    pub fn eadd(&mut self, offset: u64, secinfo: PageSecInfo) -> Result<(), EnclaveError> {
        check_offset(offset, PAGE_SIZE, self.enclave_size)?;
        let mut rec = [0u8; RECORD_LEN];
        rec[..8].copy_from_slice(EADD_TAG);
        rec[8..16].copy_from_slice(&offset.to_be_bytes());
        rec[16..24].copy_from_slice(&secinfo.flags().to_be_bytes());
        self.push(rec)
    }

    pub fn eextend(&mut self, offset: u64, chunk: &[u8]) -> Result<(), EnclaveError> {
        check_offset(offset, EEXTEND_CHUNK as u64, self.enclave_size)?;
        if chunk.len() != EEXTEND_CHUNK {
            return Err(EnclaveError::ChunkLength(chunk.len()));
        }
        let mut rec = [0u8; RECORD_LEN];
        rec[..8].copy_from_slice(EEXTEND_TAG);
        rec[8..16].copy_from_slice(&offset.to_be_bytes());
        self.push(rec)?;
        for part in chunk.chunks_exact(RECORD_LEN) {
            self.push(part.try_into().unwrap())?;
        }
        Ok(())
    }

    /// EADD followed by sixteen EEXTENDs covering the whole page.
    pub fn add_page(&mut self, page: &BlueprintPage) -> Result<(), EnclaveError> {
        self.eadd(page.offset, page.secinfo)?;
        for (i, chunk) in page.content.chunks_exact(EEXTEND_CHUNK).enumerate() {
            self.eextend(page.offset + (i * EEXTEND_CHUNK) as u64, chunk)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn running(&self) -> &HashState {
        &self.running
    }

    pub fn enclave_size(&self) -> u64 {
        self.enclave_size
    }

    pub fn attributes(&self) -> Attributes {
        self.attributes
    }

    pub fn mrenclave(&self) -> Digest {
        self.running.clone().finalize()
    }

    pub fn export_base(&self) -> Result<BaseEnclaveHash, EnclaveError> {
        Ok(self.running.export_base()?)
    }
}

/// Appends the instance-page records (EADD + four EEXTENDs over the measured
/// region) to a running measurement.
fn extend_instance_records(
    state: &mut HashState,
    page: &[u8; PAGE_SIZE as usize],
    page_offset: u64,
) -> Result<(), HashError> {
    let mut rec = [0u8; RECORD_LEN];
    rec[..8].copy_from_slice(EADD_TAG);
    rec[8..16].copy_from_slice(&page_offset.to_be_bytes());
    rec[16..24].copy_from_slice(&PageSecInfo::reg_rw().flags().to_be_bytes());
    state.update(&rec)?;
    for (i, chunk) in page[..INSTANCE_MEASURED_LEN].chunks_exact(EEXTEND_CHUNK).enumerate() {
        let mut hdr = [0u8; RECORD_LEN];
        hdr[..8].copy_from_slice(EEXTEND_TAG);
        hdr[8..16].copy_from_slice(&(page_offset + (i * EEXTEND_CHUNK) as u64).to_be_bytes());
        state.update(&hdr)?;
        state.update(chunk)?;
    }
    Ok(())
}

/// Measures `bp`: ECREATE, every page, then the instance page if present.
pub fn build_and_measure(bp: &EnclaveBlueprint) -> Result<(MeasurementLog, Digest), EnclaveError> {
    let mut log = measure_pages(bp)?;
    if let Some(page) = &bp.instance_page {
        let offset = bp.instance_page_offset();
        log.eadd(offset, PageSecInfo::reg_rw())?;
        for (i, chunk) in page.0[..INSTANCE_MEASURED_LEN]
            .chunks_exact(EEXTEND_CHUNK)
            .enumerate()
        {
            log.eextend(offset + (i * EEXTEND_CHUNK) as u64, chunk)?;
        }
    }
    let mrenclave = log.mrenclave();
    Ok((log, mrenclave))
}

fn measure_pages(bp: &EnclaveBlueprint) -> Result<MeasurementLog, EnclaveError> {
    let mut log = MeasurementLog::ecreate(bp.enclave_size, bp.attributes)?;
    for page in &bp.pages {
        log.add_page(page)?;
    }
    Ok(log)
}

/// Snapshot of the measurement after all regular pages and before the
/// instance page.
pub fn base_hash_of(bp: &EnclaveBlueprint) -> Result<BaseEnclaveHash, EnclaveError> {
    measure_pages(bp)?.export_base()
}

/// Resumes `base`, measures `page` at `page_offset` and finalizes.
pub fn extend_with_instance_page(
    base: &BaseEnclaveHash,
    page: &InstancePage,
    page_offset: u64,
) -> Result<Digest, EnclaveError> {
    extend_with_instance_bytes(base, &page.to_bytes(), page_offset)
}

/// Same as [`extend_with_instance_page`] over raw page bytes. Bytes past the
/// measured region do not influence the result.
pub fn extend_with_instance_bytes(
    base: &BaseEnclaveHash,
    page: &[u8; PAGE_SIZE as usize],
    page_offset: u64,
) -> Result<Digest, EnclaveError> {
    if !page_offset.is_multiple_of(PAGE_SIZE) {
        return Err(EnclaveError::Misaligned {
            offset: page_offset,
            align: PAGE_SIZE,
        });
    }
    let mut state = base.resume();
    extend_instance_records(&mut state, page, page_offset)?;
    Ok(state.finalize())
}

/// Verifier-issued page individualizing a singleton enclave.
///
/// Layout: token (32) ∥ verifier identity (32) ∥ protocol version (u32 BE),
/// zero to the end of the page. The all-zero page marks a common enclave.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct InstancePage {
    pub token: [u8; 32],
    pub verifier_identity: Digest,
    pub protocol_version: u32,
}

impl InstancePage {
    pub fn new(token: [u8; 32], verifier_identity: Digest) -> Self {
        InstancePage {
            token,
            verifier_identity,
            protocol_version: INSTANCE_PROTOCOL_VERSION,
        }
    }

    pub const fn common() -> Self {
        InstancePage {
            token: [0; 32],
            verifier_identity: Digest::ZERO,
            protocol_version: 0,
        }
    }

    pub fn is_common(&self) -> bool {
        *self == Self::common()
    }

    pub fn to_bytes(&self) -> [u8; PAGE_SIZE as usize] {
        let mut out = [0u8; PAGE_SIZE as usize];
        out[..32].copy_from_slice(&self.token);
        out[32..64].copy_from_slice(self.verifier_identity.as_bytes());
        out[64..68].copy_from_slice(&self.protocol_version.to_be_bytes());
        out
    }

    /// The measured prefix of the page.
    pub fn measured_bytes(&self) -> [u8; INSTANCE_MEASURED_LEN] {
        let mut out = [0u8; INSTANCE_MEASURED_LEN];
        out.copy_from_slice(&self.to_bytes()[..INSTANCE_MEASURED_LEN]);
        out
    }

    /// Parses either a full page or its measured prefix.
    pub fn parse(bytes: &[u8]) -> Result<Self, EnclaveError> {
        if bytes.len() != PAGE_SIZE as usize && bytes.len() != INSTANCE_MEASURED_LEN {
            return Err(EnclaveError::InvalidInstancePage("wrong length"));
        }
        if bytes[68..].iter().any(|&b| b != 0) {
            return Err(EnclaveError::InvalidInstancePage("non-zero reserved bytes"));
        }
        let page = InstancePage {
            token: bytes[..32].try_into().unwrap(),
            verifier_identity: Digest(bytes[32..64].try_into().unwrap()),
            protocol_version: u32::from_be_bytes(bytes[64..68].try_into().unwrap()),
        };
        if !page.is_common() && page.protocol_version != INSTANCE_PROTOCOL_VERSION {
            return Err(EnclaveError::InvalidInstancePage("unsupported protocol version"));
        }
        Ok(page)
    }
}

/// Raw contents of the instance slot as placed in a blueprint.
#[derive(Clone, PartialEq, Eq)]
pub struct InstancePageBytes(pub Box<[u8; PAGE_SIZE as usize]>);

impl fmt::Debug for InstancePageBytes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InstancePageBytes({}..)", hex::encode(&self.0[..68]))
    }
}

impl From<InstancePage> for InstancePageBytes {
    fn from(p: InstancePage) -> Self {
        InstancePageBytes(Box::new(p.to_bytes()))
    }
}

impl From<&InstancePage> for InstancePageBytes {
    fn from(p: &InstancePage) -> Self {
        InstancePageBytes(Box::new(p.to_bytes()))
    }
}

impl From<[u8; PAGE_SIZE as usize]> for InstancePageBytes {
    fn from(b: [u8; PAGE_SIZE as usize]) -> Self {
        InstancePageBytes(Box::new(b))
    }
}

/// Opaque key/value configuration handed to an enclave after attestation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    pub entries: BTreeMap<String, String>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.entries.insert(key.into(), value.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Configuration {
            entries: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

/// Flexible-launch-control EINITTOKEN: every enclave may launch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EinitToken {
    pub permit_all: bool,
}

impl Default for EinitToken {
    fn default() -> Self {
        EinitToken { permit_all: true }
    }
}

/// What the processor knows about a fully constructed enclave at EINIT time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasuredEnclave {
    pub mrenclave: Digest,
    pub attributes: Attributes,
    pub instance_page: InstancePage,
}

impl MeasuredEnclave {
    /// Builds and measures `bp`. A blueprint without an instance page is
    /// treated as carrying the common (zero) page.
    pub fn from_blueprint(bp: &EnclaveBlueprint) -> Result<Self, EnclaveError> {
        let (bp, instance_page) = match &bp.instance_page {
            Some(raw) => (bp.clone(), InstancePage::parse(&raw.0[..])?),
            None => (bp.with_instance_page(InstancePage::common())?, InstancePage::common()),
        };
        let (_, mrenclave) = build_and_measure(&bp)?;
        Ok(MeasuredEnclave {
            mrenclave,
            attributes: bp.attributes,
            instance_page,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitializedEnclave {
    pub mrenclave: Digest,
    pub mrsigner: Digest,
    pub attributes: Attributes,
    pub isvprodid: u16,
    pub isvsvn: u16,
    pub instance_page: InstancePage,
    /// Set after initialization; never part of the measurement.
    pub runtime_config: Option<Configuration>,
}

/// EINIT: checks the SIGSTRUCT signature, its MRENCLAVE and its attributes.
pub fn einit(
    measured: &MeasuredEnclave,
    ss: &SigStruct,
    token: &EinitToken,
) -> Result<InitializedEnclave, EinitError> {
    let signer = ss.verify()?;
    if ss.body.mrenclave != measured.mrenclave {
        return Err(EinitError::MrenclaveMismatch {
            expected: ss.body.mrenclave,
            measured: measured.mrenclave,
        });
    }
    let mask = ss.body.attribute_mask;
    if ss.body.attributes.masked(&mask) != measured.attributes.masked(&mask) {
        return Err(EinitError::AttributeMismatch);
    }
    if !token.permit_all {
        return Err(EinitError::LaunchDenied);
    }
    Ok(InitializedEnclave {
        mrenclave: measured.mrenclave,
        mrsigner: signer.mrsigner,
        attributes: measured.attributes,
        isvprodid: ss.body.isvprodid,
        isvsvn: ss.body.isvsvn,
        instance_page: measured.instance_page,
        runtime_config: None,
    })
}
