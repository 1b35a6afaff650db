// SPDX-License-Identifier: Apache-2.0

//! C ABI over the measurement primitives: the resumable hash, base enclave
//! hash finalization, instance-page splicing, SIGSTRUCT verification and
//! channel binding.
//!
//! Every fallible call returns an [`SeStatus`]. On failure a message for the
//! calling thread is available from [`se_last_error_message`]. Output buffers
//! are caller-allocated with the fixed lengths given by the `SE_*_LEN`
//! constants.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;
use std::slice;

use singleton_enclave::attestation::{bind_channel, REPORTDATA_LEN};
use singleton_enclave::enclave::{extend_with_instance_page, EnclaveError, InstancePage};
use singleton_enclave::hashcore::{sha256, BaseEnclaveHash, Digest, HashError, HashState, BASE_HASH_LEN, DIGEST_LEN};
use singleton_enclave::sigstruct::{SigError, SigStruct, SIGSTRUCT_LEN};

// Literal values so cbindgen can emit them; the asserts tie them to the core.
pub const SE_DIGEST_LEN: usize = 32;
pub const SE_BASE_HASH_LEN: usize = 45;
pub const SE_REPORT_DATA_LEN: usize = 64;
pub const SE_SIGSTRUCT_LEN: usize = 856;
pub const SE_TOKEN_LEN: usize = 32;

const _: () = {
    assert!(SE_DIGEST_LEN == DIGEST_LEN);
    assert!(SE_BASE_HASH_LEN == BASE_HASH_LEN);
    assert!(SE_REPORT_DATA_LEN == REPORTDATA_LEN);
    assert!(SE_SIGSTRUCT_LEN == SIGSTRUCT_LEN);
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotBlockAligned = 3,
    MalformedSnapshot = 4,
    MessageTooLong = 5,
    MalformedSigstruct = 6,
    SignatureInvalid = 7,
    Panic = 99,
}

/// Opaque running SHA-256 state.
pub struct SeHashState(HashState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SeStatus, msg: impl Into<String>) -> SeStatus {
    set_error(msg);
    status
}

impl From<&HashError> for SeStatus {
    fn from(e: &HashError) -> Self {
        match e {
            HashError::MessageTooLong => SeStatus::MessageTooLong,
            HashError::NotBlockAligned { .. } => SeStatus::NotBlockAligned,
            HashError::MalformedSnapshot(_) => SeStatus::MalformedSnapshot,
        }
    }
}

fn hash_err(e: HashError) -> SeStatus {
    fail(SeStatus::from(&e), e.to_string())
}

fn enclave_err(e: EnclaveError) -> SeStatus {
    let status = match &e {
        EnclaveError::Hash(h) => SeStatus::from(h),
        _ => SeStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`SeStatus::Panic`] instead of unwinding
/// across the C boundary.
fn guard(f: impl FnOnce() -> SeStatus) -> SeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SeStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `data` must be valid for `len` bytes unless `len` is zero.
unsafe fn input<'a>(data: *const u8, len: usize) -> Result<&'a [u8], SeStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(SeStatus::NullPointer, "null input buffer"));
    }
    Ok(slice::from_raw_parts(data, len))
}

/// # Safety
/// `out` must be null or valid for writes of `N` bytes.
unsafe fn write_out<const N: usize>(out: *mut u8, bytes: &[u8; N]) -> SeStatus {
    if out.is_null() {
        return fail(SeStatus::NullPointer, "null output buffer");
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), out, N);
    SeStatus::Ok
}

unsafe fn state<'a>(h: *mut SeHashState) -> Result<&'a mut HashState, SeStatus> {
    h.as_mut()
        .map(|s| &mut s.0)
        .ok_or_else(|| fail(SeStatus::NullPointer, "null hash handle"))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn se_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated name for `status`.
#[no_mangle]
pub extern "C" fn se_status_name(status: SeStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        SeStatus::Ok => b"SE_STATUS_OK\0",
        SeStatus::NullPointer => b"SE_STATUS_NULL_POINTER\0",
        SeStatus::InvalidArgument => b"SE_STATUS_INVALID_ARGUMENT\0",
        SeStatus::NotBlockAligned => b"SE_STATUS_NOT_BLOCK_ALIGNED\0",
        SeStatus::MalformedSnapshot => b"SE_STATUS_MALFORMED_SNAPSHOT\0",
        SeStatus::MessageTooLong => b"SE_STATUS_MESSAGE_TOO_LONG\0",
        SeStatus::MalformedSigstruct => b"SE_STATUS_MALFORMED_SIGSTRUCT\0",
        SeStatus::SignatureInvalid => b"SE_STATUS_SIGNATURE_INVALID\0",
        SeStatus::Panic => b"SE_STATUS_PANIC\0",
    };
    s.as_ptr().cast()
}

/// New hash state. Release with [`se_hash_free`].
#[no_mangle]
pub extern "C" fn se_hash_new() -> *mut SeHashState {
    Box::into_raw(Box::new(SeHashState(HashState::new())))
}

/// Resumes from a serialized base enclave hash (`SE_BASE_HASH_LEN` bytes).
///
/// # Safety
/// `base` must be valid for `len` bytes and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn se_hash_resume(base: *const u8, len: usize, out: *mut *mut SeHashState) -> SeStatus {
    guard(|| {
        if out.is_null() {
            return fail(SeStatus::NullPointer, "null output handle");
        }
        let bytes = tri!(input(base, len));
        let snap = tri!(BaseEnclaveHash::from_bytes(bytes).map_err(hash_err));
        *out = Box::into_raw(Box::new(SeHashState(HashState::resume(&snap))));
        SeStatus::Ok
    })
}

/// # Safety
/// `h` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn se_hash_free(h: *mut SeHashState) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `data` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_hash_update(h: *mut SeHashState, data: *const u8, len: usize) -> SeStatus {
    guard(|| {
        let s = tri!(state(h));
        let d = tri!(input(data, len));
        tri!(s.update(d).map_err(hash_err));
        SeStatus::Ok
    })
}

/// Total bytes absorbed so far, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn se_hash_length(h: *const SeHashState) -> u64 {
    h.as_ref().map_or(0, |s| s.0.length())
}

/// Serializes the state. Fails with `NOT_BLOCK_ALIGNED` mid-block.
///
/// # Safety
/// `h` must be a live handle; `out` must hold `SE_BASE_HASH_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_hash_export_base(h: *const SeHashState, out: *mut u8) -> SeStatus {
    guard(|| {
        let s = tri!(state(h.cast_mut()));
        let snap = tri!(s.export_base().map_err(hash_err));
        write_out(out, &snap.to_bytes())
    })
}

/// Writes the digest of everything absorbed. The handle stays usable.
///
/// # Safety
/// `h` must be a live handle; `out` must hold `SE_DIGEST_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_hash_finalize(h: *const SeHashState, out: *mut u8) -> SeStatus {
    guard(|| {
        let s = tri!(state(h.cast_mut()));
        write_out(out, &s.clone().finalize().0)
    })
}

/// One-shot SHA-256.
///
/// # Safety
/// `data` must be valid for `len` bytes; `out` must hold `SE_DIGEST_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_sha256(data: *const u8, len: usize, out: *mut u8) -> SeStatus {
    guard(|| {
        let d = tri!(input(data, len));
        write_out(out, &sha256(d).0)
    })
}

/// Finalizes a serialized base enclave hash with no further input.
///
/// # Safety
/// `base` must be valid for `len` bytes; `out` must hold `SE_DIGEST_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_base_finalize(base: *const u8, len: usize, out: *mut u8) -> SeStatus {
    guard(|| {
        let bytes = tri!(input(base, len));
        let snap = tri!(BaseEnclaveHash::from_bytes(bytes).map_err(hash_err));
        write_out(out, &snap.finalize().0)
    })
}

/// MRENCLAVE of the enclave whose base hash is `base` once the instance page
/// built from `token` and `verifier_identity` is added at `page_offset`.
/// Passing null for both `token` and `verifier_identity` selects the all-zero
/// common page.
///
/// # Safety
/// `base` must be valid for `base_len` bytes. `token` and `verifier_identity`
/// must each be null or valid for 32 bytes. `out` must hold `SE_DIGEST_LEN`
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn se_extend_with_instance_page(
    base: *const u8,
    base_len: usize,
    token: *const u8,
    verifier_identity: *const u8,
    page_offset: u64,
    out: *mut u8,
) -> SeStatus {
    guard(|| {
        let bytes = tri!(input(base, base_len));
        let snap = tri!(BaseEnclaveHash::from_bytes(bytes).map_err(hash_err));
        let page = match (token.is_null(), verifier_identity.is_null()) {
            (true, true) => InstancePage::common(),
            (false, false) => {
                let t: [u8; SE_TOKEN_LEN] = slice::from_raw_parts(token, SE_TOKEN_LEN).try_into().unwrap();
                let v: [u8; DIGEST_LEN] = slice::from_raw_parts(verifier_identity, DIGEST_LEN).try_into().unwrap();
                InstancePage::new(t, Digest(v))
            }
            _ => return fail(SeStatus::NullPointer, "token and verifier identity must both be set or both null"),
        };
        let mr = tri!(extend_with_instance_page(&snap, &page, page_offset).map_err(enclave_err));
        write_out(out, &mr.0)
    })
}

/// Parses and verifies a SIGSTRUCT. On success writes its MRSIGNER and the
/// signed MRENCLAVE; either output may be null.
///
/// # Safety
/// `data` must be valid for `len` bytes. Non-null outputs must hold
/// `SE_DIGEST_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_sigstruct_verify(
    data: *const u8,
    len: usize,
    mrsigner_out: *mut u8,
    mrenclave_out: *mut u8,
) -> SeStatus {
    guard(|| {
        let bytes = tri!(input(data, len));
        let ss = match SigStruct::from_bytes(bytes) {
            Ok(s) => s,
            Err(e) => return fail(SeStatus::MalformedSigstruct, e.to_string()),
        };
        let id = match ss.verify() {
            Ok(id) => id,
            Err(e @ SigError::Invalid(_)) => return fail(SeStatus::SignatureInvalid, e.to_string()),
            Err(e) => return fail(SeStatus::MalformedSigstruct, e.to_string()),
        };
        if !mrsigner_out.is_null() {
            write_out(mrsigner_out, &id.mrsigner.0);
        }
        if !mrenclave_out.is_null() {
            write_out(mrenclave_out, &ss.body.mrenclave.0);
        }
        SeStatus::Ok
    })
}

/// REPORTDATA binding a channel public key: SHA-256 of the key, zero padded.
///
/// # Safety
/// `key` must be valid for `len` bytes; `out` must hold
/// `SE_REPORT_DATA_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_bind_channel(key: *const u8, len: usize, out: *mut u8) -> SeStatus {
    guard(|| {
        let k = tri!(input(key, len));
        write_out(out, &bind_channel(k))
    })
}
