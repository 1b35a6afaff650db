// SPDX-License-Identifier: Apache-2.0

use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use singleton_enclave::attestation::bind_channel;
use singleton_enclave::enclave::{
    base_hash_of, extend_with_instance_page, Attributes, BlueprintPage, EnclaveBlueprint, InstancePage, PageSecInfo,
};
use singleton_enclave::hashcore::{sha256, Digest};
use singleton_enclave::sigstruct::{sign_common, SignerKey};
use singleton_enclave_ffi::*;

fn last_error() -> Option<String> {
    let p = se_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn blueprint() -> EnclaveBlueprint {
    EnclaveBlueprint::new(
        16384,
        Attributes::new(Attributes::MODE64),
        vec![
            BlueprintPage::new(0, b"interpreter", PageSecInfo::reg_rx()).unwrap(),
            BlueprintPage::new(4096, b"data", PageSecInfo::reg_rw()).unwrap(),
        ],
    )
    .unwrap()
}

#[test]
fn hash_handle_matches_core() {
    let data: Vec<u8> = (0..1000u32).map(|i| (i * 7) as u8).collect();
    unsafe {
        let h = se_hash_new();
        assert_eq!(se_hash_update(h, data.as_ptr(), 640), SeStatus::Ok);
        let mut base = [0u8; SE_BASE_HASH_LEN];
        assert_eq!(se_hash_export_base(h, base.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(se_hash_update(h, data[640..].as_ptr(), 360), SeStatus::Ok);
        assert_eq!(se_hash_length(h), 1000);
        let mut d = [0u8; SE_DIGEST_LEN];
        assert_eq!(se_hash_finalize(h, d.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(d, sha256(&data).0);
        // Finalizing does not consume the handle.
        let mut again = [0u8; SE_DIGEST_LEN];
        assert_eq!(se_hash_finalize(h, again.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(again, d);
        se_hash_free(h);

        let mut r = ptr::null_mut();
        assert_eq!(se_hash_resume(base.as_ptr(), base.len(), &mut r), SeStatus::Ok);
        assert_eq!(se_hash_update(r, data[640..].as_ptr(), 360), SeStatus::Ok);
        assert_eq!(se_hash_finalize(r, d.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(d, sha256(&data).0);
        se_hash_free(r);

        assert_eq!(se_base_finalize(base.as_ptr(), base.len(), d.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(d, sha256(&data[..640]).0);
        assert_eq!(se_sha256(data.as_ptr(), data.len(), d.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(d, sha256(&data).0);
        assert_eq!(se_sha256(ptr::null(), 0, d.as_mut_ptr()), SeStatus::Ok);
        assert_eq!(d, sha256(b"").0);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let h = se_hash_new();
        se_hash_update(h, [1u8; 10].as_ptr(), 10);
        let mut base = [0u8; SE_BASE_HASH_LEN];
        assert_eq!(se_hash_export_base(h, base.as_mut_ptr()), SeStatus::NotBlockAligned);
        assert!(last_error().unwrap().contains("10 bytes"));
        assert_eq!(se_hash_update(h, ptr::null(), 4), SeStatus::NullPointer);
        assert_eq!(se_hash_finalize(h, ptr::null_mut()), SeStatus::NullPointer);
        se_hash_free(h);
        se_hash_free(ptr::null_mut());
        assert_eq!(se_hash_update(ptr::null_mut(), ptr::null(), 0), SeStatus::NullPointer);

        let mut d = [0u8; SE_DIGEST_LEN];
        let junk = [0u8; SE_BASE_HASH_LEN];
        assert_eq!(se_base_finalize(junk.as_ptr(), junk.len(), d.as_mut_ptr()), SeStatus::MalformedSnapshot);
        assert_eq!(se_base_finalize(junk.as_ptr(), 10, d.as_mut_ptr()), SeStatus::MalformedSnapshot);
        let mut out = ptr::null_mut();
        assert_eq!(se_hash_resume(junk.as_ptr(), junk.len(), &mut out), SeStatus::MalformedSnapshot);
        assert!(out.is_null());

        // A successful call clears the previous message.
        assert_eq!(se_sha256(b"x".as_ptr(), 1, d.as_mut_ptr()), SeStatus::Ok);
        assert!(last_error().is_none());
    }
    let name = unsafe { CStr::from_ptr(se_status_name(SeStatus::SignatureInvalid)) };
    assert_eq!(name.to_str().unwrap(), "SE_STATUS_SIGNATURE_INVALID");
}

#[test]
fn instance_page_splice_matches_core() {
    let bp = blueprint();
    let base = base_hash_of(&bp).unwrap();
    let bytes = base.to_bytes();
    let token = [7u8; SE_TOKEN_LEN];
    let vid = [9u8; SE_DIGEST_LEN];
    let off = bp.instance_page_offset();
    let mut d = [0u8; SE_DIGEST_LEN];
    unsafe {
        let st = se_extend_with_instance_page(bytes.as_ptr(), bytes.len(), token.as_ptr(), vid.as_ptr(), off, d.as_mut_ptr());
        assert_eq!(st, SeStatus::Ok);
        assert_eq!(d, extend_with_instance_page(&base, &InstancePage::new(token, Digest(vid)), off).unwrap().0);

        let st = se_extend_with_instance_page(bytes.as_ptr(), bytes.len(), ptr::null(), ptr::null(), off, d.as_mut_ptr());
        assert_eq!(st, SeStatus::Ok);
        assert_eq!(d, extend_with_instance_page(&base, &InstancePage::common(), off).unwrap().0);

        let st = se_extend_with_instance_page(bytes.as_ptr(), bytes.len(), token.as_ptr(), ptr::null(), off, d.as_mut_ptr());
        assert_eq!(st, SeStatus::NullPointer);
        let st = se_extend_with_instance_page(bytes.as_ptr(), bytes.len(), token.as_ptr(), vid.as_ptr(), off + 1, d.as_mut_ptr());
        assert_eq!(st, SeStatus::InvalidArgument);
        assert!(last_error().unwrap().contains("aligned"));
    }
}

#[test]
fn sigstruct_verification() {
    let key = SignerKey::from_seed_label("ffi", "signer").unwrap();
    let (_, ss) = sign_common(&blueprint(), &key, 1, 1, 0).unwrap();
    let mut bytes = ss.to_bytes();
    assert_eq!(bytes.len(), SE_SIGSTRUCT_LEN);
    let mut signer = [0u8; SE_DIGEST_LEN];
    let mut mr = [0u8; SE_DIGEST_LEN];
    unsafe {
        let st = se_sigstruct_verify(bytes.as_ptr(), bytes.len(), signer.as_mut_ptr(), mr.as_mut_ptr());
        assert_eq!(st, SeStatus::Ok);
        assert_eq!(signer, key.mrsigner().0);
        assert_eq!(mr, ss.body.mrenclave.0);
        assert_eq!(se_sigstruct_verify(bytes.as_ptr(), bytes.len(), ptr::null_mut(), ptr::null_mut()), SeStatus::Ok);

        bytes[40] ^= 1;
        let st = se_sigstruct_verify(bytes.as_ptr(), bytes.len(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(st, SeStatus::SignatureInvalid);
        let st = se_sigstruct_verify(bytes.as_ptr(), 100, ptr::null_mut(), ptr::null_mut());
        assert_eq!(st, SeStatus::MalformedSigstruct);
    }
}

#[test]
fn channel_binding_matches_core() {
    let key = b"channel public key";
    let mut out = [0u8; SE_REPORT_DATA_LEN];
    assert_eq!(unsafe { se_bind_channel(key.as_ptr(), key.len(), out.as_mut_ptr()) }, SeStatus::Ok);
    assert_eq!(out, bind_channel(key));
}

#[test]
fn generated_header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/singleton_enclave.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["se_hash_new", "se_extend_with_instance_page", "se_sigstruct_verify", "SE_STATUS_OK", "SE_BASE_HASH_LEN 45"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let probe = std::env::temp_dir().join(format!("se_header_probe_{}.c", std::process::id()));
    std::fs::write(
        &probe,
        "#include \"singleton_enclave.h\"\nint main(void) { SeHashState *h = se_hash_new(); se_hash_free(h); return SE_STATUS_OK; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&probe)
        .status();
    let _ = std::fs::remove_file(&probe);
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
