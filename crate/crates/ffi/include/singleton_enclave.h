/* SPDX-License-Identifier: Apache-2.0 */

#ifndef SINGLETON_ENCLAVE_H
#define SINGLETON_ENCLAVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SE_DIGEST_LEN 32

#define SE_BASE_HASH_LEN 45

#define SE_REPORT_DATA_LEN 64

#define SE_SIGSTRUCT_LEN 856

#define SE_TOKEN_LEN 32

typedef enum SeStatus {
  SE_STATUS_OK = 0,
  SE_STATUS_NULL_POINTER = 1,
  SE_STATUS_INVALID_ARGUMENT = 2,
  SE_STATUS_NOT_BLOCK_ALIGNED = 3,
  SE_STATUS_MALFORMED_SNAPSHOT = 4,
  SE_STATUS_MESSAGE_TOO_LONG = 5,
  SE_STATUS_MALFORMED_SIGSTRUCT = 6,
  SE_STATUS_SIGNATURE_INVALID = 7,
  SE_STATUS_PANIC = 99,
} SeStatus;

/**
 * Opaque running SHA-256 state.
 */
typedef struct SeHashState SeHashState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *se_last_error_message(void);

/**
 * Static, NUL-terminated name for `status`.
 */
const char *se_status_name(enum SeStatus status);

/**
 * New hash state. Release with [`se_hash_free`].
 */
struct SeHashState *se_hash_new(void);

/**
 * Resumes from a serialized base enclave hash (`SE_BASE_HASH_LEN` bytes).
 *
 * # Safety
 * `base` must be valid for `len` bytes and `out` valid for one pointer write.
 */
enum SeStatus se_hash_resume(const uint8_t *base, size_t len, struct SeHashState **out);

/**
 * # Safety
 * `h` must be null or a handle from this library that was not yet freed.
 */
void se_hash_free(struct SeHashState *h);

/**
 * # Safety
 * `h` must be a live handle; `data` must be valid for `len` bytes.
 */
enum SeStatus se_hash_update(struct SeHashState *h, const uint8_t *data, size_t len);

/**
 * Total bytes absorbed so far, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
uint64_t se_hash_length(const struct SeHashState *h);

/**
 * Serializes the state. Fails with `NOT_BLOCK_ALIGNED` mid-block.
 *
 * # Safety
 * `h` must be a live handle; `out` must hold `SE_BASE_HASH_LEN` bytes.
 */
enum SeStatus se_hash_export_base(const struct SeHashState *h, uint8_t *out);

/**
 * Writes the digest of everything absorbed. The handle stays usable.
 *
 * # Safety
 * `h` must be a live handle; `out` must hold `SE_DIGEST_LEN` bytes.
 */
enum SeStatus se_hash_finalize(const struct SeHashState *h, uint8_t *out);

/**
 * One-shot SHA-256.
 *
 * # Safety
 * `data` must be valid for `len` bytes; `out` must hold `SE_DIGEST_LEN` bytes.
 */
enum SeStatus se_sha256(const uint8_t *data, size_t len, uint8_t *out);

/**
 * Finalizes a serialized base enclave hash with no further input.
 *
 * # Safety
 * `base` must be valid for `len` bytes; `out` must hold `SE_DIGEST_LEN` bytes.
 */
enum SeStatus se_base_finalize(const uint8_t *base, size_t len, uint8_t *out);

/**
 * MRENCLAVE of the enclave whose base hash is `base` once the instance page
 * built from `token` and `verifier_identity` is added at `page_offset`.
 * Passing null for both `token` and `verifier_identity` selects the all-zero
 * common page.
 *
 * # Safety
 * `base` must be valid for `base_len` bytes. `token` and `verifier_identity`
 * must each be null or valid for 32 bytes. `out` must hold `SE_DIGEST_LEN`
 * bytes.
 */
enum SeStatus se_extend_with_instance_page(const uint8_t *base,
                                           size_t base_len,
                                           const uint8_t *token,
                                           const uint8_t *verifier_identity,
                                           uint64_t page_offset,
                                           uint8_t *out);

/**
 * Parses and verifies a SIGSTRUCT. On success writes its MRSIGNER and the
 * signed MRENCLAVE; either output may be null.
 *
 * # Safety
 * `data` must be valid for `len` bytes. Non-null outputs must hold
 * `SE_DIGEST_LEN` bytes.
 */
enum SeStatus se_sigstruct_verify(const uint8_t *data,
                                  size_t len,
                                  uint8_t *mrsigner_out,
                                  uint8_t *mrenclave_out);

/**
 * REPORTDATA binding a channel public key: SHA-256 of the key, zero padded.
 *
 * # Safety
 * `key` must be valid for `len` bytes; `out` must hold
 * `SE_REPORT_DATA_LEN` bytes.
 */
enum SeStatus se_bind_channel(const uint8_t *key, size_t len, uint8_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SINGLETON_ENCLAVE_H */
