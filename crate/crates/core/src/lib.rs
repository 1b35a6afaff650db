// SPDX-License-Identifier: Apache-2.0

//! Software model of SGX enclave measurement and remote attestation with
//! singleton enclaves, plus a reproduction of the report-reuse attack.

pub mod adversary;
pub mod attestation;
pub mod bench;
pub mod codes;
pub mod crypto;
pub mod enclave;
pub mod hashcore;
pub mod scenario;
pub mod seed;
pub mod sigstruct;
pub mod starter;
pub mod transport;
pub mod verifier;
