// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Error codes carried in protocol `ERROR` messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "E_UNKNOWN_POLICY")]
    UnknownPolicy,
    #[serde(rename = "E_SIGSTRUCT_INVALID")]
    SigstructInvalid,
    #[serde(rename = "E_TOKEN_UNKNOWN")]
    TokenUnknown,
    #[serde(rename = "E_TOKEN_USED")]
    TokenUsed,
    #[serde(rename = "E_MRENCLAVE_MISMATCH")]
    MrenclaveMismatch,
    #[serde(rename = "E_SIGNER_MISMATCH")]
    SignerMismatch,
    #[serde(rename = "E_ATTR_MISMATCH")]
    AttrMismatch,
    #[serde(rename = "E_CHANNEL_BINDING")]
    ChannelBinding,
    #[serde(rename = "E_QUOTE_INVALID")]
    QuoteInvalid,
    #[serde(rename = "E_PROTOCOL")]
    Protocol,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 10] = [
        ErrorCode::UnknownPolicy,
        ErrorCode::SigstructInvalid,
        ErrorCode::TokenUnknown,
        ErrorCode::TokenUsed,
        ErrorCode::MrenclaveMismatch,
        ErrorCode::SignerMismatch,
        ErrorCode::AttrMismatch,
        ErrorCode::ChannelBinding,
        ErrorCode::QuoteInvalid,
        ErrorCode::Protocol,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownPolicy => "E_UNKNOWN_POLICY",
            ErrorCode::SigstructInvalid => "E_SIGSTRUCT_INVALID",
            ErrorCode::TokenUnknown => "E_TOKEN_UNKNOWN",
            ErrorCode::TokenUsed => "E_TOKEN_USED",
            ErrorCode::MrenclaveMismatch => "E_MRENCLAVE_MISMATCH",
            ErrorCode::SignerMismatch => "E_SIGNER_MISMATCH",
            ErrorCode::AttrMismatch => "E_ATTR_MISMATCH",
            ErrorCode::ChannelBinding => "E_CHANNEL_BINDING",
            ErrorCode::QuoteInvalid => "E_QUOTE_INVALID",
            ErrorCode::Protocol => "E_PROTOCOL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCode::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}
