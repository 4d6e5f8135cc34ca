// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Error type shared by every layer of the engine.

use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("column length mismatch: {0}")]
    LengthMismatch(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unsupported key type {0} (keys must be Int64 or Utf8)")]
    UnsupportedKeyType(String),
    #[error("unsupported value type {0} for aggregation")]
    UnsupportedValueType(String),
    #[error("row index {index} out of bounds for table of {len} rows")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("column index {index} out of range for {len} columns")]
    ColumnOutOfRange { index: usize, len: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("integer overflow in {0}")]
    Overflow(String),
    #[error("aggregate kind mismatch: {0} vs {1}")]
    KindMismatch(String, String),
    #[error("NaN encountered in {0}")]
    InvalidFloat(String),
    #[error("table is not sorted on the key columns (row {row})")]
    NotSorted { row: usize },
    #[error("transport failure with rank {rank}: {reason}")]
    TransportFailure { rank: usize, reason: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("failed to bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },
    #[error("handshake timed out after {0:?}")]
    HandshakeTimeout(std::time::Duration),
    #[error("rank collision: rank {0} connected twice")]
    RankCollision(usize),
    #[error("parse error at line {line}: {reason}")]
    ParseError { line: u64, reason: String },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("verification failed: {0}")]
    VerificationFailure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable variant name, used by the C ABI and in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::UnsupportedKeyType(_) => "UnsupportedKeyType",
            Error::UnsupportedValueType(_) => "UnsupportedValueType",
            Error::IndexOutOfBounds { .. } => "IndexOutOfBounds",
            Error::ColumnOutOfRange { .. } => "ColumnOutOfRange",
            Error::MalformedPayload(_) => "MalformedPayload",
            Error::Overflow(_) => "Overflow",
            Error::KindMismatch(..) => "KindMismatch",
            Error::InvalidFloat(_) => "InvalidFloat",
            Error::NotSorted { .. } => "NotSorted",
            Error::TransportFailure { .. } => "TransportFailure",
            Error::ProtocolViolation(_) => "ProtocolViolation",
            Error::BindFailure { .. } => "BindFailure",
            Error::HandshakeTimeout(_) => "HandshakeTimeout",
            Error::RankCollision(_) => "RankCollision",
            Error::ParseError { .. } => "ParseError",
            Error::IoFailure(_) => "IoFailure",
            Error::VerificationFailure(_) => "VerificationFailure",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}
