//! Bit-exact tuple message format shared by every back-end.

mod ascii85;
mod ble;
mod message;
mod value;

use thiserror::Error;

pub use ascii85::{ascii85_decode, ascii85_encode};
pub use ble::{ble_pack, ble_unpack, BleAdvPayload, UUID_FIELDS};
pub use message::{
    decode_message, encode_message, Opcode, WireMessage, BLE_MAX_MESSAGE, UDP_MAX_MESSAGE,
};
pub use value::{classify_value, derive_signature, Signature, Tuple, Value, MAX_ARITY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("unrepresentable number")]
    UnrepresentableNumber,
    #[error("bad arity {0}")]
    BadArity(usize),
    #[error("bad character {0:?} in string")]
    BadChar(char),
    #[error("oversize message ({len} > {limit} bytes)")]
    Oversize { len: usize, limit: usize },
    #[error("bad sequence number {0}")]
    BadSequence(u8),
    #[error("bad opcode {0:#06b}")]
    BadOpcode(u8),
    #[error("unknown operation {0:?}")]
    UnknownOpName(String),
    #[error("bad signature {0:#04x}")]
    BadSignature(u8),
    #[error("truncated payload")]
    TruncatedPayload,
    #[error("unterminated string")]
    UnterminatedString,
    #[error("bad ascii85 char {0:?}")]
    BadAscii85Char(char),
    #[error("bad ascii85 length")]
    BadAscii85Length,
    #[error("ascii85 group overflow")]
    Ascii85Overflow,
    #[error("bad tuple json: {0}")]
    Json(String),
}
