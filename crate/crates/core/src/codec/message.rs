use std::fmt;
use std::str::FromStr;

use super::value::{derive_signature, Signature, Tuple, Value};
use super::CodecError;

/// Maximum encoded message size carried by one BLE advertisement.
pub const BLE_MAX_MESSAGE: usize = 32;
/// Maximum encoded message size carried by one UDP datagram.
pub const UDP_MAX_MESSAGE: usize = 512;

/// Four-bit operation code in the top nibble of the header byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    IamHere,
    WhereIs,
    Out,
    Inp,
    Rd,
    Test,
    Tuple,
}

impl Opcode {
    pub const ALL: [Opcode; 7] = [
        Opcode::IamHere,
        Opcode::WhereIs,
        Opcode::Out,
        Opcode::Inp,
        Opcode::Rd,
        Opcode::Test,
        Opcode::Tuple,
    ];

    pub fn code(self) -> u8 {
        match self {
            Opcode::IamHere => 0b0000,
            Opcode::WhereIs => 0b0001,
            Opcode::Out => 0b0100,
            Opcode::Inp => 0b0101,
            Opcode::Rd => 0b0110,
            Opcode::Test => 0b0111,
            Opcode::Tuple => 0b1000,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, CodecError> {
        Opcode::ALL
            .into_iter()
            .find(|op| op.code() == code)
            .ok_or(CodecError::BadOpcode(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            Opcode::IamHere => "IAMHERE",
            Opcode::WhereIs => "WHEREIS",
            Opcode::Out => "OUT",
            Opcode::Inp => "INP",
            Opcode::Rd => "RD",
            Opcode::Test => "TEST",
            Opcode::Tuple => "TUPLE",
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Opcode {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        let upper = match upper.as_str() {
            "WHERE" => "WHEREIS",
            "NOTIFY" => "TUPLE",
            other => other,
        };
        Opcode::ALL
            .into_iter()
            .find(|op| op.name() == upper)
            .ok_or_else(|| CodecError::UnknownOpName(s.to_string()))
    }
}

/// A tuple request as carried on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub op: Opcode,
    /// Two-bit sequence number (0..=3).
    pub seq: u8,
    pub tuple: Tuple,
}

impl WireMessage {
    pub fn new(op: Opcode, seq: u8, tuple: Tuple) -> Self {
        WireMessage {
            op,
            seq: seq & 0b11,
            tuple,
        }
    }

    pub fn encoded_len(&self) -> usize {
        2 + self
            .tuple
            .values()
            .iter()
            .map(Value::encoded_len)
            .sum::<usize>()
    }
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} seq={} {}", self.op, self.seq, self.tuple)
    }
}

/// Encodes a message, refusing to exceed `limit` bytes.
///
/// Header byte: op (bits 7-4), arity-1 (bits 3-2), seq (bits 1-0).
/// Second byte: signature. Payload: values in order, strings as 7-bit
/// characters with the last one flagged by bit 7, numbers big-endian.
pub fn encode_message(m: &WireMessage, limit: usize) -> Result<Vec<u8>, CodecError> {
    if m.seq > 3 {
        return Err(CodecError::BadSequence(m.seq));
    }
    let len = m.encoded_len();
    if len > limit {
        return Err(CodecError::Oversize { len, limit });
    }
    let arity = m.tuple.arity();
    let mut out = Vec::with_capacity(len);
    out.push((m.op.code() << 4) | (((arity - 1) as u8) << 2) | m.seq);
    out.push(derive_signature(&m.tuple).0);
    for v in m.tuple.values() {
        match v {
            Value::Formal => {}
            Value::Str(s) => {
                let bytes = s.as_bytes();
                match bytes.split_last() {
                    None => out.push(0x80),
                    Some((last, init)) => {
                        out.extend_from_slice(init);
                        out.push(last | 0x80);
                    }
                }
            }
            Value::Int16(i) => out.extend_from_slice(&i.to_be_bytes()),
            Value::Float32(x) => out.extend_from_slice(&x.to_be_bytes()),
        }
    }
    debug_assert_eq!(out.len(), len);
    Ok(out)
}

/// Decodes a message. Bytes after the self-delimited payload are ignored.
pub fn decode_message(b: &[u8]) -> Result<WireMessage, CodecError> {
    if b.len() < 2 {
        return Err(CodecError::TruncatedPayload);
    }
    let op = Opcode::from_code(b[0] >> 4)?;
    let arity = ((b[0] >> 2) & 0b11) as usize + 1;
    let seq = b[0] & 0b11;
    let sig = Signature(b[1]);
    if (arity..4).any(|i| sig.tag(i) != 0) {
        return Err(CodecError::BadSignature(sig.0));
    }

    let mut rest = &b[2..];
    let mut values = Vec::with_capacity(arity);
    for i in 0..arity {
        let v = match sig.tag(i) {
            0b00 => Value::Formal,
            0b01 => {
                let end = rest
                    .iter()
                    .position(|c| c & 0x80 != 0)
                    .ok_or(if rest.is_empty() {
                        CodecError::TruncatedPayload
                    } else {
                        CodecError::UnterminatedString
                    })?;
                let mut s: String = rest[..end].iter().map(|&c| c as char).collect();
                let last = rest[end] & 0x7f;
                if last != 0 {
                    s.push(last as char);
                } else if end > 0 {
                    // a NUL terminator only ever encodes the empty string
                    return Err(CodecError::BadChar('\0'));
                }
                if s.contains('\0') {
                    return Err(CodecError::BadChar('\0'));
                }
                rest = &rest[end + 1..];
                Value::Str(s)
            }
            0b10 => {
                let (head, tail) = split(rest, 2)?;
                rest = tail;
                Value::Int16(i16::from_be_bytes([head[0], head[1]]))
            }
            _ => {
                let (head, tail) = split(rest, 4)?;
                rest = tail;
                Value::Float32(f32::from_be_bytes([head[0], head[1], head[2], head[3]]))
            }
        };
        values.push(v);
    }
    Ok(WireMessage {
        op,
        seq,
        tuple: Tuple::new(values)?,
    })
}

fn split(b: &[u8], n: usize) -> Result<(&[u8], &[u8]), CodecError> {
    if b.len() < n {
        Err(CodecError::TruncatedPayload)
    } else {
        Ok(b.split_at(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Value {
        Value::string(x).unwrap()
    }

    fn msg(op: Opcode, seq: u8, values: Vec<Value>) -> WireMessage {
        WireMessage::new(op, seq, Tuple::new(values).unwrap())
    }

    #[test]
    fn opcode_table() {
        let table = [
            (Opcode::IamHere, 0b0000, "IAMHERE"),
            (Opcode::WhereIs, 0b0001, "WHEREIS"),
            (Opcode::Out, 0b0100, "OUT"),
            (Opcode::Inp, 0b0101, "INP"),
            (Opcode::Rd, 0b0110, "RD"),
            (Opcode::Test, 0b0111, "TEST"),
            (Opcode::Tuple, 0b1000, "TUPLE"),
        ];
        for (op, code, name) in table {
            assert_eq!(op.code(), code);
            assert_eq!(op.name(), name);
            assert_eq!(Opcode::from_code(code).unwrap(), op);
            assert_eq!(name.parse::<Opcode>().unwrap(), op);
        }
        for code in [2u8, 3, 9, 10, 11, 12, 13, 14, 15] {
            assert_eq!(Opcode::from_code(code), Err(CodecError::BadOpcode(code)));
        }
    }

    #[test]
    fn encode_examples() {
        let m = msg(Opcode::Out, 3, vec![s("A"), Value::Int16(5)]);
        assert_eq!(
            encode_message(&m, BLE_MAX_MESSAGE).unwrap(),
            [0x47, 0x60, 0xC1, 0x00, 0x05]
        );
        let m = msg(Opcode::Rd, 0, vec![s("SENSOR"), Value::Formal]);
        assert_eq!(
            encode_message(&m, BLE_MAX_MESSAGE).unwrap(),
            [0x64, 0x40, 0x53, 0x45, 0x4E, 0x53, 0x4F, 0xD2]
        );
    }

    #[test]
    fn encode_rejects_oversize() {
        let m = msg(Opcode::Out, 0, vec![s(&"x".repeat(40))]);
        assert_eq!(
            encode_message(&m, BLE_MAX_MESSAGE),
            Err(CodecError::Oversize { len: 42, limit: 32 })
        );
        assert!(encode_message(&m, UDP_MAX_MESSAGE).is_ok());
    }

    #[test]
    fn empty_string_is_single_terminator() {
        let m = msg(Opcode::Tuple, 1, vec![s(""), Value::Int16(-1)]);
        let b = encode_message(&m, 32).unwrap();
        assert_eq!(b, [0x85, 0x60, 0x80, 0xFF, 0xFF]);
        assert_eq!(decode_message(&b).unwrap(), m);
    }

    #[test]
    fn decode_examples() {
        let expected = msg(Opcode::Out, 3, vec![s("A"), Value::Int16(5)]);
        assert_eq!(decode_message(&[0x47, 0x60, 0xC1, 0x00, 0x05]).unwrap(), expected);
        assert_eq!(
            decode_message(&[0x47, 0x60, 0xC1, 0x00, 0x05, 0x00, 0x00]).unwrap(),
            expected
        );
        assert_eq!(decode_message(&[0x2F, 0x00]), Err(CodecError::BadOpcode(2)));
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode_message(&[0x40]), Err(CodecError::TruncatedPayload));
        // Int16 with one byte
        assert_eq!(
            decode_message(&[0x40, 0x80, 0x01]),
            Err(CodecError::TruncatedPayload)
        );
        // string without terminator
        assert_eq!(
            decode_message(&[0x40, 0x40, 0x41, 0x42]),
            Err(CodecError::UnterminatedString)
        );
        // string with no bytes at all
        assert_eq!(
            decode_message(&[0x40, 0x40]),
            Err(CodecError::TruncatedPayload)
        );
        // tag set beyond arity
        assert_eq!(
            decode_message(&[0x40, 0x50, 0xC1, 0xC1]),
            Err(CodecError::BadSignature(0x50))
        );
    }

    #[test]
    fn float_is_big_endian() {
        let m = msg(Opcode::Out, 0, vec![Value::Float32(1.5)]);
        assert_eq!(
            encode_message(&m, 32).unwrap(),
            [0x40, 0xC0, 0x3F, 0xC0, 0x00, 0x00]
        );
    }
}
