use std::fmt;

use super::CodecError;

/// Maximum number of elements in a tuple.
pub const MAX_ARITY: usize = 4;

/// A scalar tuple element.
///
/// `Formal` is a wildcard in patterns and carries no payload on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Formal,
    Str(String),
    Int16(i16),
    Float32(f32),
}

impl Value {
    /// Two-bit type tag used in the signature byte.
    pub fn type_tag(&self) -> u8 {
        match self {
            Value::Formal => 0b00,
            Value::Str(_) => 0b01,
            Value::Int16(_) => 0b10,
            Value::Float32(_) => 0b11,
        }
    }

    pub fn is_formal(&self) -> bool {
        matches!(self, Value::Formal)
    }

    /// Numeric view with Int16 promoted to Float32.
    pub fn as_f32(&self) -> Option<f32> {
        match self {
            Value::Int16(i) => Some(*i as f32),
            Value::Float32(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Builds a string value, rejecting characters the 7-bit wire format
    /// cannot carry. NUL is excluded because a trailing NUL is
    /// indistinguishable from the empty-string terminator.
    pub fn string(s: impl Into<String>) -> Result<Value, CodecError> {
        let s = s.into();
        check_string(&s)?;
        Ok(Value::Str(s))
    }

    /// Number of payload bytes this value occupies on the wire.
    pub fn encoded_len(&self) -> usize {
        match self {
            Value::Formal => 0,
            Value::Str(s) => s.len().max(1),
            Value::Int16(_) => 2,
            Value::Float32(_) => 4,
        }
    }
}

pub(crate) fn check_string(s: &str) -> Result<(), CodecError> {
    match s.chars().find(|&c| c == '\0' || !c.is_ascii()) {
        Some(c) => Err(CodecError::BadChar(c)),
        None => Ok(()),
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Formal => f.write_str("null"),
            Value::Str(s) => write!(f, "{}", serde_json::Value::String(s.clone())),
            Value::Int16(i) => write!(f, "{i}"),
            Value::Float32(x) => write!(f, "{x:?}"),
        }
    }
}

impl From<i16> for Value {
    fn from(v: i16) -> Self {
        Value::Int16(v)
    }
}

impl From<f32> for Value {
    fn from(v: f32) -> Self {
        Value::Float32(v)
    }
}

/// Classifies a number as Int16 when it is integral and fits, else Float32.
pub fn classify_value(n: f64) -> Result<Value, CodecError> {
    if !n.is_finite() {
        return Err(CodecError::UnrepresentableNumber);
    }
    if n.fract() == 0.0 && n >= i16::MIN as f64 && n <= i16::MAX as f64 {
        Ok(Value::Int16(n as i16))
    } else {
        Ok(Value::Float32(n as f32))
    }
}

/// An ordered list of one to four scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuple(Vec<Value>);

impl Tuple {
    pub fn new(values: Vec<Value>) -> Result<Self, CodecError> {
        if values.is_empty() || values.len() > MAX_ARITY {
            return Err(CodecError::BadArity(values.len()));
        }
        for v in &values {
            if let Value::Str(s) = v {
                check_string(s)?;
            }
        }
        Ok(Tuple(values))
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<&Value> {
        self.0.get(i)
    }

    pub fn into_values(self) -> Vec<Value> {
        self.0
    }

    pub fn signature(&self) -> Signature {
        derive_signature(self)
    }

    /// Parses a JSON array: strings, numbers and `null` (formal).
    pub fn from_json(v: &serde_json::Value) -> Result<Self, CodecError> {
        let items = v
            .as_array()
            .ok_or_else(|| CodecError::Json("expected an array".into()))?;
        let values = items
            .iter()
            .map(|item| match item {
                serde_json::Value::Null => Ok(Value::Formal),
                serde_json::Value::String(s) => Value::string(s.clone()),
                serde_json::Value::Number(n) => classify_value(
                    n.as_f64()
                        .ok_or_else(|| CodecError::Json(format!("bad number {n}")))?,
                ),
                other => Err(CodecError::Json(format!("unsupported element {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tuple::new(values)
    }

    pub fn parse_json(s: &str) -> Result<Self, CodecError> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| CodecError::Json(e.to_string()))?;
        Self::from_json(&v)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.0
                .iter()
                .map(|v| match v {
                    Value::Formal => serde_json::Value::Null,
                    Value::Str(s) => serde_json::Value::String(s.clone()),
                    Value::Int16(i) => serde_json::Value::from(*i),
                    // f32 -> decimal -> f64 keeps the shortest representation
                    Value::Float32(x) => x
                        .to_string()
                        .parse::<f64>()
                        .ok()
                        .and_then(serde_json::Number::from_f64)
                        .map(serde_json::Value::Number)
                        .unwrap_or(serde_json::Value::Null),
                })
                .collect(),
        )
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("]")
    }
}

/// Four packed two-bit type tags, TT1 in the top bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub u8);

impl Signature {
    /// Tag for position `i` (0-based).
    pub fn tag(self, i: usize) -> u8 {
        (self.0 >> (6 - 2 * i)) & 0b11
    }
}

pub fn derive_signature(t: &Tuple) -> Signature {
    let byte = t
        .values()
        .iter()
        .enumerate()
        .fold(0u8, |acc, (i, v)| acc | (v.type_tag() << (6 - 2 * i)));
    Signature(byte)
}
