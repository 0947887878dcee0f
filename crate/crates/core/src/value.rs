//! Payload values carried by events and ports.

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Bytes(Vec<u8>),
}

/// Value kind of a port, action or state variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKind {
    Void,
    Bool,
    Int,
    Float,
    Text,
    Bytes,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Void => "void",
            ValueKind::Bool => "bool",
            ValueKind::Int => "int",
            ValueKind::Float => "float",
            ValueKind::Text => "string",
            ValueKind::Bytes => "bytes",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Unit => ValueKind::Void,
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) => ValueKind::Int,
            Value::Float(_) => ValueKind::Float,
            Value::Text(_) => ValueKind::Text,
            Value::Bytes(_) => ValueKind::Bytes,
        }
    }

    /// Zero value of a kind; used for uninitialized state.
    pub fn default_of(kind: ValueKind) -> Value {
        match kind {
            ValueKind::Void => Value::Unit,
            ValueKind::Bool => Value::Bool(false),
            ValueKind::Int => Value::Int(0),
            ValueKind::Float => Value::Float(0.0),
            ValueKind::Text => Value::Text(String::new()),
            ValueKind::Bytes => Value::Bytes(Vec::new()),
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Canonical tagged JSON form. Floats are encoded by their bit pattern.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Unit => json!({ "unit": null }),
            Value::Bool(b) => json!({ "bool": b }),
            Value::Int(i) => json!({ "int": i }),
            Value::Float(x) => json!({ "float": format!("{:016x}", x.to_bits()) }),
            Value::Text(s) => json!({ "text": s }),
            Value::Bytes(b) => json!({ "bytes": hex::encode(b) }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Value, ValueError> {
        let bad = || ValueError::Malformed(v.to_string());
        let obj = v.as_object().ok_or_else(bad)?;
        if obj.len() != 1 {
            return Err(bad());
        }
        let (key, inner) = obj.iter().next().ok_or_else(bad)?;
        Ok(match key.as_str() {
            "unit" if inner.is_null() => Value::Unit,
            "bool" => Value::Bool(inner.as_bool().ok_or_else(bad)?),
            "int" => Value::Int(inner.as_i64().ok_or_else(bad)?),
            "float" => {
                let bits = u64::from_str_radix(inner.as_str().ok_or_else(bad)?, 16).map_err(|_| bad())?;
                Value::Float(f64::from_bits(bits))
            }
            "text" => Value::Text(inner.as_str().ok_or_else(bad)?.to_string()),
            "bytes" => Value::Bytes(hex::decode(inner.as_str().ok_or_else(bad)?).map_err(|_| bad())?),
            _ => return Err(bad()),
        })
    }

    /// Loose conversion from plain JSON used by hand-written scripts:
    /// `null`, booleans, numbers and strings map to the obvious kinds, and
    /// tagged objects are accepted as well.
    pub fn from_plain_json(v: &serde_json::Value) -> Result<Value, ValueError> {
        match v {
            serde_json::Value::Null => Ok(Value::Unit),
            serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(Value::Int(i)),
                None => n.as_f64().map(Value::Float).ok_or_else(|| ValueError::Malformed(v.to_string())),
            },
            serde_json::Value::String(s) => Ok(Value::Text(s.clone())),
            serde_json::Value::Object(_) => Value::from_json(v),
            serde_json::Value::Array(_) => Err(ValueError::Malformed(v.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("malformed value `{0}`")]
    Malformed(String),
}

// Structural equality; floats compare by bit pattern so traces compare exactly.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Unit, Value::Unit) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Bytes(a), Value::Bytes(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Unit => {}
            Value::Bool(b) => b.hash(state),
            Value::Int(i) => i.hash(state),
            Value::Float(x) => x.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
            Value::Bytes(b) => b.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => write!(f, "()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Text(s) => write!(f, "{s}"),
            Value::Bytes(b) => write!(f, "0x{}", hex::encode(b)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        Value::from_json(&raw).map_err(serde::de::Error::custom)
    }
}
