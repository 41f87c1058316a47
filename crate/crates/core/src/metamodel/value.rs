use std::fmt;

use serde::{Deserialize, Serialize};

/// Declared type of an attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrType {
    Int,
    Float,
    Bool,
    String,
    /// Closed set of string literals; the first entry is the default.
    Enum(Vec<String>),
}

impl AttrType {
    pub fn default_value(&self) -> Value {
        match self {
            AttrType::Int => Value::Int(0),
            AttrType::Float => Value::Float(0.0),
            AttrType::Bool => Value::Bool(false),
            AttrType::String => Value::Str(String::new()),
            AttrType::Enum(values) => Value::Str(values.first().cloned().unwrap_or_default()),
        }
    }

    /// Exact type check, no promotion.
    pub fn accepts(&self, value: &Value) -> bool {
        match (self, value) {
            (AttrType::Int, Value::Int(_)) => true,
            (AttrType::Float, Value::Float(_)) => true,
            (AttrType::Bool, Value::Bool(_)) => true,
            (AttrType::String, Value::Str(_)) => true,
            (AttrType::Enum(values), Value::Str(s)) => values.iter().any(|v| v == s),
            _ => false,
        }
    }

    /// Like [`accepts`](Self::accepts) but promotes an Int into a Float slot.
    pub fn coerce(&self, value: Value) -> Option<Value> {
        match (self, value) {
            (AttrType::Float, Value::Int(i)) => Some(Value::Float(i as f64)),
            (ty, v) if ty.accepts(&v) => Some(v),
            _ => None,
        }
    }

    /// Reads a JSON value as this type. Integral JSON numbers are accepted for Float.
    pub fn from_json(&self, json: &serde_json::Value) -> Option<Value> {
        use serde_json::Value as J;
        let value = match (self, json) {
            (AttrType::Int, J::Number(n)) => Value::Int(n.as_i64()?),
            (AttrType::Float, J::Number(n)) => Value::Float(n.as_f64()?),
            (AttrType::Bool, J::Bool(b)) => Value::Bool(*b),
            (AttrType::String | AttrType::Enum(_), J::String(s)) => Value::Str(s.clone()),
            _ => return None,
        };
        self.accepts(&value).then_some(value)
    }
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrType::Int => f.write_str("Int"),
            AttrType::Float => f.write_str("Float"),
            AttrType::Bool => f.write_str("Bool"),
            AttrType::String => f.write_str("String"),
            AttrType::Enum(values) => write!(f, "Enum({})", values.join(", ")),
        }
    }
}

/// A typed attribute value. Enum attributes hold [`Value::Str`].
///
/// Equality on floats is bit equality, so `NaN == NaN` and `0.0 != -0.0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Bool(_) => "Bool",
            Value::Int(_) => "Int",
            Value::Float(_) => "Float",
            Value::Str(_) => "String",
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}
