//! Attribute types and runtime values shared by the source and warehouse sides.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Warehouse object identifier. Allocated from a store counter, never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Oid(pub u64);

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Short,
    Long,
    Double,
    Date,
    Image,
    Struct {
        name: Option<String>,
        fields: Vec<(String, ValueType)>,
    },
    Set(Box<ValueType>),
}

impl ValueType {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ValueType::Short | ValueType::Long | ValueType::Double)
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, ValueType::Short | ValueType::Long)
    }

    /// Element type of a set, or the type itself for scalars.
    pub fn element(&self) -> &ValueType {
        match self {
            ValueType::Set(inner) => inner,
            other => other,
        }
    }

    pub fn field(&self, name: &str) -> Option<&ValueType> {
        match self {
            ValueType::Struct { fields, .. } => {
                fields.iter().find(|(n, _)| n == name).map(|(_, t)| t)
            }
            _ => None,
        }
    }

    /// Structural equality that ignores struct type names.
    pub fn same_shape(&self, other: &ValueType) -> bool {
        match (self, other) {
            (ValueType::Struct { fields: a, .. }, ValueType::Struct { fields: b, .. }) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|((na, ta), (nb, tb))| na == nb && ta.same_shape(tb))
            }
            (ValueType::Set(a), ValueType::Set(b)) => a.same_shape(b),
            (a, b) => a == b,
        }
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            ValueType::String => "String",
            ValueType::Short => "Short",
            ValueType::Long => "Long",
            ValueType::Double => "Double",
            ValueType::Date => "Date",
            ValueType::Image => "Image",
            ValueType::Struct { .. } => "Struct",
            ValueType::Set(_) => "Set",
        }
    }

    pub fn from_keyword(word: &str) -> Option<ValueType> {
        Some(match word {
            "String" => ValueType::String,
            "Short" => ValueType::Short,
            "Long" => ValueType::Long,
            "Double" => ValueType::Double,
            "Date" => ValueType::Date,
            "Image" => ValueType::Image,
            _ => return None,
        })
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Struct { name, fields } => {
                f.write_str("Struct ")?;
                if let Some(n) = name {
                    write!(f, "{n} ")?;
                }
                f.write_str("{ ")?;
                for (i, (n, t)) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t} {n}")?;
                }
                f.write_str(" }")
            }
            ValueType::Set(inner) => write!(f, "Set<{inner}>"),
            other => f.write_str(other.keyword()),
        }
    }
}

/// A slot value. Sets are kept sorted and deduplicated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Null,
    Str(String),
    Int(i64),
    Double(f64),
    Date(String),
    Image(String),
    Struct(BTreeMap<String, Value>),
    Set(Vec<Value>),
    /// A source object id, before identity resolution.
    Ref(String),
    Oid(Oid),
}

impl Value {
    pub fn set(items: impl IntoIterator<Item = Value>) -> Value {
        let mut v: Vec<Value> = items.into_iter().collect();
        v.sort();
        v.dedup();
        Value::Set(v)
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Double(d) => Some(*d),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Int(_) | Value::Double(_) => 1,
            Value::Str(_) => 2,
            Value::Date(_) => 3,
            Value::Image(_) => 4,
            Value::Struct(_) => 5,
            Value::Set(_) => 6,
            Value::Ref(_) => 7,
            Value::Oid(_) => 8,
        }
    }

    /// Follows a struct field path.
    pub fn field_path(&self, path: &[String]) -> &Value {
        let mut cur = self;
        for seg in path {
            match cur {
                Value::Struct(m) => match m.get(seg) {
                    Some(v) => cur = v,
                    None => return &Value::Null,
                },
                _ => return &Value::Null,
            }
        }
        cur
    }

    /// Checks the value against a declared type. Null conforms to every type.
    pub fn conforms(&self, ty: &ValueType) -> bool {
        match (self, ty) {
            (Value::Null, _) => true,
            (Value::Str(_), ValueType::String) => true,
            (Value::Int(i), ValueType::Short) => i16::try_from(*i).is_ok(),
            (Value::Int(i), ValueType::Long) => i32::try_from(*i).is_ok(),
            (Value::Double(d), ValueType::Double) => d.is_finite(),
            (Value::Date(d), ValueType::Date) => is_date(d),
            (Value::Image(_), ValueType::Image) => true,
            (Value::Struct(m), ValueType::Struct { fields, .. }) => {
                m.len() == fields.len()
                    && fields
                        .iter()
                        .all(|(n, t)| m.get(n).is_some_and(|v| v.conforms(t)))
            }
            (Value::Set(items), ValueType::Set(inner)) => items.iter().all(|v| v.conforms(inner)),
            _ => false,
        }
    }

    /// Decodes a JSON value of a declared type.
    pub fn from_json(json: &serde_json::Value, ty: &ValueType) -> Result<Value, String> {
        use serde_json::Value as J;
        let mismatch = || format!("expected {ty}, found {json}");
        let v = match (json, ty) {
            (J::Null, _) => Value::Null,
            (J::String(s), ValueType::String) => Value::Str(s.clone()),
            (J::String(s), ValueType::Date) if is_date(s) => Value::Date(s.clone()),
            (J::String(s), ValueType::Image) => Value::Image(s.clone()),
            (J::Number(n), ValueType::Short | ValueType::Long) => {
                Value::Int(n.as_i64().ok_or_else(mismatch)?)
            }
            (J::Number(n), ValueType::Double) => Value::Double(n.as_f64().ok_or_else(mismatch)?),
            (J::Object(m), ValueType::Struct { fields, .. }) => {
                if let Some(extra) = m.keys().find(|k| !fields.iter().any(|(n, _)| n == *k)) {
                    return Err(format!("unexpected struct field `{extra}`"));
                }
                let mut out = BTreeMap::new();
                for (n, t) in fields {
                    let fv = m.get(n).unwrap_or(&J::Null);
                    out.insert(n.clone(), Value::from_json(fv, t)?);
                }
                Value::Struct(out)
            }
            (J::Array(items), ValueType::Set(inner)) => Value::set(
                items
                    .iter()
                    .map(|i| Value::from_json(i, inner))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            _ => return Err(mismatch()),
        };
        if v.conforms(ty) {
            Ok(v)
        } else {
            Err(mismatch())
        }
    }

    /// Plain JSON rendering, used for snapshot records and reports.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Null => J::Null,
            Value::Str(s) | Value::Date(s) | Value::Image(s) | Value::Ref(s) => {
                J::String(s.clone())
            }
            Value::Int(i) => J::from(*i),
            Value::Double(d) => serde_json::Number::from_f64(*d).map_or(J::Null, J::Number),
            Value::Struct(m) => {
                J::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
            }
            Value::Set(items) => J::Array(items.iter().map(Value::to_json).collect()),
            Value::Oid(o) => J::String(o.to_string()),
        }
    }
}

fn is_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
        && matches!(s[5..7].parse::<u8>(), Ok(1..=12))
        && matches!(s[8..10].parse::<u8>(), Ok(1..=31))
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        use Value::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Double(a), Double(b)) => a.total_cmp(b),
            (Int(a), Double(b)) => (*a as f64).total_cmp(b).then(Ordering::Less),
            (Double(a), Int(b)) => a.total_cmp(&(*b as f64)).then(Ordering::Greater),
            (Str(a), Str(b)) | (Date(a), Date(b)) | (Image(a), Image(b)) | (Ref(a), Ref(b)) => {
                a.cmp(b)
            }
            (Struct(a), Struct(b)) => a.iter().cmp(b.iter()),
            (Set(a), Set(b)) => a.cmp(b),
            (Oid(a), Oid(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Double(d) => write!(f, "{d:?}"),
            Value::Date(d) => write!(f, "date({d})"),
            Value::Image(i) => write!(f, "image({i})"),
            Value::Ref(r) => write!(f, "ref({r})"),
            Value::Oid(o) => write!(f, "{o}"),
            Value::Struct(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
            Value::Set(items) => {
                f.write_str("{")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
        }
    }
}
