//! Property definitions common to source interfaces and warehouse classes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::value::ValueType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Association,
    Composition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub kind: RelationKind,
    /// Interface name on the source side, class name on the warehouse side.
    pub target: String,
    pub many: bool,
    /// Name of the inverse relationship declared on `target`.
    pub inverse: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Attribute(ValueType),
    Relation(RelationDef),
}

impl PropertyKind {
    pub fn is_relation(&self) -> bool {
        matches!(self, PropertyKind::Relation(_))
    }

    pub fn attribute_type(&self) -> Option<&ValueType> {
        match self {
            PropertyKind::Attribute(t) => Some(t),
            PropertyKind::Relation(_) => None,
        }
    }

    pub fn relation(&self) -> Option<&RelationDef> {
        match self {
            PropertyKind::Relation(r) => Some(r),
            PropertyKind::Attribute(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    pub name: String,
    pub kind: PropertyKind,
}

/// Where a warehouse property comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Derived,
    Computed,
    Specific,
}

impl Origin {
    pub fn prefix(self) -> &'static str {
        match self {
            Origin::Derived => "D_",
            Origin::Computed => "C_",
            Origin::Specific => "S_",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub name: String,
    pub origin: Origin,
    pub kind: PropertyKind,
    /// Source path of a derived property (e.g. `adresse.ville`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<Vec<String>>,
    /// Source interface a derived relation points to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_target: Option<String>,
}

impl PropertyDef {
    pub fn is_attribute(&self) -> bool {
        !self.kind.is_relation()
    }

    /// Same name, kind and origin; what multiple inheritance may merge.
    pub fn same_definition(&self, other: &PropertyDef) -> bool {
        self.name == other.name && self.origin == other.origin && same_kind(&self.kind, &other.kind)
    }
}

pub fn same_kind(a: &PropertyKind, b: &PropertyKind) -> bool {
    match (a, b) {
        (PropertyKind::Attribute(x), PropertyKind::Attribute(y)) => x.same_shape(y),
        (PropertyKind::Relation(x), PropertyKind::Relation(y)) => x == y,
        _ => false,
    }
}

/// Outcome of merging inherited property lists.
pub enum MergeError {
    Conflict(String),
}

/// Appends `props` into `acc`, merging duplicates that `same` accepts.
pub(crate) fn merge_properties<T: Clone>(
    acc: &mut Vec<T>,
    index: &mut BTreeMap<String, usize>,
    props: impl IntoIterator<Item = T>,
    name: impl Fn(&T) -> &str,
    same: impl Fn(&T, &T) -> bool,
) -> Result<(), MergeError> {
    for p in props {
        match index.get(name(&p)) {
            Some(&i) => {
                if !same(&acc[i], &p) {
                    return Err(MergeError::Conflict(name(&p).to_string()));
                }
            }
            None => {
                index.insert(name(&p).to_string(), acc.len());
                acc.push(p);
            }
        }
    }
    Ok(())
}
