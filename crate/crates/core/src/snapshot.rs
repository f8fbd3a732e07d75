//! Point-in-time source extractions, read from line-delimited JSON records.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::property::{PropertyKind, RelationKind};
use crate::source::SourceSchema;
use crate::temporal::Instant;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown interface `{name}`")]
    UnknownInterface { line: usize, name: String },
    #[error("line {line}: `{interface}` has no property `{property}`")]
    UnknownProperty {
        line: usize,
        interface: String,
        property: String,
    },
    #[error("line {line}: type mismatch on `{property}`: {detail}")]
    TypeMismatch {
        line: usize,
        property: String,
        detail: String,
    },
    #[error("line {line}: duplicate id `{id}` for `{interface}`")]
    DuplicateId {
        line: usize,
        interface: String,
        id: String,
    },
    #[error("`{interface}:{id}`.{relation} references missing `{target}:{target_id}`")]
    DanglingReference {
        interface: String,
        id: String,
        relation: String,
        target: String,
        target_id: String,
    },
    #[error(
        "`{interface}:{id}`.{relation} links `{target_id}` but its `{inverse}` does not link back"
    )]
    InverseViolation {
        interface: String,
        id: String,
        relation: String,
        target_id: String,
        inverse: String,
    },
    #[error("`{target_id}` is a component of more than one composite through `{relation}`")]
    SharedComponent { relation: String, target_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRecord {
    pub interface: String,
    pub id: String,
    pub values: BTreeMap<String, Value>,
    pub links: BTreeMap<String, BTreeSet<String>>,
}

impl SourceRecord {
    pub fn to_json(&self) -> serde_json::Value {
        let values: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .map(|(k, v)| (k.clone(), v.to_json()))
            .collect();
        let links: serde_json::Map<String, serde_json::Value> = self
            .links
            .iter()
            .map(|(k, ids)| (k.clone(), ids.iter().cloned().collect()))
            .collect();
        serde_json::json!({
            "interface": self.interface,
            "id": self.id,
            "values": values,
            "links": links,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub at: Instant,
    /// Keyed by (interface, id).
    pub records: BTreeMap<(String, String), SourceRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    interface: String,
    id: String,
    #[serde(default)]
    values: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    links: BTreeMap<String, Vec<String>>,
}

impl Snapshot {
    pub fn empty(at: Instant) -> Self {
        Snapshot {
            at,
            records: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of `interface` and every interface inheriting from it, in key order.
    pub fn extension<'a>(
        &'a self,
        schema: &'a SourceSchema,
        interface: &'a str,
    ) -> impl Iterator<Item = &'a SourceRecord> + 'a {
        self.records
            .values()
            .filter(move |r| schema.is_a(&r.interface, interface))
    }

    pub fn find(&self, schema: &SourceSchema, interface: &str, id: &str) -> Option<&SourceRecord> {
        self.records
            .values()
            .find(|r| r.id == id && schema.is_a(&r.interface, interface))
    }

    /// Canonical line-delimited form: records in key order, object keys sorted.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for r in self.records.values() {
            out.push_str(&r.to_json().to_string());
            out.push('\n');
        }
        out
    }
}

pub fn ingest_snapshot(
    schema: &SourceSchema,
    text: &str,
    at: Instant,
) -> Result<Snapshot, SnapshotError> {
    let mut snap = Snapshot::empty(at);
    // ids share a namespace across each inheritance family
    let mut namespace: BTreeMap<(String, String), String> = BTreeMap::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(raw_line).map_err(|e| SnapshotError::Malformed {
                line,
                message: e.to_string(),
            })?;
        if schema.get(&raw.interface).is_none() {
            return Err(SnapshotError::UnknownInterface {
                line,
                name: raw.interface,
            });
        }
        let props = schema
            .flatten(&raw.interface)
            .map_err(|e| SnapshotError::Malformed {
                line,
                message: e.to_string(),
            })?;
        let unknown = |property: &str| SnapshotError::UnknownProperty {
            line,
            interface: raw.interface.clone(),
            property: property.to_string(),
        };
        for k in raw.values.keys() {
            if !props.iter().any(|p| &p.name == k && !p.kind.is_relation()) {
                return Err(unknown(k));
            }
        }
        for k in raw.links.keys() {
            if !props.iter().any(|p| &p.name == k && p.kind.is_relation()) {
                return Err(unknown(k));
            }
        }
        let mut values = BTreeMap::new();
        let mut links = BTreeMap::new();
        for p in &props {
            match &p.kind {
                PropertyKind::Attribute(ty) => {
                    let json = raw.values.get(&p.name).unwrap_or(&serde_json::Value::Null);
                    let v = Value::from_json(json, ty).map_err(|detail| {
                        SnapshotError::TypeMismatch {
                            line,
                            property: p.name.clone(),
                            detail,
                        }
                    })?;
                    values.insert(p.name.clone(), v);
                }
                PropertyKind::Relation(r) => {
                    let ids: BTreeSet<String> = raw
                        .links
                        .get(&p.name)
                        .map(|v| v.iter().cloned().collect())
                        .unwrap_or_default();
                    if !r.many && ids.len() > 1 {
                        return Err(SnapshotError::TypeMismatch {
                            line,
                            property: p.name.clone(),
                            detail: format!("single-valued relationship links {} ids", ids.len()),
                        });
                    }
                    links.insert(p.name.clone(), ids);
                }
            }
        }
        for root in schema.roots(&raw.interface) {
            if namespace
                .insert((root, raw.id.clone()), raw.interface.clone())
                .is_some()
            {
                return Err(SnapshotError::DuplicateId {
                    line,
                    interface: raw.interface,
                    id: raw.id,
                });
            }
        }
        let key = (raw.interface.clone(), raw.id.clone());
        snap.records.insert(
            key,
            SourceRecord {
                interface: raw.interface,
                id: raw.id,
                values,
                links,
            },
        );
    }
    check_links(schema, &snap)?;
    Ok(snap)
}

fn check_links(schema: &SourceSchema, snap: &Snapshot) -> Result<(), SnapshotError> {
    let mut components: BTreeMap<(String, String), usize> = BTreeMap::new();
    for rec in snap.records.values() {
        let props = schema.flatten(&rec.interface).unwrap_or_default();
        for p in &props {
            let PropertyKind::Relation(r) = &p.kind else {
                continue;
            };
            for target_id in rec.links.get(&p.name).into_iter().flatten() {
                let Some(target) = snap.find(schema, &r.target, target_id) else {
                    return Err(SnapshotError::DanglingReference {
                        interface: rec.interface.clone(),
                        id: rec.id.clone(),
                        relation: p.name.clone(),
                        target: r.target.clone(),
                        target_id: target_id.clone(),
                    });
                };
                if let Some(inv) = &r.inverse {
                    let back = target
                        .links
                        .get(inv)
                        .is_some_and(|ids| ids.contains(&rec.id));
                    if !back {
                        return Err(SnapshotError::InverseViolation {
                            interface: rec.interface.clone(),
                            id: rec.id.clone(),
                            relation: p.name.clone(),
                            target_id: target_id.clone(),
                            inverse: inv.clone(),
                        });
                    }
                }
                if r.kind == RelationKind::Composition {
                    let n = components
                        .entry((p.name.clone(), target_id.clone()))
                        .or_default();
                    *n += 1;
                    if *n > 1 {
                        return Err(SnapshotError::SharedComponent {
                            relation: p.name.clone(),
                            target_id: target_id.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}
