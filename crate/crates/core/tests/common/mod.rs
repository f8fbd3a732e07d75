#![allow(dead_code)]

pub mod algebra_oracle;
pub mod temporal_oracle;

use owh_core::dsl::{parse_warehouse_def, resolve};
use owh_core::model::WarehouseSchema;
use owh_core::snapshot::{ingest_snapshot, Snapshot};
use owh_core::source::{parse_source_schema, SourceSchema};
use owh_core::temporal::Instant;

pub const ODL: &str = include_str!("../../fixtures/hospital.odl");
pub const EDW: &str = include_str!("../../fixtures/hospital.edw");
pub const JSONL: &str = include_str!("../../fixtures/hospital.jsonl");

pub fn source() -> SourceSchema {
    parse_source_schema(ODL).unwrap()
}

pub fn schema() -> WarehouseSchema {
    resolve(&parse_warehouse_def(EDW).unwrap(), &source()).unwrap_or_else(|e| panic!("{e}"))
}

pub fn snapshot(text: &str, year: i64) -> Snapshot {
    ingest_snapshot(&source(), text, Instant::year(year)).unwrap_or_else(|e| panic!("{e}"))
}

/// Rewrites the JSON lines, letting `f` edit each record.
pub fn edit(text: &str, mut f: impl FnMut(&mut serde_json::Value)) -> String {
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        f(&mut v);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

/// Sets `values.prop` of record `id`.
pub fn set_value(text: &str, id: &str, prop: &str, value: serde_json::Value) -> String {
    edit(text, |r| {
        if r["id"] == id {
            r["values"][prop] = value.clone();
        }
    })
}
