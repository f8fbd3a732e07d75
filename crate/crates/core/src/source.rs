//! Global source schema: ODL-style interfaces with attributes, bidirectional
//! relationships, compositions and (multiple) inheritance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::property::{
    merge_properties, MergeError, Property, PropertyKind, RelationDef, RelationKind,
};
use crate::syntax::{Cursor, Pos, SyntaxError, Tok};
use crate::value::ValueType;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceSchemaError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: unknown interface `{name}`")]
    UnknownInterface { name: String, pos: Pos },
    #[error("{pos}: interface `{name}` declared twice")]
    DuplicateInterface { name: String, pos: Pos },
    #[error("{pos}: property `{property}` declared twice in `{interface}`")]
    DuplicateProperty {
        interface: String,
        property: String,
        pos: Pos,
    },
    #[error("{pos}: `{interface}::{relationship}` declares inverse `{target}::{inverse}` which does not point back")]
    InverseMismatch {
        interface: String,
        relationship: String,
        target: String,
        inverse: String,
        pos: Pos,
    },
    #[error("inheritance cycle through `{0}`")]
    InheritanceCycle(String),
    #[error("`{interface}` inherits conflicting definitions of `{property}`")]
    PropertyConflict { interface: String, property: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInterface {
    pub name: String,
    pub supers: Vec<String>,
    pub properties: Vec<Property>,
    /// Operation names; retained, never evaluated.
    pub operations: Vec<String>,
    #[serde(skip)]
    pub pos: Pos,
}

impl SourceInterface {
    pub fn own(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn attributes(&self) -> impl Iterator<Item = &Property> {
        self.properties.iter().filter(|p| !p.kind.is_relation())
    }

    pub fn relationships(&self) -> impl Iterator<Item = &Property> {
        self.properties.iter().filter(
            |p| matches!(&p.kind, PropertyKind::Relation(r) if r.kind == RelationKind::Association),
        )
    }

    pub fn compositions(&self) -> impl Iterator<Item = &Property> {
        self.properties.iter().filter(
            |p| matches!(&p.kind, PropertyKind::Relation(r) if r.kind == RelationKind::Composition),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceSchema {
    pub interfaces: BTreeMap<String, SourceInterface>,
}

impl SourceSchema {
    pub fn get(&self, name: &str) -> Option<&SourceInterface> {
        self.interfaces.get(name)
    }

    /// Own and inherited properties; supers first, in declaration order.
    pub fn flatten(&self, name: &str) -> Result<Vec<Property>, SourceSchemaError> {
        let mut acc = Vec::new();
        let mut index = BTreeMap::new();
        self.flatten_into(name, &mut acc, &mut index, &mut Vec::new())?;
        Ok(acc)
    }

    fn flatten_into(
        &self,
        name: &str,
        acc: &mut Vec<Property>,
        index: &mut BTreeMap<String, usize>,
        stack: &mut Vec<String>,
    ) -> Result<(), SourceSchemaError> {
        if stack.iter().any(|s| s == name) {
            return Err(SourceSchemaError::InheritanceCycle(name.to_string()));
        }
        let iface = self
            .get(name)
            .ok_or_else(|| SourceSchemaError::UnknownInterface {
                name: name.to_string(),
                pos: Pos::default(),
            })?;
        stack.push(name.to_string());
        for sup in &iface.supers {
            self.flatten_into(sup, acc, index, stack)?;
        }
        stack.pop();
        merge_properties(
            acc,
            index,
            iface.properties.iter().cloned(),
            |p| &p.name,
            |a, b| a == b,
        )
        .map_err(
            |MergeError::Conflict(property)| SourceSchemaError::PropertyConflict {
                interface: name.to_string(),
                property,
            },
        )
    }

    pub fn flattened_property(&self, interface: &str, prop: &str) -> Option<Property> {
        self.flatten(interface)
            .ok()?
            .into_iter()
            .find(|p| p.name == prop)
    }

    /// `descendant` equals `ancestor` or inherits from it transitively.
    pub fn is_a(&self, descendant: &str, ancestor: &str) -> bool {
        let mut seen = BTreeSet::new();
        let mut todo = vec![descendant.to_string()];
        while let Some(n) = todo.pop() {
            if n == ancestor {
                return true;
            }
            if seen.insert(n.clone()) {
                if let Some(i) = self.get(&n) {
                    todo.extend(i.supers.iter().cloned());
                }
            }
        }
        false
    }

    /// Topmost ancestor names of an interface (its identifier namespace).
    pub fn roots(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut todo = vec![name.to_string()];
        while let Some(n) = todo.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            match self.get(&n) {
                Some(i) if !i.supers.is_empty() => todo.extend(i.supers.iter().cloned()),
                _ => {
                    out.insert(n);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SourceSchemaError> {
        for iface in self.interfaces.values() {
            for sup in &iface.supers {
                if !self.interfaces.contains_key(sup) {
                    return Err(SourceSchemaError::UnknownInterface {
                        name: sup.clone(),
                        pos: iface.pos,
                    });
                }
            }
            for p in &iface.properties {
                if let PropertyKind::Relation(r) = &p.kind {
                    if !self.interfaces.contains_key(&r.target) {
                        return Err(SourceSchemaError::UnknownInterface {
                            name: r.target.clone(),
                            pos: iface.pos,
                        });
                    }
                }
            }
        }
        for iface in self.interfaces.values() {
            self.flatten(&iface.name)?;
        }
        for iface in self.interfaces.values() {
            for p in &iface.properties {
                let PropertyKind::Relation(r) = &p.kind else {
                    continue;
                };
                let Some(inv) = &r.inverse else { continue };
                let back = self
                    .flattened_property(&r.target, inv)
                    .and_then(|bp| bp.kind.relation().cloned());
                let ok = back.is_some_and(|b| {
                    b.inverse.as_deref() == Some(p.name.as_str())
                        && self.is_a(&iface.name, &b.target)
                });
                if !ok {
                    return Err(SourceSchemaError::InverseMismatch {
                        interface: iface.name.clone(),
                        relationship: p.name.clone(),
                        target: r.target.clone(),
                        inverse: inv.clone(),
                        pos: iface.pos,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses `String | Short | Long | Double | Date | Image | Struct N { T f, .. } | Set<T>`.
pub(crate) fn parse_value_type(c: &mut Cursor) -> Result<ValueType, SyntaxError> {
    let pos = c.pos();
    let word = c.ident("type")?;
    if let Some(t) = ValueType::from_keyword(&word) {
        return Ok(t);
    }
    match word.as_str() {
        "Struct" => {
            let name = match c.peek() {
                Tok::Ident(_) => Some(c.ident("struct name")?),
                _ => None,
            };
            c.expect(&Tok::LBrace)?;
            let fields = c.comma_list(|c| {
                let t = parse_value_type(c)?;
                let n = c.ident("field name")?;
                Ok((n, t))
            })?;
            c.expect(&Tok::RBrace)?;
            Ok(ValueType::Struct { name, fields })
        }
        "Set" => {
            c.expect(&Tok::Lt)?;
            let inner = parse_value_type(c)?;
            c.expect(&Tok::Gt)?;
            Ok(ValueType::Set(Box::new(inner)))
        }
        _ => Err(SyntaxError {
            line: pos.line,
            col: pos.col,
            expected: "type".into(),
            found: format!("`{word}`"),
        }),
    }
}

/// Parses `Set<Target>` (many) or `<Target>` (one).
pub(crate) fn parse_relation_target(c: &mut Cursor) -> Result<(String, bool), SyntaxError> {
    let many = c.eat_keyword("Set");
    c.expect(&Tok::Lt)?;
    let target = c.ident("relationship target")?;
    c.expect(&Tok::Gt)?;
    Ok((target, many))
}

/// Parses `( extend A, B )` if present.
pub(crate) fn parse_extends(c: &mut Cursor) -> Result<Vec<String>, SyntaxError> {
    if !c.eat(&Tok::LParen) {
        return Ok(Vec::new());
    }
    c.expect_keyword("extend")?;
    let supers = c.comma_list(|c| c.ident("interface name"))?;
    c.expect(&Tok::RParen)?;
    Ok(supers)
}

pub fn parse_source_schema(text: &str) -> Result<SourceSchema, SourceSchemaError> {
    let mut c = Cursor::new(text)?;
    let mut schema = SourceSchema::default();
    while !c.at_eof() {
        let pos = c.pos();
        c.expect_keyword("interface")?;
        let name = c.ident("interface name")?;
        let supers = parse_extends(&mut c)?;
        c.expect(&Tok::LBrace)?;
        let mut iface = SourceInterface {
            name: name.clone(),
            supers,
            properties: Vec::new(),
            operations: Vec::new(),
            pos,
        };
        while !c.eat(&Tok::RBrace) {
            let mpos = c.pos();
            let prop = parse_member(&mut c, &name, &mut iface.operations)?;
            if let Some(prop) = prop {
                if iface.own(&prop.name).is_some() {
                    return Err(SourceSchemaError::DuplicateProperty {
                        interface: name,
                        property: prop.name,
                        pos: mpos,
                    });
                }
                iface.properties.push(prop);
            }
        }
        c.eat(&Tok::Semi);
        if schema.interfaces.contains_key(&name) {
            return Err(SourceSchemaError::DuplicateInterface { name, pos });
        }
        schema.interfaces.insert(name, iface);
    }
    schema.validate()?;
    Ok(schema)
}

fn parse_member(
    c: &mut Cursor,
    owner: &str,
    operations: &mut Vec<String>,
) -> Result<Option<Property>, SourceSchemaError> {
    if c.eat_keyword("attribute") {
        let ty = parse_value_type(c)?;
        let name = c.ident("attribute name")?;
        c.expect(&Tok::Semi)?;
        return Ok(Some(Property {
            name,
            kind: PropertyKind::Attribute(ty),
        }));
    }
    let kind = if c.eat_keyword("relationship") {
        RelationKind::Association
    } else if c.eat_keyword("composition") {
        RelationKind::Composition
    } else {
        // operation signature: retained by name only
        c.ident("member")?;
        if c.eat(&Tok::Lt) {
            c.ident("type")?;
            c.expect(&Tok::Gt)?;
        }
        let name = c.ident("operation name")?;
        c.expect(&Tok::LParen)?;
        let mut depth = 1;
        while depth > 0 {
            match c.advance() {
                Tok::LParen => depth += 1,
                Tok::RParen => depth -= 1,
                Tok::Eof => return Err(c.error("`)`").into()),
                _ => {}
            }
        }
        c.expect(&Tok::Semi)?;
        operations.push(name);
        return Ok(None);
    };
    let (target, many) = parse_relation_target(c)?;
    let name = c.ident("relationship name")?;
    let mut inverse = None;
    if c.eat_keyword("inverse") {
        let ipos = c.pos();
        let iface = c.ident("interface name")?;
        c.expect(&Tok::ColonColon)?;
        let inv = c.ident("inverse name")?;
        if iface != target {
            return Err(SourceSchemaError::InverseMismatch {
                interface: owner.to_string(),
                relationship: name,
                target,
                inverse: format!("{iface}::{inv}"),
                pos: ipos,
            });
        }
        inverse = Some(inv);
    }
    c.expect(&Tok::Semi)?;
    // Image is an opaque media reference, not an interface.
    if target == "Image" && kind == RelationKind::Association && inverse.is_none() {
        let ty = if many {
            ValueType::Set(Box::new(ValueType::Image))
        } else {
            ValueType::Image
        };
        return Ok(Some(Property {
            name,
            kind: PropertyKind::Attribute(ty),
        }));
    }
    Ok(Some(Property {
        name,
        kind: PropertyKind::Relation(RelationDef {
            kind,
            target,
            many,
            inverse,
        }),
    }))
}

pub(crate) fn relation_target_text(r: &RelationDef) -> String {
    if r.many {
        format!("Set<{}>", r.target)
    } else {
        format!("<{}>", r.target)
    }
}

pub fn print_source_schema(schema: &SourceSchema) -> String {
    let mut out = String::new();
    for iface in schema.interfaces.values() {
        let _ = write!(out, "interface {}", iface.name);
        if !iface.supers.is_empty() {
            let _ = write!(out, " (extend {})", iface.supers.join(", "));
        }
        out.push_str(" {\n");
        for p in &iface.properties {
            match &p.kind {
                PropertyKind::Attribute(t) => {
                    let _ = writeln!(out, "    attribute {t} {};", p.name);
                }
                PropertyKind::Relation(r) => {
                    let kw = match r.kind {
                        RelationKind::Association => "relationship",
                        RelationKind::Composition => "composition",
                    };
                    let _ = write!(out, "    {kw} {} {}", relation_target_text(r), p.name);
                    if let Some(inv) = &r.inverse {
                        let _ = write!(out, " inverse {}::{inv}", r.target);
                    }
                    out.push_str(";\n");
                }
            }
        }
        for op in &iface.operations {
            let _ = writeln!(out, "    void {op}();");
        }
        out.push_str("}\n\n");
    }
    out
}
