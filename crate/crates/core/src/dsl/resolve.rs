//! Resolution of a parsed definition against a source schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::{ConfigEntry, MappingExpr, WarehouseDef};
use crate::algebra::{
    class_build, compile_predicate, eval_extraction, eval_specialize, filter_operand,
    generalize_shapes, generalized_names, AlgebraError, ClassShape,
};
use crate::model::{
    ClassRole, Environment, ModelError, RetentionConfig, ViolationKind, WarehouseClass,
    WarehouseSchema,
};
use crate::property::{Origin, PropertyDef, PropertyKind};
use crate::snapshot::Snapshot;
use crate::source::SourceSchema;
use crate::syntax::Pos;
use crate::temporal::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolveIssueKind {
    DuplicateClass,
    DuplicateProperty,
    DuplicateEnvironment,
    DuplicateMapping,
    UnknownClass,
    MissingMapping,
    UnknownSourceInterface,
    UnresolvedSourceProperty,
    TypeMismatch,
    TypeInferenceError,
    OriginMismatch,
    Mapping,
    HierarchizationMismatch,
    Violation(ViolationKind),
}

impl ResolveIssueKind {
    pub fn name(self) -> &'static str {
        match self {
            ResolveIssueKind::DuplicateClass => "duplicate-class",
            ResolveIssueKind::DuplicateProperty => "duplicate-property",
            ResolveIssueKind::DuplicateEnvironment => "duplicate-environment",
            ResolveIssueKind::DuplicateMapping => "duplicate-mapping",
            ResolveIssueKind::UnknownClass => "unknown-class",
            ResolveIssueKind::MissingMapping => "missing-mapping",
            ResolveIssueKind::UnknownSourceInterface => "unknown-source-interface",
            ResolveIssueKind::UnresolvedSourceProperty => "unresolved-source-property",
            ResolveIssueKind::TypeMismatch => "type-mismatch",
            ResolveIssueKind::TypeInferenceError => "type-inference",
            ResolveIssueKind::OriginMismatch => "origin-mismatch",
            ResolveIssueKind::Mapping => "mapping",
            ResolveIssueKind::HierarchizationMismatch => "hierarchization-mismatch",
            ResolveIssueKind::Violation(v) => v.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveIssue {
    pub kind: ResolveIssueKind,
    pub class: Option<String>,
    pub property: Option<String>,
    pub pos: Option<Pos>,
    pub message: String,
}

impl fmt::Display for ResolveIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.pos {
            write!(f, "{p}: ")?;
        }
        write!(f, "[{}] ", self.kind.name())?;
        match (&self.class, &self.property) {
            (Some(c), Some(p)) => write!(f, "{c}.{p}: ")?,
            (Some(c), None) => write!(f, "{c}: ")?,
            _ => {}
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ResolveError(pub Vec<ResolveIssue>);

impl ResolveError {
    pub fn issues(&self) -> &[ResolveIssue] {
        &self.0
    }

    pub fn count(&self, kind: ResolveIssueKind) -> usize {
        self.0.iter().filter(|i| i.kind == kind).count()
    }
}

impl fmt::Display for ResolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn fold_config(entries: &[ConfigEntry]) -> RetentionConfig {
    let mut c = RetentionConfig::default();
    for e in entries {
        match e {
            ConfigEntry::RefreshEvery(p) => c.refresh_period = Some(*p),
            ConfigEntry::KeepPast(n) => c.keep_past_count = Some(*n),
            ConfigEntry::KeepFor(p) => c.keep_past_duration = Some(*p),
        }
    }
    c
}

struct Resolver<'a> {
    src: &'a SourceSchema,
    issues: Vec<ResolveIssue>,
    class_pos: BTreeMap<String, Pos>,
    prop_pos: BTreeMap<(String, String), Pos>,
    mapping_pos: BTreeMap<String, Pos>,
}

impl Resolver<'_> {
    fn issue(
        &mut self,
        kind: ResolveIssueKind,
        class: Option<&str>,
        property: Option<&str>,
        pos: Option<Pos>,
        message: impl Into<String>,
    ) {
        self.issues.push(ResolveIssue {
            kind,
            class: class.map(str::to_string),
            property: property.map(str::to_string),
            pos,
            message: message.into(),
        });
    }

    fn pos_of(&self, class: &str, prop: Option<&str>) -> Option<Pos> {
        prop.and_then(|p| {
            self.prop_pos
                .get(&(class.to_string(), p.to_string()))
                .copied()
        })
        .or_else(|| self.class_pos.get(class).copied())
    }

    fn algebra_issue(&mut self, class: &str, e: AlgebraError) {
        let kind = match e {
            AlgebraError::TypeInference { .. } | AlgebraError::NonNumericAggregate(_) => {
                ResolveIssueKind::TypeInferenceError
            }
            AlgebraError::UnknownInterface(_) => ResolveIssueKind::UnknownSourceInterface,
            _ => ResolveIssueKind::Mapping,
        };
        let pos = self.mapping_pos.get(class).copied();
        self.issue(kind, Some(class), None, pos, e.to_string());
    }
}

/// Source interfaces whose objects feed a class, directly or through operands.
fn origin_interfaces(schema: &WarehouseSchema, class: &str, depth: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let Some(c) = schema.classes.get(class) else {
        return out;
    };
    if depth > schema.classes.len() {
        return out;
    }
    match &c.mapping {
        Some(m @ (MappingExpr::Generalize { .. } | MappingExpr::Specialize { .. })) => {
            for op in m.operand_classes() {
                out.extend(origin_interfaces(schema, op, depth + 1));
            }
        }
        Some(m) => out.extend(m.source_interfaces().into_iter().map(str::to_string)),
        None => {}
    }
    out
}

/// Declaring class of each flattened property of `class`.
fn declaring_class(schema: &WarehouseSchema, class: &str, prop: &str) -> Option<String> {
    let mut todo = vec![class.to_string()];
    let mut seen = BTreeSet::new();
    while let Some(c) = todo.pop() {
        if !seen.insert(c.clone()) {
            continue;
        }
        let wc = schema.classes.get(&c)?;
        if wc.structure.iter().any(|p| p.name == prop) {
            return Some(c);
        }
        todo.extend(wc.supers.iter().rev().cloned());
    }
    None
}

/// Resolves a parsed definition into a validated warehouse schema.
pub fn resolve(def: &WarehouseDef, src: &SourceSchema) -> Result<WarehouseSchema, ResolveError> {
    use ResolveIssueKind as K;
    let mut r = Resolver {
        src,
        issues: Vec::new(),
        class_pos: BTreeMap::new(),
        prop_pos: BTreeMap::new(),
        mapping_pos: BTreeMap::new(),
    };
    let mut schema = WarehouseSchema {
        name: def.name.clone().unwrap_or_else(|| "warehouse".into()),
        config: fold_config(&def.config),
        ..WarehouseSchema::default()
    };

    for decl in &def.classes {
        if schema.classes.contains_key(&decl.name) {
            r.issue(
                K::DuplicateClass,
                Some(&decl.name),
                None,
                Some(decl.pos),
                "class declared twice",
            );
            continue;
        }
        r.class_pos.insert(decl.name.clone(), decl.pos);
        let mut class = WarehouseClass::new(&decl.name);
        class.supers = decl.supers.clone();
        for p in &decl.properties {
            if class.structure.iter().any(|d| d.name == p.name) {
                r.issue(
                    K::DuplicateProperty,
                    Some(&decl.name),
                    Some(&p.name),
                    Some(p.pos),
                    "property declared twice",
                );
                continue;
            }
            r.prop_pos
                .insert((decl.name.clone(), p.name.clone()), p.pos);
            class.structure.push(PropertyDef {
                name: p.name.clone(),
                origin: p.origin,
                kind: p.kind.clone(),
                source_path: None,
                source_target: None,
            });
        }
        if let Some(f) = &decl.filters {
            class.tempo.extend(f.temporal.iter().cloned());
            for (func, p) in &f.archive {
                if class.archi.insert(p.clone(), *func).is_some() {
                    r.issue(
                        K::DuplicateProperty,
                        Some(&decl.name),
                        Some(p),
                        Some(decl.pos),
                        "property archived twice",
                    );
                }
            }
        }
        schema.classes.insert(decl.name.clone(), class);
    }

    for m in &def.mappings {
        let Some(class) = schema.classes.get_mut(&m.class) else {
            r.issue(
                K::UnknownClass,
                Some(&m.class),
                None,
                Some(m.pos),
                "mapping for an undeclared class",
            );
            continue;
        };
        if class.mapping.is_some() {
            r.issue(
                K::DuplicateMapping,
                Some(&m.class),
                None,
                Some(m.pos),
                "class mapped twice",
            );
            continue;
        }
        class.mapping = Some(m.expr.clone());
        r.mapping_pos.insert(m.class.clone(), m.pos);
    }
    let unmapped: Vec<String> = schema
        .classes
        .values()
        .filter(|c| c.mapping.is_none())
        .map(|c| c.name.clone())
        .collect();
    for c in unmapped {
        let pos = r.pos_of(&c, None);
        r.issue(
            K::MissingMapping,
            Some(&c),
            None,
            pos,
            "class has no mapping",
        );
    }

    for e in &def.environments {
        if schema.environments.contains_key(&e.name) {
            r.issue(
                K::DuplicateEnvironment,
                None,
                None,
                Some(e.pos),
                format!("environment `{}` declared twice", e.name),
            );
            continue;
        }
        schema.environments.insert(
            e.name.clone(),
            Environment {
                name: e.name.clone(),
                classes: e.classes.clone(),
                config: fold_config(&e.config),
            },
        );
    }

    let names: Vec<String> = schema.classes.keys().cloned().collect();
    let mut provenance: Vec<(String, String, Vec<String>, Option<String>)> = Vec::new();
    for name in &names {
        match schema.role(name) {
            ClassRole::Extraction => check_extraction(&mut r, &schema, name, &mut provenance),
            ClassRole::Generalization => check_generalization(&mut r, &schema, name),
            ClassRole::Specialization => check_specialization(&mut r, &schema, name),
            ClassRole::Unmapped => {}
        }
    }
    for (class, prop, path, target) in provenance {
        if let Some(p) = schema
            .classes
            .get_mut(&class)
            .and_then(|c| c.structure.iter_mut().find(|p| p.name == prop))
        {
            if p.source_path.is_none() {
                p.source_path = Some(path);
                p.source_target = target;
            }
        }
    }

    for v in schema.validate_schema() {
        let pos = r.pos_of(&v.class, v.property.as_deref());
        r.issues.push(ResolveIssue {
            kind: K::Violation(v.kind),
            class: Some(v.class),
            property: v.property,
            pos,
            message: v.message,
        });
    }

    if r.issues.is_empty() {
        Ok(schema)
    } else {
        Err(ResolveError(r.issues))
    }
}

fn check_extraction(
    r: &mut Resolver,
    schema: &WarehouseSchema,
    name: &str,
    provenance: &mut Vec<(String, String, Vec<String>, Option<String>)>,
) {
    use ResolveIssueKind as K;
    let expr = schema.classes[name]
        .mapping
        .as_ref()
        .expect("extraction class is mapped");
    let mpos = r.mapping_pos.get(name).copied();
    let mut bad_iface = false;
    for iface in expr.source_interfaces() {
        if r.src.get(iface).is_none() {
            r.issue(
                K::UnknownSourceInterface,
                Some(name),
                None,
                mpos,
                format!("unknown source interface `{iface}`"),
            );
            bad_iface = true;
        }
    }
    if bad_iface {
        return;
    }
    let build = match eval_extraction(expr, r.src, &Snapshot::empty(Instant::year(1970))) {
        Ok(b) => b,
        Err(e) => return r.algebra_issue(name, e),
    };
    let Ok(flat) = schema.flatten_type(name) else {
        return;
    };
    for decl in &flat {
        let owner = declaring_class(schema, name, &decl.name).unwrap_or_else(|| name.to_string());
        let pos = r.pos_of(&owner, Some(&decl.name));
        let shape = build
            .structure
            .iter()
            .find(|p| p.def.name == decl.name)
            .map(|p| &p.def);
        let coords = (Some(name), Some(decl.name.as_str()));
        match decl.origin {
            Origin::Derived => {
                let Some(shape) = shape else {
                    r.issue(
                        K::UnresolvedSourceProperty,
                        coords.0,
                        coords.1,
                        pos,
                        "no source property of that name reaches the mapping output",
                    );
                    continue;
                };
                if shape.origin != Origin::Derived {
                    r.issue(
                        K::OriginMismatch,
                        coords.0,
                        coords.1,
                        pos,
                        format!("declared derived, mapping makes it {:?}", shape.origin),
                    );
                    continue;
                }
                match (&decl.kind, &shape.kind) {
                    (PropertyKind::Attribute(d), PropertyKind::Attribute(s)) => {
                        if !d.same_shape(s) {
                            r.issue(
                                K::TypeMismatch,
                                coords.0,
                                coords.1,
                                pos,
                                format!("declared {d}, source has {s}"),
                            );
                            continue;
                        }
                    }
                    (PropertyKind::Relation(d), PropertyKind::Relation(s)) => {
                        if d.kind != s.kind || d.many != s.many {
                            r.issue(
                                K::TypeMismatch,
                                coords.0,
                                coords.1,
                                pos,
                                "relation kind or cardinality differs from the source",
                            );
                            continue;
                        }
                        if let (Some(di), Some(si)) = (&d.inverse, &s.inverse) {
                            if di != si {
                                r.issue(
                                    K::TypeMismatch,
                                    coords.0,
                                    coords.1,
                                    pos,
                                    format!("inverse `{di}` differs from source inverse `{si}`"),
                                );
                                continue;
                            }
                        }
                        if schema.classes.contains_key(&d.target) {
                            let origins = origin_interfaces(schema, &d.target, 0);
                            let fits = origins
                                .iter()
                                .any(|o| r.src.is_a(&s.target, o) || r.src.is_a(o, &s.target));
                            if !fits {
                                r.issue(
                                    K::TypeMismatch,
                                    coords.0,
                                    coords.1,
                                    pos,
                                    format!(
                                        "class `{}` is not built from source interface `{}`",
                                        d.target, s.target
                                    ),
                                );
                                continue;
                            }
                        }
                    }
                    _ => {
                        r.issue(
                            K::TypeMismatch,
                            coords.0,
                            coords.1,
                            pos,
                            "attribute/relation mismatch with the source",
                        );
                        continue;
                    }
                }
                provenance.push((
                    owner,
                    decl.name.clone(),
                    shape
                        .source_path
                        .clone()
                        .unwrap_or_else(|| vec![decl.name.clone()]),
                    shape.source_target.clone(),
                ));
            }
            Origin::Computed => {
                let inferred = shape
                    .filter(|s| s.origin == Origin::Computed)
                    .and_then(|s| s.kind.attribute_type());
                let Some(inferred) = inferred else {
                    r.issue(
                        K::TypeInferenceError,
                        coords.0,
                        coords.1,
                        pos,
                        "no augment binding computes this property",
                    );
                    continue;
                };
                let ok = match decl.kind.attribute_type() {
                    Some(d) if inferred.is_integer() => d.is_integer(),
                    Some(d) => d.same_shape(inferred),
                    None => false,
                };
                if !ok {
                    r.issue(
                        K::TypeMismatch,
                        coords.0,
                        coords.1,
                        pos,
                        format!("declared type does not match the inferred {inferred}"),
                    );
                }
            }
            Origin::Specific => {
                if let Some(s) = shape {
                    if s.origin != Origin::Specific {
                        r.issue(
                            K::OriginMismatch,
                            coords.0,
                            coords.1,
                            pos,
                            "declared specific, mapping derives or computes it",
                        );
                    } else if !same_kind_shape(&decl.kind, &s.kind) {
                        r.issue(
                            K::TypeMismatch,
                            coords.0,
                            coords.1,
                            pos,
                            "declared type differs from the augment binding",
                        );
                    }
                }
            }
        }
    }
}

fn same_kind_shape(a: &PropertyKind, b: &PropertyKind) -> bool {
    match (a, b) {
        (PropertyKind::Attribute(x), PropertyKind::Attribute(y)) => x.same_shape(y),
        _ => false,
    }
}

fn shape_of(schema: &WarehouseSchema, name: &str) -> Result<ClassShape, ModelError> {
    let c = schema.class(name)?;
    Ok(ClassShape {
        name: name.to_string(),
        declared: c.structure.clone(),
        flattened: schema.flatten_type(name)?,
        supers: c.supers.clone(),
    })
}

fn check_operands_exist(r: &mut Resolver, schema: &WarehouseSchema, name: &str) -> bool {
    let expr = schema.classes[name].mapping.as_ref().expect("mapped");
    let mpos = r.mapping_pos.get(name).copied();
    let mut ok = true;
    let mut binders = BTreeSet::new();
    if let MappingExpr::Generalize { operands, .. } | MappingExpr::Specialize { operands, .. } =
        expr
    {
        if operands.is_empty() {
            r.issue(
                ResolveIssueKind::Mapping,
                Some(name),
                None,
                mpos,
                "no operands",
            );
            ok = false;
        }
        for o in operands {
            if !binders.insert(o.binder.clone()) {
                r.issue(
                    ResolveIssueKind::Mapping,
                    Some(name),
                    None,
                    mpos,
                    format!("binder `{}` is bound twice", o.binder),
                );
                ok = false;
            }
            if !schema.classes.contains_key(&o.class) {
                r.issue(
                    ResolveIssueKind::UnknownClass,
                    Some(name),
                    None,
                    mpos,
                    format!("operand `{}` is not a warehouse class", o.class),
                );
                ok = false;
            } else if o.class == name {
                r.issue(
                    ResolveIssueKind::HierarchizationMismatch,
                    Some(name),
                    None,
                    mpos,
                    "a class cannot be its own operand",
                );
                ok = false;
            }
        }
    }
    ok
}

fn check_generalization(r: &mut Resolver, schema: &WarehouseSchema, name: &str) {
    use ResolveIssueKind as K;
    if !check_operands_exist(r, schema, name) {
        return;
    }
    let Some(MappingExpr::Generalize {
        properties,
        operands,
    }) = &schema.classes[name].mapping
    else {
        return;
    };
    let mpos = r.mapping_pos.get(name).copied();
    let props = match generalized_names(properties, operands) {
        Ok(p) => p,
        Err(e) => return r.algebra_issue(name, e),
    };
    let shapes: Result<Vec<ClassShape>, ModelError> = operands
        .iter()
        .map(|o| shape_of(schema, &o.class))
        .collect();
    let Ok(shapes) = shapes else {
        return;
    };
    let (c0, _) = match generalize_shapes(name, &props, &shapes) {
        Ok(x) => x,
        Err(e) => return r.algebra_issue(name, e),
    };
    let declared = &schema.classes[name];
    let mismatch = |r: &mut Resolver, msg: String| {
        r.issue(K::HierarchizationMismatch, Some(name), None, mpos, msg);
    };
    let declared_names: BTreeSet<&str> =
        declared.structure.iter().map(|p| p.name.as_str()).collect();
    let lifted: BTreeSet<&str> = props.iter().map(String::as_str).collect();
    if declared_names != lifted {
        mismatch(r, format!("declared structure {declared_names:?} differs from the generalized properties {lifted:?}"));
    }
    for d in &declared.structure {
        if let Some(c) = c0.declared.iter().find(|p| p.name == d.name) {
            if !c.same_definition(d) {
                mismatch(
                    r,
                    format!("`{}` is declared differently from the operands", d.name),
                );
            }
        }
    }
    for (o, shape) in operands.iter().zip(&shapes) {
        if !shape.supers.iter().any(|s| s == name) {
            mismatch(
                r,
                format!("operand `{}` must list `{name}` among its supers", o.class),
            );
        }
        if let Some(p) = shape
            .declared
            .iter()
            .find(|p| lifted.contains(p.name.as_str()))
        {
            mismatch(
                r,
                format!(
                    "operand `{}` still declares the generalized property `{}`",
                    o.class, p.name
                ),
            );
        }
    }
    let expected_supers: BTreeSet<&String> = operands
        .iter()
        .zip(&shapes)
        .map(|(_, s)| {
            s.supers
                .iter()
                .filter(|x| *x != name)
                .collect::<BTreeSet<_>>()
        })
        .reduce(|a, b| a.intersection(&b).copied().collect())
        .unwrap_or_default();
    let actual: BTreeSet<&String> = declared.supers.iter().collect();
    if !expected_supers.is_subset(&actual) {
        mismatch(
            r,
            "supers must include the supers common to every operand".into(),
        );
    }
}

fn check_specialization(r: &mut Resolver, schema: &WarehouseSchema, name: &str) {
    use ResolveIssueKind as K;
    if !check_operands_exist(r, schema, name) {
        return;
    }
    let Some(MappingExpr::Specialize {
        operands,
        predicate,
    }) = &schema.classes[name].mapping
    else {
        return;
    };
    let mpos = r.mapping_pos.get(name).copied();
    let declared = &schema.classes[name];
    let want: BTreeSet<&str> = operands.iter().map(|o| o.class.as_str()).collect();
    let have: BTreeSet<&str> = declared.supers.iter().map(String::as_str).collect();
    if want != have {
        r.issue(
            K::HierarchizationMismatch,
            Some(name),
            None,
            mpos,
            format!("supers {have:?} must be exactly the operands {want:?}"),
        );
    }
    if !declared.structure.is_empty() {
        r.issue(
            K::HierarchizationMismatch,
            Some(name),
            None,
            mpos,
            "a specialization inherits its whole structure and declares none",
        );
    }
    let mut builds = Vec::new();
    for o in operands {
        let Ok(flat) = schema.flatten_type(&o.class) else {
            return;
        };
        let b = class_build(&o.binder, &flat, std::iter::empty());
        match filter_operand(b, o) {
            Ok(b) => builds.push(b),
            Err(e) => return r.algebra_issue(name, e),
        }
    }
    match eval_specialize(predicate, builds.clone()) {
        Ok(b) => {
            if let Err(e) = compile_predicate(predicate, &b) {
                r.algebra_issue(name, e);
            }
        }
        Err(e) => r.algebra_issue(name, e),
    }
}
