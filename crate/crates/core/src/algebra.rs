//! Evaluation of the construction functions over source snapshots and
//! warehouse extensions.
//!
//! Every build keeps the binder each property came from, so paths may be
//! written either bare (`nom`) or qualified (`h.nom`). Rows are kept sorted
//! by source key.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::dsl::{
    AggFn, Atom, AugmentBinding, ClassOperand, CmpOp, Literal, MappingExpr, Path, Predicate,
};
use crate::property::{same_kind, Origin, PropertyDef, PropertyKind};
use crate::snapshot::Snapshot;
use crate::source::SourceSchema;
use crate::value::{Oid, Value, ValueType};

/// Ordered `(interface, source id)` pairs identifying where a row came from.
pub type SourceKey = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("unknown source interface `{0}`")]
    UnknownInterface(String),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
    #[error("ambiguous property `{0}`; qualify it with a binder")]
    AmbiguousProperty(String),
    #[error("unknown binder `{0}`")]
    UnknownBinder(String),
    #[error("binder `{0}` is bound twice")]
    DuplicateBinder(String),
    #[error("property `{0}` already exists")]
    NameCollision(String),
    #[error("cannot infer the type of `{name}`: {reason}")]
    TypeInference { name: String, reason: String },
    #[error("aggregate over non-numeric `{0}`")]
    NonNumericAggregate(String),
    #[error("predicate on `{path}`: {reason}")]
    TypeMismatchInPredicate { path: String, reason: String },
    #[error("`as {0}` needs a single-binder operand")]
    CannotRebind(String),
    #[error("generalize and specialize cannot be nested inside other functions")]
    MixedPhases,
    #[error("`{0}` is not a common property of the operands")]
    NotCommonProperty(String),
    #[error("hierarchization needs at least one operand")]
    EmptyOperands,
}

type Result<T> = std::result::Result<T, AlgebraError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildProp {
    pub binder: String,
    pub def: PropertyDef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildRow {
    pub key: SourceKey,
    /// Identity of the object bound to each binder: a source id or an oid.
    pub ids: BTreeMap<String, Value>,
    /// Parallel to the build structure.
    pub values: Vec<Value>,
}

/// A class under construction: a temporary class between two functions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassBuild {
    pub binders: Vec<String>,
    pub structure: Vec<BuildProp>,
    pub rows: Vec<BuildRow>,
    pub supers: Vec<String>,
}

/// A path resolved against a build.
#[derive(Debug, Clone)]
struct Slot {
    index: usize,
    fields: Vec<String>,
    kind: PropertyKind,
}

impl Slot {
    fn get<'a>(&self, row: &'a BuildRow) -> &'a Value {
        row.values[self.index].field_path(&self.fields)
    }

    fn is_set_valued(&self) -> bool {
        match &self.kind {
            PropertyKind::Relation(r) => r.many,
            PropertyKind::Attribute(t) => matches!(t, ValueType::Set(_)),
        }
    }
}

impl ClassBuild {
    pub fn names(&self) -> Vec<&str> {
        self.structure.iter().map(|p| p.def.name.as_str()).collect()
    }

    /// Index of the property `name` bound to `binder`.
    pub fn position(&self, binder: &str, name: &str) -> Option<usize> {
        self.structure
            .iter()
            .position(|p| p.binder == binder && p.def.name == name)
    }

    fn resolve(&self, path: &Path) -> Result<Slot> {
        let segs = &path.0;
        let unknown = || AlgebraError::UnknownProperty(path.to_string());
        let (index, rest) = if segs.len() >= 2 && self.binders.contains(&segs[0]) {
            let i = self.position(&segs[0], &segs[1]).ok_or_else(unknown)?;
            (i, &segs[2..])
        } else {
            let first = segs.first().ok_or_else(unknown)?;
            let hits: Vec<usize> = self
                .structure
                .iter()
                .enumerate()
                .filter(|(_, p)| &p.def.name == first)
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [] => return Err(unknown()),
                [i] => (*i, &segs[1..]),
                _ => return Err(AlgebraError::AmbiguousProperty(path.to_string())),
            }
        };
        let mut kind = self.structure[index].def.kind.clone();
        for f in rest {
            let next = match &kind {
                PropertyKind::Attribute(t) => t.field(f).cloned(),
                PropertyKind::Relation(_) => None,
            };
            kind = PropertyKind::Attribute(next.ok_or_else(unknown)?);
        }
        Ok(Slot {
            index,
            fields: rest.to_vec(),
            kind,
        })
    }

    fn sort_rows(&mut self) {
        self.rows
            .sort_by(|a, b| a.key.cmp(&b.key).then_with(|| a.ids.cmp(&b.ids)));
    }

    fn rebind(mut self, alias: &str) -> Result<ClassBuild> {
        let [old] = self.binders.as_slice() else {
            return Err(AlgebraError::CannotRebind(alias.to_string()));
        };
        let old = old.clone();
        self.binders = vec![alias.to_string()];
        for p in &mut self.structure {
            if p.binder == old {
                p.binder = alias.to_string();
            }
        }
        for r in &mut self.rows {
            if let Some(id) = r.ids.remove(&old) {
                r.ids.insert(alias.to_string(), id);
            }
        }
        Ok(self)
    }

    /// Keeps the resolved slots, in the given order.
    fn restrict(&self, slots: &[Slot], names: &[String]) -> Result<ClassBuild> {
        let mut structure: Vec<BuildProp> = Vec::new();
        for (s, name) in slots.iter().zip(names) {
            let src = &self.structure[s.index];
            if structure
                .iter()
                .any(|p| p.binder == src.binder && &p.def.name == name)
            {
                return Err(AlgebraError::NameCollision(name.clone()));
            }
            let def = if s.fields.is_empty() {
                src.def.clone()
            } else {
                PropertyDef {
                    name: name.clone(),
                    origin: src.def.origin,
                    kind: s.kind.clone(),
                    source_path: src
                        .def
                        .source_path
                        .as_ref()
                        .map(|p| p.iter().chain(&s.fields).cloned().collect()),
                    source_target: None,
                }
            };
            structure.push(BuildProp {
                binder: src.binder.clone(),
                def,
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|r| BuildRow {
                key: r.key.clone(),
                ids: r.ids.clone(),
                values: slots.iter().map(|s| s.get(r).clone()).collect(),
            })
            .collect();
        Ok(ClassBuild {
            binders: self.binders.clone(),
            structure,
            rows,
            supers: self.supers.clone(),
        })
    }

    /// Values keyed by property name, first occurrence winning.
    pub fn row_map(&self, row: &BuildRow) -> BTreeMap<String, Value> {
        let mut out = BTreeMap::new();
        for (p, v) in self.structure.iter().zip(&row.values) {
            out.entry(p.def.name.clone()).or_insert_with(|| v.clone());
        }
        out
    }
}

/// One row per record of `interface` or of any interface inheriting from it.
pub fn source_build(
    schema: &SourceSchema,
    snapshot: &Snapshot,
    binder: &str,
    interface: &str,
) -> Result<ClassBuild> {
    if schema.get(interface).is_none() {
        return Err(AlgebraError::UnknownInterface(interface.to_string()));
    }
    let props = schema
        .flatten(interface)
        .map_err(|_| AlgebraError::UnknownInterface(interface.to_string()))?;
    let structure = props
        .iter()
        .map(|p| BuildProp {
            binder: binder.to_string(),
            def: PropertyDef {
                name: p.name.clone(),
                origin: Origin::Derived,
                kind: p.kind.clone(),
                source_path: Some(vec![p.name.clone()]),
                source_target: p.kind.relation().map(|r| r.target.clone()),
            },
        })
        .collect();
    let rows = snapshot
        .extension(schema, interface)
        .map(|rec| BuildRow {
            key: vec![(rec.interface.clone(), rec.id.clone())],
            ids: BTreeMap::from([(binder.to_string(), Value::Ref(rec.id.clone()))]),
            values: props
                .iter()
                .map(|p| match &p.kind {
                    PropertyKind::Attribute(_) => {
                        rec.values.get(&p.name).cloned().unwrap_or(Value::Null)
                    }
                    PropertyKind::Relation(r) => {
                        let ids = rec.links.get(&p.name);
                        let mut refs = ids.into_iter().flatten().map(|i| Value::Ref(i.clone()));
                        if r.many {
                            Value::set(refs)
                        } else {
                            refs.next().unwrap_or(Value::Null)
                        }
                    }
                })
                .collect(),
        })
        .collect();
    let mut b = ClassBuild {
        binders: vec![binder.to_string()],
        structure,
        rows,
        supers: Vec::new(),
    };
    b.sort_rows();
    Ok(b)
}

pub fn eval_project(paths: &[Path], child: &ClassBuild) -> Result<ClassBuild> {
    let slots = paths
        .iter()
        .map(|p| child.resolve(p))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = paths.iter().map(|p| p.last().to_string()).collect();
    child.restrict(&slots, &names)
}

pub fn eval_hide(paths: &[Path], child: &ClassBuild) -> Result<ClassBuild> {
    let mut hidden = BTreeSet::new();
    for p in paths {
        let s = child.resolve(p)?;
        if !s.fields.is_empty() {
            return Err(AlgebraError::UnknownProperty(format!(
                "{p} (hide takes whole properties)"
            )));
        }
        hidden.insert(s.index);
    }
    let (slots, names): (Vec<Slot>, Vec<String>) = child
        .structure
        .iter()
        .enumerate()
        .filter(|(i, _)| !hidden.contains(i))
        .map(|(i, p)| {
            (
                Slot {
                    index: i,
                    fields: Vec::new(),
                    kind: p.def.kind.clone(),
                },
                p.def.name.clone(),
            )
        })
        .unzip();
    child.restrict(&slots, &names)
}

/// Result type of an aggregate over elements of type `element`.
pub fn aggregate_type(f: AggFn, element: &ValueType) -> ValueType {
    match f {
        AggFn::Count => ValueType::Long,
        AggFn::Sum | AggFn::Avg => ValueType::Double,
        AggFn::Max | AggFn::Min => element.clone(),
    }
}

/// Applies an aggregate to the non-null items of a slot value.
pub fn aggregate(f: AggFn, v: &Value) -> Value {
    let items: Vec<&Value> = match v {
        Value::Set(items) => items.iter().filter(|i| !i.is_null()).collect(),
        Value::Null => Vec::new(),
        other => vec![other],
    };
    match f {
        AggFn::Count => Value::Int(items.len() as i64),
        AggFn::Sum => Value::Double(
            items
                .iter()
                .filter_map(|i| i.as_f64())
                .fold(0.0, |a, b| a + b),
        ),
        AggFn::Avg => {
            if items.is_empty() {
                Value::Null
            } else {
                let s = items
                    .iter()
                    .filter_map(|i| i.as_f64())
                    .fold(0.0, |a, b| a + b);
                Value::Double(s / items.len() as f64)
            }
        }
        AggFn::Max => items.into_iter().max().cloned().unwrap_or(Value::Null),
        AggFn::Min => items.into_iter().min().cloned().unwrap_or(Value::Null),
    }
}

pub fn eval_augment(bindings: &[AugmentBinding], child: &ClassBuild) -> Result<ClassBuild> {
    let mut out = child.clone();
    let binder = child.binders.first().cloned().unwrap_or_default();
    let mut computed: Vec<(AggFn, Slot)> = Vec::new();
    for b in bindings {
        let name = b.name();
        if out.structure.iter().any(|p| p.def.name == name) {
            return Err(AlgebraError::NameCollision(name.to_string()));
        }
        let (ty, origin) = match b {
            AugmentBinding::Computed { function, arg, .. } => {
                let slot = child.resolve(arg)?;
                let element = match &slot.kind {
                    PropertyKind::Relation(_) if *function != AggFn::Count => {
                        return Err(AlgebraError::NonNumericAggregate(arg.to_string()))
                    }
                    PropertyKind::Relation(_) => ValueType::Long,
                    PropertyKind::Attribute(t) => t.element().clone(),
                };
                if *function == AggFn::Count && !slot.is_set_valued() {
                    return Err(AlgebraError::TypeInference {
                        name: name.to_string(),
                        reason: format!("count needs a set-valued path, `{arg}` is not"),
                    });
                }
                if *function != AggFn::Count && !element.is_numeric() {
                    return Err(AlgebraError::NonNumericAggregate(arg.to_string()));
                }
                let ty = aggregate_type(*function, &element);
                computed.push((*function, slot));
                (ty, Origin::Computed)
            }
            AugmentBinding::Specific { ty, .. } => (ty.clone(), Origin::Specific),
        };
        out.structure.push(BuildProp {
            binder: binder.clone(),
            def: PropertyDef {
                name: name.to_string(),
                origin,
                kind: PropertyKind::Attribute(ty),
                source_path: None,
                source_target: None,
            },
        });
    }
    for (row, src) in out.rows.iter_mut().zip(&child.rows) {
        let mut comp = computed.iter();
        for b in bindings {
            row.values.push(match b {
                AugmentBinding::Computed { .. } => {
                    let (f, slot) = comp.next().expect("one slot per computed binding");
                    aggregate(*f, slot.get(src))
                }
                AugmentBinding::Specific { .. } => Value::Null,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Compiled {
    Compare {
        slot: Slot,
        op: CmpOp,
        literal: Literal,
    },
    Contains {
        slot: Slot,
        binder: String,
    },
}

/// A predicate whose paths are resolved against a build structure.
#[derive(Debug, Clone)]
pub struct CompiledPredicate(Vec<Compiled>);

pub fn compile_predicate(pred: &Predicate, build: &ClassBuild) -> Result<CompiledPredicate> {
    let mut out = Vec::new();
    for atom in &pred.0 {
        out.push(match atom {
            Atom::Compare { path, op, literal } => {
                let slot = build.resolve(path)?;
                let mismatch = |reason: &str| AlgebraError::TypeMismatchInPredicate {
                    path: path.to_string(),
                    reason: reason.to_string(),
                };
                match (&slot.kind, literal) {
                    (PropertyKind::Attribute(t), Literal::Int(_) | Literal::Float(_))
                        if t.is_numeric() => {}
                    (
                        PropertyKind::Attribute(
                            ValueType::String | ValueType::Date | ValueType::Image,
                        ),
                        Literal::Str(_),
                    ) => {}
                    (PropertyKind::Relation(_), _) => {
                        return Err(mismatch("relations are compared with ∋"))
                    }
                    (PropertyKind::Attribute(t), _) => {
                        return Err(mismatch(&format!("literal does not match type {t}")))
                    }
                }
                Compiled::Compare {
                    slot,
                    op: *op,
                    literal: literal.clone(),
                }
            }
            Atom::Contains { path, binder } => {
                let slot = build.resolve(path)?;
                if !slot.kind.is_relation() && !slot.is_set_valued() {
                    return Err(AlgebraError::TypeMismatchInPredicate {
                        path: path.to_string(),
                        reason: "∋ needs a set or relation".into(),
                    });
                }
                if !build.binders.contains(binder) {
                    return Err(AlgebraError::UnknownBinder(binder.clone()));
                }
                Compiled::Contains {
                    slot,
                    binder: binder.clone(),
                }
            }
        });
    }
    Ok(CompiledPredicate(out))
}

fn compare_literal(v: &Value, literal: &Literal) -> Option<Ordering> {
    match (v, literal) {
        (Value::Int(a), Literal::Int(b)) => Some(a.cmp(b)),
        (Value::Str(a) | Value::Date(a) | Value::Image(a), Literal::Str(b)) => {
            Some(a.as_str().cmp(b))
        }
        (v, Literal::Int(b)) => v.as_f64()?.partial_cmp(&(*b as f64)),
        (v, Literal::Float(b)) => v.as_f64()?.partial_cmp(b),
        _ => None,
    }
}

impl CompiledPredicate {
    pub fn eval(&self, row: &BuildRow) -> bool {
        self.0.iter().all(|a| match a {
            Compiled::Compare { slot, op, literal } => {
                let Some(ord) = compare_literal(slot.get(row), literal) else {
                    return false;
                };
                match op {
                    CmpOp::Eq => ord == Ordering::Equal,
                    CmpOp::Ne => ord != Ordering::Equal,
                    CmpOp::Lt => ord == Ordering::Less,
                    CmpOp::Le => ord != Ordering::Greater,
                    CmpOp::Gt => ord == Ordering::Greater,
                    CmpOp::Ge => ord != Ordering::Less,
                }
            }
            Compiled::Contains { slot, binder } => {
                let Some(id) = row.ids.get(binder) else {
                    return false;
                };
                match slot.get(row) {
                    Value::Set(items) => items.binary_search(id).is_ok(),
                    Value::Null => false,
                    single => single == id,
                }
            }
        })
    }
}

pub fn eval_select(pred: &Predicate, child: &ClassBuild) -> Result<ClassBuild> {
    let compiled = compile_predicate(pred, child)?;
    let mut out = child.clone();
    out.rows.retain(|r| compiled.eval(r));
    Ok(out)
}

fn product_structure(left: &ClassBuild, right: &ClassBuild) -> Result<ClassBuild> {
    if let Some(b) = right.binders.iter().find(|b| left.binders.contains(b)) {
        return Err(AlgebraError::DuplicateBinder(b.clone()));
    }
    Ok(ClassBuild {
        binders: left.binders.iter().chain(&right.binders).cloned().collect(),
        structure: left
            .structure
            .iter()
            .chain(&right.structure)
            .cloned()
            .collect(),
        rows: Vec::new(),
        supers: Vec::new(),
    })
}

fn concat_rows(l: &BuildRow, r: &BuildRow) -> BuildRow {
    BuildRow {
        key: l.key.iter().chain(&r.key).cloned().collect(),
        ids: l
            .ids
            .iter()
            .chain(&r.ids)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
        values: l.values.iter().chain(&r.values).cloned().collect(),
    }
}

pub fn eval_join(pred: &Predicate, left: &ClassBuild, right: &ClassBuild) -> Result<ClassBuild> {
    let mut out = product_structure(left, right)?;
    let compiled = compile_predicate(pred, &out)?;
    for l in &left.rows {
        for r in &right.rows {
            let row = concat_rows(l, r);
            if compiled.eval(&row) {
                out.rows.push(row);
            }
        }
    }
    out.sort_rows();
    Ok(out)
}

/// Evaluates a pure extraction expression bottom-up.
pub fn eval_extraction(
    expr: &MappingExpr,
    schema: &SourceSchema,
    snapshot: &Snapshot,
) -> Result<ClassBuild> {
    match expr {
        MappingExpr::Source { binder, interface } => {
            source_build(schema, snapshot, binder, interface)
        }
        MappingExpr::Rebind { alias, child } => {
            eval_extraction(child, schema, snapshot)?.rebind(alias)
        }
        MappingExpr::Project { paths, child } => {
            eval_project(paths, &eval_extraction(child, schema, snapshot)?)
        }
        MappingExpr::Hide { paths, child } => {
            eval_hide(paths, &eval_extraction(child, schema, snapshot)?)
        }
        MappingExpr::Augment { bindings, child } => {
            eval_augment(bindings, &eval_extraction(child, schema, snapshot)?)
        }
        MappingExpr::Select { predicate, child } => {
            eval_select(predicate, &eval_extraction(child, schema, snapshot)?)
        }
        MappingExpr::Join {
            predicate,
            left,
            right,
        } => eval_join(
            predicate,
            &eval_extraction(left, schema, snapshot)?,
            &eval_extraction(right, schema, snapshot)?,
        ),
        MappingExpr::Generalize { .. } | MappingExpr::Specialize { .. } => {
            Err(AlgebraError::MixedPhases)
        }
    }
}

/// Structure of a warehouse class as seen by the hierarchization functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassShape {
    pub name: String,
    pub declared: Vec<PropertyDef>,
    pub flattened: Vec<PropertyDef>,
    pub supers: Vec<String>,
}

/// Builds an operand from warehouse objects: `(key, oid, value)` triples.
pub fn class_build<'a>(
    binder: &str,
    structure: &[PropertyDef],
    members: impl IntoIterator<Item = (&'a SourceKey, Oid, &'a BTreeMap<String, Value>)>,
) -> ClassBuild {
    let rows = members
        .into_iter()
        .map(|(key, oid, value)| BuildRow {
            key: key.clone(),
            ids: BTreeMap::from([(binder.to_string(), Value::Oid(oid))]),
            values: structure
                .iter()
                .map(|p| value.get(&p.name).cloned().unwrap_or(Value::Null))
                .collect(),
        })
        .collect();
    let mut b = ClassBuild {
        binders: vec![binder.to_string()],
        structure: structure
            .iter()
            .map(|d| BuildProp {
                binder: binder.to_string(),
                def: d.clone(),
            })
            .collect(),
        rows,
        supers: Vec::new(),
    };
    b.sort_rows();
    b
}

/// Property names designated by generalization paths (`c.nom` or `nom`).
pub fn generalized_names(paths: &[Path], operands: &[ClassOperand]) -> Result<Vec<String>> {
    let mut names: Vec<String> = Vec::new();
    for p in paths {
        let name = match p.0.as_slice() {
            [n] => n,
            [b, n] if operands.iter().any(|o| &o.binder == b) => n,
            [b, _] => return Err(AlgebraError::UnknownBinder(b.clone())),
            _ => return Err(AlgebraError::UnknownProperty(p.to_string())),
        };
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    Ok(names)
}

/// Structural effect of generalization: the new super class and the
/// patched operands.
pub fn generalize_shapes(
    name: &str,
    properties: &[String],
    operands: &[ClassShape],
) -> Result<(ClassShape, Vec<ClassShape>)> {
    let first = operands.first().ok_or(AlgebraError::EmptyOperands)?;
    let mut structure = Vec::new();
    for p in properties {
        let def = first
            .flattened
            .iter()
            .find(|d| &d.name == p)
            .ok_or_else(|| AlgebraError::NotCommonProperty(p.clone()))?;
        for o in &operands[1..] {
            let same = o
                .flattened
                .iter()
                .any(|d| &d.name == p && d.origin == def.origin && same_kind(&d.kind, &def.kind));
            if !same {
                return Err(AlgebraError::NotCommonProperty(p.clone()));
            }
        }
        structure.push(def.clone());
    }
    let common = |skip: Option<usize>| -> Vec<String> {
        let others: Vec<&ClassShape> = operands
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, o)| o)
            .collect();
        match others.split_first() {
            None => Vec::new(),
            Some((head, tail)) => head
                .supers
                .iter()
                .filter(|s| tail.iter().all(|o| o.supers.contains(s)))
                .cloned()
                .collect(),
        }
    };
    let c0 = ClassShape {
        name: name.to_string(),
        declared: structure.clone(),
        flattened: structure,
        supers: common(None),
    };
    let patched = operands
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let shared = common(Some(i));
            let mut supers: Vec<String> = o
                .supers
                .iter()
                .filter(|s| !shared.contains(s))
                .cloned()
                .collect();
            if !supers.iter().any(|s| s == name) {
                supers.push(name.to_string());
            }
            ClassShape {
                name: o.name.clone(),
                declared: o
                    .declared
                    .iter()
                    .filter(|d| !properties.contains(&d.name))
                    .cloned()
                    .collect(),
                flattened: o.flattened.clone(),
                supers,
            }
        })
        .collect();
    Ok((c0, patched))
}

/// Extension of a generalization: every operand row restricted to `properties`.
pub fn eval_generalize(properties: &[String], operands: &[ClassBuild]) -> Result<ClassBuild> {
    let first = operands.first().ok_or(AlgebraError::EmptyOperands)?;
    let mut out: Option<ClassBuild> = None;
    for (n, b) in operands.iter().enumerate() {
        let slots = properties
            .iter()
            .map(|p| {
                let binder = b.binders.first().cloned().unwrap_or_default();
                b.resolve(&Path(vec![binder, p.clone()]))
                    .map_err(|_| AlgebraError::NotCommonProperty(p.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut part = b.restrict(&slots, properties)?;
        if n == 0 {
            out = Some(part);
            continue;
        }
        let acc = out.as_mut().expect("set on first operand");
        // Rows from later operands are rebound to the first binder.
        let from = b.binders.first().cloned().unwrap_or_default();
        let to = first.binders.first().cloned().unwrap_or_default();
        for r in &mut part.rows {
            if let Some(id) = r.ids.remove(&from) {
                r.ids.insert(to.clone(), id);
            }
        }
        acc.rows.extend(part.rows);
    }
    let mut out = out.expect("at least one operand");
    out.sort_rows();
    out.rows.dedup();
    Ok(out)
}

/// Filters an operand by its `select(inner: C, pred) as b` clause.
pub fn filter_operand(build: ClassBuild, operand: &ClassOperand) -> Result<ClassBuild> {
    let Some(f) = &operand.filter else {
        return Ok(build);
    };
    let inner = build.rebind(&f.binder)?;
    eval_select(&f.predicate, &inner)?.rebind(&operand.binder)
}

/// Extension of a specialization: operand tuples satisfying `pred`, values
/// concatenated in operand order.
pub fn eval_specialize(pred: &Predicate, operands: Vec<ClassBuild>) -> Result<ClassBuild> {
    let mut iter = operands.into_iter();
    let mut acc = iter.next().ok_or(AlgebraError::EmptyOperands)?;
    for next in iter {
        acc = eval_join(&Predicate::tautology(), &acc, &next)?;
    }
    eval_select(pred, &acc)
}

/// A build row reshaped to a declared structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformedRow {
    pub key: SourceKey,
    pub values: BTreeMap<String, Value>,
}

/// Reshapes rows to `target` by property name; the first match wins and
/// unmatched properties are null.
pub fn conform(build: &ClassBuild, target: &[PropertyDef]) -> Vec<ConformedRow> {
    let idx: Vec<Option<usize>> = target
        .iter()
        .map(|t| build.structure.iter().position(|p| p.def.name == t.name))
        .collect();
    build
        .rows
        .iter()
        .map(|r| ConformedRow {
            key: r.key.clone(),
            values: target
                .iter()
                .zip(&idx)
                .map(|(t, i)| {
                    (
                        t.name.clone(),
                        i.map_or(Value::Null, |i| r.values[i].clone()),
                    )
                })
                .collect(),
        })
        .collect()
}
