//! Initial load, periodic refresh, archival and specific-property patches.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::algebra::{
    class_build, conform, eval_extraction, eval_specialize, filter_operand, AlgebraError,
    ConformedRow, SourceKey,
};
use crate::archive::{merge_archive, ArchiveError};
use crate::dsl::MappingExpr;
use crate::model::{ClassRole, ModelError, RetentionConfig, Violation, WarehouseSchema};
use crate::object::{State, Status, WarehouseObject};
use crate::property::{Origin, PropertyDef, PropertyKind};
use crate::snapshot::Snapshot;
use crate::source::SourceSchema;
use crate::store::Store;
use crate::temporal::{compare_units, Instant, TemporalDomain, TemporalError, TimeUnit, UnitOrder};
use crate::value::{Oid, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefreshError {
    #[error("the warehouse schema is invalid ({} violation(s))", .0.len())]
    InvalidSchema(Vec<Violation>),
    #[error("refresh instant {at} does not follow the last refresh {last}")]
    NonMonotonicInstant { last: Instant, at: Instant },
    #[error("class `{class}`: {source}")]
    Algebra {
        class: String,
        #[source]
        source: AlgebraError,
    },
    #[error("{class}.{property}: no object for source id `{id}`")]
    DanglingRelationTarget {
        class: String,
        property: String,
        id: String,
    },
    #[error("{class}.{property}: source id `{id}` matches several objects")]
    AmbiguousRelationTarget {
        class: String,
        property: String,
        id: String,
    },
    #[error("class `{class}`: duplicate source key {key:?}")]
    DuplicateKey { class: String, key: SourceKey },
    #[error("class `{class}`: retention unit {retention} is incomparable with {unit}")]
    IncomparableRetention {
        class: String,
        retention: TimeUnit,
        unit: TimeUnit,
    },
    #[error("object {oid}: {source}")]
    Archive {
        oid: Oid,
        #[source]
        source: ArchiveError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("no object {0}")]
    UnknownOid(Oid),
    #[error("class `{class}` has no property `{property}`")]
    UnknownProperty { class: String, property: String },
    #[error("`{0}` is not a specific property")]
    NotSpecific(String),
    #[error("object {0} is frozen")]
    Frozen(Oid),
    #[error("object {0} belongs to a specialization; patch its constituents")]
    NotPatchable(Oid),
    #[error("value {value} does not conform to `{property}`")]
    TypeMismatch { property: String, value: String },
    #[error("instant {at} is outside the current state of {oid}")]
    OutOfRange { oid: Oid, at: Instant },
    #[error(transparent)]
    Refresh(#[from] RefreshError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

/// Per-class tallies of one load or refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassReport {
    pub created: usize,
    pub carried: usize,
    pub updated: usize,
    pub historized: usize,
    pub frozen: usize,
    pub evicted: usize,
    /// Active objects before the refresh.
    pub previously_active: usize,
}

impl ClassReport {
    /// Every previously active or new object lands in exactly one bucket.
    pub fn balanced(&self) -> bool {
        self.created + self.carried + self.updated + self.historized + self.frozen
            == self.previously_active + self.created
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefreshReport {
    pub at: Instant,
    pub classes: BTreeMap<String, ClassReport>,
    pub warnings: Vec<String>,
}

/// Builds a fresh store from `snapshot` at `at`.
pub fn initial_load(
    schema: WarehouseSchema,
    source: SourceSchema,
    snapshot: &Snapshot,
    at: Instant,
) -> Result<(Store, RefreshReport), RefreshError> {
    let violations = schema.validate_schema();
    if !violations.is_empty() {
        return Err(RefreshError::InvalidSchema(violations));
    }
    let mut store = Store::new(schema, source, at);
    let report = run(&mut store, snapshot, at, false)?;
    Ok((store, report))
}

/// Brings `store` up to date with `snapshot` at `at`. The store is left
/// untouched on error.
pub fn refresh(
    store: &mut Store,
    snapshot: &Snapshot,
    at: Instant,
) -> Result<RefreshReport, RefreshError> {
    let last = store.last_refresh;
    if last.unit != at.unit {
        return Err(TemporalError::MixedUnits {
            expected: last.unit,
            found: at.unit,
        }
        .into());
    }
    if at.tick <= last.tick {
        return Err(RefreshError::NonMonotonicInstant { last, at });
    }
    let mut work = store.clone();
    let report = run(&mut work, snapshot, at, true)?;
    *store = work;
    Ok(report)
}

/// Ticks of `unit` and `period` expressed in their common finer unit.
fn common_scale(unit: TimeUnit, period: TimeUnit) -> Option<(i64, i64)> {
    match compare_units(unit, period) {
        UnitOrder::Equal => Some((1, 1)),
        UnitOrder::Finer => Some((1, unit.granules_per(period)?)),
        UnitOrder::Coarser => Some((period.granules_per(unit)?, 1)),
        UnitOrder::Incomparable => None,
    }
}

fn run(
    store: &mut Store,
    snapshot: &Snapshot,
    at: Instant,
    is_refresh: bool,
) -> Result<RefreshReport, RefreshError> {
    let mut report = RefreshReport {
        at,
        classes: BTreeMap::new(),
        warnings: Vec::new(),
    };
    if is_refresh {
        period_warnings(store, at, &mut report.warnings);
    }
    let schema = store.schema.clone();
    let classes: Vec<&str> = schema.classes.keys().map(String::as_str).collect();

    // Extraction classes first.
    let mut pending: Vec<Pending> = Vec::new();
    for &class in &classes {
        if schema.role(class) != ClassRole::Extraction {
            continue;
        }
        let mapping = schema
            .class(class)?
            .mapping
            .as_ref()
            .expect("extraction has a mapping");
        let build = eval_extraction(mapping, &store.source, snapshot).map_err(|source| {
            RefreshError::Algebra {
                class: class.to_string(),
                source,
            }
        })?;
        let flat = schema.flatten_type(class)?;
        let rows = conform(&build, &flat);
        pending.extend(assign(store, class, rows)?);
    }
    resolve_relations(store, &mut pending)?;
    for p in pending {
        apply(store, p, at, &mut report)?;
    }
    let extraction: BTreeSet<&str> = classes
        .iter()
        .copied()
        .filter(|c| schema.role(c) == ClassRole::Extraction)
        .collect();
    freeze_missing(store, &extraction, at, &mut report)?;

    // Specializations, operands before dependents.
    let mut specs: Vec<(usize, &str)> = Vec::new();
    for &c in &classes {
        if schema.role(c) == ClassRole::Specialization {
            specs.push((schema.ancestors(c)?.len(), c));
        }
    }
    specs.sort();
    for (_, class) in specs {
        let Some(MappingExpr::Specialize {
            operands,
            predicate,
        }) = &schema.class(class)?.mapping
        else {
            unreachable!("role is specialization");
        };
        let algebra = |source| RefreshError::Algebra {
            class: class.to_string(),
            source,
        };
        let mut builds = Vec::new();
        for o in operands {
            let structure = schema.flatten_type(&o.class)?;
            let hosts = schema.host_classes(&o.class);
            let members = store
                .objects
                .values()
                .filter(|x| x.is_active() && x.class != class && hosts.contains(&x.class))
                .map(|x| (&x.source_key, x.oid, &x.current.value));
            let b = class_build(&o.binder, &structure, members);
            builds.push(filter_operand(b, o).map_err(algebra)?);
        }
        let build = eval_specialize(predicate, builds).map_err(algebra)?;
        let rows = conform(&build, &schema.flatten_type(class)?);
        for p in assign(store, class, rows)? {
            apply(store, p, at, &mut report)?;
        }
        freeze_missing(store, &BTreeSet::from([class]), at, &mut report)?;
    }

    for env in schema.environments.values() {
        for class in &env.classes {
            let evicted = archive_class(store, class, at)?;
            if evicted > 0 {
                report.classes.entry(class.clone()).or_default().evicted += evicted;
            }
        }
    }
    store.last_refresh = at;
    Ok(report)
}

fn period_warnings(store: &Store, at: Instant, out: &mut Vec<String>) {
    let last = store.last_refresh;
    for env in store.schema.environments.values() {
        let Some(p) = store.schema.config.overlay(&env.config).refresh_period else {
            continue;
        };
        let matches = common_scale(at.unit, p.unit)
            .is_some_and(|(ru, rp)| (at.tick - last.tick) * ru == p.count * rp);
        if !matches {
            out.push(format!(
                "environment {}: refresh period is {p} but {} {} elapsed",
                env.name,
                at.tick - last.tick,
                at.unit
            ));
        }
    }
}

struct Pending {
    class: String,
    key: SourceKey,
    /// Existing live object, or a freshly allocated oid.
    oid: Oid,
    existing: bool,
    values: BTreeMap<String, Value>,
}

/// Pairs each row with the live object of its key or a new oid. Oids are
/// allocated in key order so loads are deterministic.
fn assign(
    store: &mut Store,
    class: &str,
    mut rows: Vec<ConformedRow>,
) -> Result<Vec<Pending>, RefreshError> {
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    if let Some(w) = rows.windows(2).find(|w| w[0].key == w[1].key) {
        return Err(RefreshError::DuplicateKey {
            class: class.to_string(),
            key: w[0].key.clone(),
        });
    }
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let live = store
            .identity
            .latest(class, &row.key)
            .filter(|o| store.objects.get(o).is_some_and(|x| x.is_active()));
        let (oid, existing) = match live {
            Some(oid) => (oid, true),
            None => {
                let oid = store.allocate();
                store.identity.push(class, row.key.clone(), oid);
                (oid, false)
            }
        };
        out.push(Pending {
            class: class.to_string(),
            key: row.key,
            oid,
            existing,
            values: row.values,
        });
    }
    Ok(out)
}

/// Source id to `(class, family root, oid)`.
type RelIndex = BTreeMap<String, BTreeSet<(String, String, Oid)>>;

fn index_key(source: &SourceSchema, class: &str, key: &SourceKey, oid: Oid, index: &mut RelIndex) {
    for (iface, id) in key {
        for root in source.roots(iface) {
            index
                .entry(id.clone())
                .or_default()
                .insert((class.to_string(), root, oid));
        }
    }
}

/// Replaces source ids in relation slots by oids. Rows of this refresh are
/// preferred; otherwise any object ever created for the id is used.
fn resolve_relations(store: &Store, pending: &mut [Pending]) -> Result<(), RefreshError> {
    let mut live = RelIndex::new();
    for p in pending.iter() {
        index_key(&store.source, &p.class, &p.key, p.oid, &mut live);
    }
    let mut known = RelIndex::new();
    for (class, key, oids) in store.identity.iter() {
        if let Some(&oid) = oids.last() {
            index_key(&store.source, class, key, oid, &mut known);
        }
    }
    let mut flat_cache: BTreeMap<String, Vec<PropertyDef>> = BTreeMap::new();
    for p in pending.iter_mut() {
        if !flat_cache.contains_key(&p.class) {
            flat_cache.insert(p.class.clone(), store.schema.flatten_type(&p.class)?);
        }
        for def in &flat_cache[&p.class] {
            let PropertyKind::Relation(r) = &def.kind else {
                continue;
            };
            if def.origin != Origin::Derived {
                continue;
            }
            let hosts = store.schema.host_classes(&r.target);
            let roots = def.source_target.as_deref().map(|t| store.source.roots(t));
            let lookup = |index: &RelIndex, id: &str| -> BTreeSet<Oid> {
                index
                    .get(id)
                    .into_iter()
                    .flatten()
                    .filter(|(c, root, _)| {
                        hosts.contains(c) && roots.as_ref().is_none_or(|rs| rs.contains(root))
                    })
                    .map(|(_, _, oid)| *oid)
                    .collect()
            };
            let resolve = |id: &str| -> Result<Value, RefreshError> {
                let mut found = lookup(&live, id);
                if found.is_empty() {
                    found = lookup(&known, id);
                }
                match found.len() {
                    1 => Ok(Value::Oid(*found.iter().next().unwrap())),
                    0 => Err(RefreshError::DanglingRelationTarget {
                        class: p.class.clone(),
                        property: def.name.clone(),
                        id: id.to_string(),
                    }),
                    _ => Err(RefreshError::AmbiguousRelationTarget {
                        class: p.class.clone(),
                        property: def.name.clone(),
                        id: id.to_string(),
                    }),
                }
            };
            let slot = p.values.entry(def.name.clone()).or_insert(Value::Null);
            *slot = match &*slot {
                Value::Ref(id) => resolve(id)?,
                Value::Set(items) => Value::set(
                    items
                        .iter()
                        .map(|v| match v {
                            Value::Ref(id) => resolve(id),
                            other => Ok(other.clone()),
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                other => other.clone(),
            };
        }
    }
    Ok(())
}

fn apply(
    store: &mut Store,
    p: Pending,
    at: Instant,
    report: &mut RefreshReport,
) -> Result<(), RefreshError> {
    let tally = report.classes.entry(p.class.clone()).or_default();
    if !p.existing {
        store.objects.insert(
            p.oid,
            WarehouseObject {
                oid: p.oid,
                class: p.class,
                source_key: p.key,
                status: Status::Active,
                current: State {
                    domain: TemporalDomain::point(at),
                    value: p.values,
                },
                past: Vec::new(),
                archive: None,
            },
        );
        tally.created += 1;
        return Ok(());
    }
    tally.previously_active += 1;
    let schema = &store.schema;
    let (tempo, _) = schema.effective_filters(&p.class)?;
    let specific: Vec<String> = if schema.role(&p.class) == ClassRole::Extraction {
        schema
            .flatten_type(&p.class)?
            .into_iter()
            .filter(|d| d.origin == Origin::Specific)
            .map(|d| d.name)
            .collect()
    } else {
        Vec::new()
    };
    let obj = store.objects.get_mut(&p.oid).expect("live object exists");
    let mut values = p.values;
    for s in &specific {
        if let Some(v) = obj.current.value.get(s) {
            values.insert(s.clone(), v.clone());
        }
    }
    let changed: Vec<&String> = values
        .iter()
        .filter(|(k, v)| obj.current.value.get(*k) != Some(v))
        .map(|(k, _)| k)
        .chain(
            obj.current
                .value
                .keys()
                .filter(|k| !values.contains_key(*k)),
        )
        .collect();
    if changed.is_empty() {
        obj.current.domain = obj.current.domain.with_end(at)?;
        tally.carried += 1;
    } else if changed.iter().any(|k| tempo.contains(*k)) {
        let old = State {
            domain: obj.current.domain.with_end(at.offset(-1))?,
            value: std::mem::take(&mut obj.current.value),
        };
        obj.past.push(old);
        obj.current = State {
            domain: TemporalDomain::point(at),
            value: values,
        };
        tally.historized += 1;
    } else {
        obj.current.domain = obj.current.domain.with_end(at)?;
        obj.current.value = values;
        tally.updated += 1;
    }
    Ok(())
}

/// Freezes active objects of `classes` that this refresh did not touch.
fn freeze_missing(
    store: &mut Store,
    classes: &BTreeSet<&str>,
    at: Instant,
    report: &mut RefreshReport,
) -> Result<(), RefreshError> {
    for obj in store.objects.values_mut() {
        if !obj.is_active() || !classes.contains(obj.class.as_str()) {
            continue;
        }
        if obj.current.domain.last().is_some_and(|l| l.tick >= at.tick) {
            continue;
        }
        obj.status = Status::Frozen;
        obj.current.domain = obj.current.domain.with_end(at.offset(-1))?;
        let tally = report.classes.entry(obj.class.clone()).or_default();
        tally.previously_active += 1;
        tally.frozen += 1;
    }
    Ok(())
}

/// Evicts past states beyond the retention bounds into the archive.
fn archive_object(
    obj: &mut WarehouseObject,
    cfg: &RetentionConfig,
    archi: &BTreeMap<String, crate::model::ArchiveFn>,
    at: Instant,
) -> Result<usize, RefreshError> {
    if !obj.is_active() {
        return Ok(0);
    }
    let scale = match cfg.keep_past_duration {
        Some(p) => Some((
            common_scale(at.unit, p.unit).ok_or(RefreshError::IncomparableRetention {
                class: obj.class.clone(),
                retention: p.unit,
                unit: at.unit,
            })?,
            p.count,
        )),
        None => None,
    };
    let mut evicted = 0;
    while let Some(oldest) = obj.past.first() {
        let over_count = cfg
            .keep_past_count
            .is_some_and(|k| obj.past.len() > k as usize);
        let too_old = scale.is_some_and(|((ru, rp), count)| {
            oldest
                .domain
                .last()
                .is_some_and(|end| (at.tick - end.tick) * ru > count * rp)
        });
        if !over_count && !too_old {
            break;
        }
        let state = obj.past.remove(0);
        obj.archive = Some(
            merge_archive(obj.archive.take(), &state, archi).map_err(|source| {
                RefreshError::Archive {
                    oid: obj.oid,
                    source,
                }
            })?,
        );
        evicted += 1;
    }
    Ok(evicted)
}

fn archive_class(store: &mut Store, class: &str, at: Instant) -> Result<usize, RefreshError> {
    let cfg = store.schema.retention(class);
    if !cfg.has_bound() {
        return Ok(0);
    }
    let (_, archi) = store.schema.effective_filters(class)?;
    let mut total = 0;
    for obj in store.objects.values_mut().filter(|o| o.class == class) {
        total += archive_object(obj, &cfg, &archi, at)?;
    }
    Ok(total)
}

/// Applies retention to every environment at `at` without refreshing.
pub fn apply_archival(
    store: &mut Store,
    at: Instant,
) -> Result<BTreeMap<String, usize>, RefreshError> {
    let mut out = BTreeMap::new();
    let classes: Vec<String> = store
        .schema
        .environments
        .values()
        .flat_map(|e| e.classes.iter().cloned())
        .collect();
    for c in classes {
        let n = archive_class(store, &c, at)?;
        out.insert(c, n);
    }
    Ok(out)
}

/// Sets a specific property of an active object between refreshes. A change
/// to a temporal property starts a new state at `at`.
pub fn patch_specific(
    store: &mut Store,
    oid: Oid,
    property: &str,
    value: Value,
    at: Instant,
) -> Result<(), PatchError> {
    let obj = store.objects.get(&oid).ok_or(PatchError::UnknownOid(oid))?;
    let class = obj.class.clone();
    if store.schema.role(&class) != ClassRole::Extraction {
        return Err(PatchError::NotPatchable(oid));
    }
    let flat = store
        .schema
        .flatten_type(&class)
        .map_err(RefreshError::from)?;
    let def =
        flat.iter()
            .find(|d| d.name == property)
            .ok_or_else(|| PatchError::UnknownProperty {
                class: class.clone(),
                property: property.to_string(),
            })?;
    if def.origin != Origin::Specific {
        return Err(PatchError::NotSpecific(property.to_string()));
    }
    let conforms = match &def.kind {
        PropertyKind::Attribute(t) => value.conforms(t),
        PropertyKind::Relation(_) => false,
    };
    if !conforms {
        return Err(PatchError::TypeMismatch {
            property: property.to_string(),
            value: value.to_string(),
        });
    }
    if !obj.is_active() {
        return Err(PatchError::Frozen(oid));
    }
    at.expect_unit(store.last_refresh.unit)?;
    let start = obj
        .current
        .domain
        .first()
        .expect("current state is never empty");
    if at.tick < start.tick || at.tick > store.last_refresh.tick {
        return Err(PatchError::OutOfRange { oid, at });
    }
    let (tempo, archi) = store
        .schema
        .effective_filters(&class)
        .map_err(RefreshError::from)?;
    let cfg = store.schema.retention(&class);
    let obj = store.objects.get_mut(&oid).expect("checked above");
    if obj.current.value.get(property) == Some(&value) {
        return Ok(());
    }
    if tempo.contains(property) && at.tick > start.tick {
        let mut next = obj.current.value.clone();
        next.insert(property.to_string(), value);
        let end = obj.current.domain.last().expect("non-empty");
        let old = State {
            domain: obj.current.domain.with_end(at.offset(-1))?,
            value: std::mem::take(&mut obj.current.value),
        };
        obj.past.push(old);
        obj.current = State {
            domain: TemporalDomain::single(crate::temporal::Interval::new(at, end)?),
            value: next,
        };
        if cfg.has_bound() {
            archive_object(obj, &cfg, &archi, store.last_refresh)?;
        }
    } else {
        obj.current.value.insert(property.to_string(), value);
    }
    Ok(())
}
