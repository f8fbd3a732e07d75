//! Warehouse classes, environments and the schema-level checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::MappingExpr;
use crate::property::{merge_properties, MergeError, PropertyDef, PropertyKind};
use crate::temporal::TimeUnit;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("inheritance cycle through `{0}`")]
    InheritanceCycle(String),
    #[error("class `{class}`: conflicting inherited definitions of `{property}`")]
    PropertyConflict { class: String, property: String },
}

/// Aggregation applied to a property when its past states are archived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchiveFn {
    Avg,
    Sum,
    Min,
    Max,
    Count,
    Last,
}

impl ArchiveFn {
    pub fn name(self) -> &'static str {
        match self {
            ArchiveFn::Avg => "avg",
            ArchiveFn::Sum => "sum",
            ArchiveFn::Min => "min",
            ArchiveFn::Max => "max",
            ArchiveFn::Count => "count",
            ArchiveFn::Last => "last",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "avg" => ArchiveFn::Avg,
            "sum" => ArchiveFn::Sum,
            "min" => ArchiveFn::Min,
            "max" => ArchiveFn::Max,
            "count" => ArchiveFn::Count,
            "last" => ArchiveFn::Last,
            _ => return None,
        })
    }
}

impl fmt::Display for ArchiveFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A duration such as `5 years`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub count: i64,
    pub unit: TimeUnit,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.count, self.unit.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RetentionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_period: Option<Period>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_past_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_past_duration: Option<Period>,
}

impl RetentionConfig {
    /// Fields set in `over` win; the others come from `self`.
    pub fn overlay(&self, over: &RetentionConfig) -> RetentionConfig {
        RetentionConfig {
            refresh_period: over.refresh_period.or(self.refresh_period),
            keep_past_count: over.keep_past_count.or(self.keep_past_count),
            keep_past_duration: over.keep_past_duration.or(self.keep_past_duration),
        }
    }

    pub fn has_bound(&self) -> bool {
        self.keep_past_count.is_some() || self.keep_past_duration.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseClass {
    pub name: String,
    /// Declared properties, excluding inherited ones.
    pub structure: Vec<PropertyDef>,
    pub supers: Vec<String>,
    pub mapping: Option<MappingExpr>,
    pub tempo: BTreeSet<String>,
    pub archi: BTreeMap<String, ArchiveFn>,
}

impl WarehouseClass {
    pub fn new(name: impl Into<String>) -> Self {
        WarehouseClass {
            name: name.into(),
            structure: Vec::new(),
            supers: Vec::new(),
            mapping: None,
            tempo: BTreeSet::new(),
            archi: BTreeMap::new(),
        }
    }

    pub fn has_filters(&self) -> bool {
        !self.tempo.is_empty() || !self.archi.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub classes: Vec<String>,
    pub config: RetentionConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WarehouseSchema {
    pub name: String,
    pub classes: BTreeMap<String, WarehouseClass>,
    pub environments: BTreeMap<String, Environment>,
    pub config: RetentionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// A derived relation points to a class absent from the warehouse.
    RelationClosure,
    /// A class belongs to more than one environment.
    EnvironmentOverlap,
    /// A class with its own filters is outside every environment.
    FilterOutsideEnvironment,
    ArchiveNotTemporal,
    InheritanceCycle,
    /// A filter names a property missing from the flattened structure.
    UnresolvedFilterName,
    PropertyConflict,
    UnknownSuper,
    UnknownEnvironmentClass,
    EmptyEnvironment,
    /// Archived classes need a retention bound, or nothing is ever archived.
    MissingRetentionBound,
    ComputedRelation,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::RelationClosure => "relation-closure",
            ViolationKind::EnvironmentOverlap => "environment-overlap",
            ViolationKind::FilterOutsideEnvironment => "filter-outside-environment",
            ViolationKind::ArchiveNotTemporal => "archive-not-temporal",
            ViolationKind::InheritanceCycle => "inheritance-cycle",
            ViolationKind::UnresolvedFilterName => "unresolved-filter-name",
            ViolationKind::PropertyConflict => "property-conflict",
            ViolationKind::UnknownSuper => "unknown-super",
            ViolationKind::UnknownEnvironmentClass => "unknown-environment-class",
            ViolationKind::EmptyEnvironment => "empty-environment",
            ViolationKind::MissingRetentionBound => "missing-retention-bound",
            ViolationKind::ComputedRelation => "computed-relation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub class: String,
    pub property: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.kind.name(), self.class)?;
        if let Some(p) = &self.property {
            write!(f, ".{p}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorizationLevel {
    Attribute,
    Class,
    Graph,
}

impl HistorizationLevel {
    pub fn name(self) -> &'static str {
        match self {
            HistorizationLevel::Attribute => "attribute",
            HistorizationLevel::Class => "class",
            HistorizationLevel::Graph => "graph",
        }
    }
}

/// How a class gets its objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassRole {
    Extraction,
    Generalization,
    Specialization,
    Unmapped,
}

impl WarehouseSchema {
    pub fn class(&self, name: &str) -> Result<&WarehouseClass, ModelError> {
        self.classes
            .get(name)
            .ok_or_else(|| ModelError::UnknownClass(name.to_string()))
    }

    pub fn role(&self, name: &str) -> ClassRole {
        match self.classes.get(name).and_then(|c| c.mapping.as_ref()) {
            Some(MappingExpr::Generalize { .. }) => ClassRole::Generalization,
            Some(MappingExpr::Specialize { .. }) => ClassRole::Specialization,
            Some(_) => ClassRole::Extraction,
            None => ClassRole::Unmapped,
        }
    }

    /// Classes whose objects make up the extension of `name`: the class
    /// itself, or for a generalization the hosts of every operand.
    pub fn host_classes(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.hosts_into(name, &mut out, &mut Vec::new());
        out
    }

    fn hosts_into(&self, name: &str, out: &mut BTreeSet<String>, seen: &mut Vec<String>) {
        if seen.iter().any(|s| s == name) {
            return;
        }
        seen.push(name.to_string());
        match self.classes.get(name).and_then(|c| c.mapping.as_ref()) {
            Some(MappingExpr::Generalize { operands, .. }) => {
                for o in operands {
                    self.hosts_into(&o.class, out, seen);
                }
            }
            Some(_) => {
                out.insert(name.to_string());
            }
            None => {}
        }
    }

    /// Transitive supers, nearest first, without duplicates.
    pub fn ancestors(&self, name: &str) -> Result<Vec<String>, ModelError> {
        let mut out = Vec::new();
        self.ancestors_into(name, &mut out, &mut Vec::new())?;
        Ok(out)
    }

    fn ancestors_into(
        &self,
        name: &str,
        out: &mut Vec<String>,
        stack: &mut Vec<String>,
    ) -> Result<(), ModelError> {
        if stack.iter().any(|s| s == name) {
            return Err(ModelError::InheritanceCycle(name.to_string()));
        }
        let class = self.class(name)?;
        stack.push(name.to_string());
        for sup in &class.supers {
            if stack.iter().any(|s| s == sup) {
                return Err(ModelError::InheritanceCycle(sup.clone()));
            }
            if !out.contains(sup) {
                out.push(sup.clone());
            }
            self.ancestors_into(sup, out, stack)?;
        }
        stack.pop();
        Ok(())
    }

    /// Own and inherited properties, supers first in declaration order.
    pub fn flatten_type(&self, name: &str) -> Result<Vec<PropertyDef>, ModelError> {
        let mut acc = Vec::new();
        let mut index = BTreeMap::new();
        self.flatten_into(name, &mut acc, &mut index, &mut Vec::new())?;
        Ok(acc)
    }

    fn flatten_into(
        &self,
        name: &str,
        acc: &mut Vec<PropertyDef>,
        index: &mut BTreeMap<String, usize>,
        stack: &mut Vec<String>,
    ) -> Result<(), ModelError> {
        if stack.iter().any(|s| s == name) {
            return Err(ModelError::InheritanceCycle(name.to_string()));
        }
        let class = self.class(name)?;
        stack.push(name.to_string());
        for sup in &class.supers {
            self.flatten_into(sup, acc, index, stack)?;
        }
        stack.pop();
        merge_properties(
            acc,
            index,
            class.structure.iter().cloned(),
            |p| &p.name,
            PropertyDef::same_definition,
        )
        .map_err(
            |MergeError::Conflict(property)| ModelError::PropertyConflict {
                class: name.to_string(),
                property,
            },
        )
    }

    /// Reflexive, transitive subclass test.
    pub fn is_subclass(&self, ci: &str, cj: &str) -> Result<bool, ModelError> {
        self.class(cj)?;
        if ci == cj {
            self.class(ci)?;
            return Ok(true);
        }
        Ok(self.ancestors(ci)?.iter().any(|a| a == cj))
    }

    /// Direct subclasses, in name order.
    pub fn subclasses(&self, name: &str) -> Vec<&str> {
        self.classes
            .values()
            .filter(|c| c.supers.iter().any(|s| s == name))
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn environment_of(&self, class: &str) -> Option<&Environment> {
        self.environments
            .values()
            .find(|e| e.classes.iter().any(|c| c == class))
    }

    /// Own filters plus those of every ancestor in the same environment.
    /// A class outside any environment has no effective filters.
    pub fn effective_filters(
        &self,
        class: &str,
    ) -> Result<(BTreeSet<String>, BTreeMap<String, ArchiveFn>), ModelError> {
        let c = self.class(class)?;
        let Some(env) = self.environment_of(class) else {
            return Ok((BTreeSet::new(), BTreeMap::new()));
        };
        let mut tempo = c.tempo.clone();
        let mut archi = c.archi.clone();
        for anc in self.ancestors(class)? {
            if !env.classes.contains(&anc) {
                continue;
            }
            let a = self.class(&anc)?;
            tempo.extend(a.tempo.iter().cloned());
            for (p, f) in &a.archi {
                archi.entry(p.clone()).or_insert(*f);
            }
        }
        Ok((tempo, archi))
    }

    /// Global config overlaid with the class's environment config.
    pub fn retention(&self, class: &str) -> RetentionConfig {
        match self.environment_of(class) {
            Some(env) => self.config.overlay(&env.config),
            None => self.config,
        }
    }

    pub fn historization_level(&self, env: &str) -> Result<HistorizationLevel, ModelError> {
        let e = self
            .environments
            .get(env)
            .ok_or_else(|| ModelError::UnknownEnvironment(env.to_string()))?;
        if e.classes.len() > 1 {
            return Ok(HistorizationLevel::Graph);
        }
        let Some(only) = e.classes.first() else {
            return Ok(HistorizationLevel::Attribute);
        };
        let (tempo, _) = self.effective_filters(only)?;
        let all_attributes = self
            .flatten_type(only)?
            .iter()
            .filter(|p| p.is_attribute())
            .all(|p| tempo.contains(&p.name));
        Ok(if all_attributes {
            HistorizationLevel::Class
        } else {
            HistorizationLevel::Attribute
        })
    }

    /// Every schema-level violation; an empty list means the schema is valid.
    pub fn validate_schema(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let v = |kind, class: &str, property: Option<&str>, message: String| Violation {
            kind,
            class: class.to_string(),
            property: property.map(str::to_string),
            message,
        };

        // Closure: one violation per missing endpoint class.
        let mut missing: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        for c in self.classes.values() {
            for sup in &c.supers {
                if !self.classes.contains_key(sup) {
                    out.push(v(
                        ViolationKind::UnknownSuper,
                        &c.name,
                        None,
                        format!("super class `{sup}` is not defined"),
                    ));
                }
            }
            for p in &c.structure {
                if let PropertyKind::Relation(r) = &p.kind {
                    if !self.classes.contains_key(&r.target) {
                        missing
                            .entry(r.target.as_str())
                            .or_default()
                            .push((c.name.clone(), p.name.clone()));
                    }
                    if p.origin == crate::property::Origin::Computed {
                        out.push(v(
                            ViolationKind::ComputedRelation,
                            &c.name,
                            Some(&p.name),
                            "computed properties must be attributes".into(),
                        ));
                    }
                }
            }
        }
        for (target, refs) in missing {
            let (class, prop) = &refs[0];
            let all: Vec<String> = refs.iter().map(|(c, p)| format!("{c}.{p}")).collect();
            out.push(v(
                ViolationKind::RelationClosure,
                class,
                Some(prop),
                format!(
                    "relation endpoint `{target}` is not a warehouse class (referenced by {})",
                    all.join(", ")
                ),
            ));
        }

        // Environments.
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for e in self.environments.values() {
            if e.classes.is_empty() {
                out.push(v(
                    ViolationKind::EmptyEnvironment,
                    &e.name,
                    None,
                    "environment has no classes".into(),
                ));
            }
            for c in &e.classes {
                if !self.classes.contains_key(c) {
                    out.push(v(
                        ViolationKind::UnknownEnvironmentClass,
                        c,
                        None,
                        format!("environment `{}` lists an undefined class", e.name),
                    ));
                }
                if let Some(first) = owner.insert(c, &e.name) {
                    if first != e.name {
                        out.push(v(
                            ViolationKind::EnvironmentOverlap,
                            c,
                            None,
                            format!("class belongs to environments `{first}` and `{}`", e.name),
                        ));
                    }
                }
            }
        }

        for c in self.classes.values() {
            if c.has_filters() && !owner.contains_key(c.name.as_str()) {
                out.push(v(
                    ViolationKind::FilterOutsideEnvironment,
                    &c.name,
                    None,
                    "class has filters but belongs to no environment".into(),
                ));
            }
            for p in c.archi.keys() {
                if !c.tempo.contains(p) {
                    out.push(v(
                        ViolationKind::ArchiveNotTemporal,
                        &c.name,
                        Some(p),
                        "archived property is not in the temporal filter".into(),
                    ));
                }
            }
            match self.flatten_type(&c.name) {
                Ok(flat) => {
                    for p in c.tempo.iter().chain(c.archi.keys()) {
                        if !flat.iter().any(|d| &d.name == p) {
                            out.push(v(
                                ViolationKind::UnresolvedFilterName,
                                &c.name,
                                Some(p),
                                "filter names an unknown property".into(),
                            ));
                        }
                    }
                }
                Err(ModelError::InheritanceCycle(at)) => out.push(v(
                    ViolationKind::InheritanceCycle,
                    &c.name,
                    None,
                    format!("inheritance cycle through `{at}`"),
                )),
                Err(ModelError::PropertyConflict { property, .. }) => out.push(v(
                    ViolationKind::PropertyConflict,
                    &c.name,
                    Some(&property),
                    "conflicting inherited definitions".into(),
                )),
                Err(_) => {}
            }
            if !c.archi.is_empty()
                && owner.contains_key(c.name.as_str())
                && !self.retention(&c.name).has_bound()
            {
                out.push(v(
                    ViolationKind::MissingRetentionBound,
                    &c.name,
                    None,
                    "archive filter without keep past / keep for bound".into(),
                ));
            }
        }
        out.sort();
        out.dedup();
        out
    }
}
