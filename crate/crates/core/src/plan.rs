//! Maintenance plan: the order in which classes are populated, and what
//! each environment keeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::dsl::print_mapping;
use crate::model::{ClassRole, HistorizationLevel, ModelError, RetentionConfig, WarehouseSchema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanStep {
    pub class: String,
    pub role: &'static str,
    pub depends_on: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    pub temporal: Vec<String>,
    pub archive: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnvironmentPlan {
    pub name: String,
    pub level: HistorizationLevel,
    pub retention: RetentionConfig,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub warehouse: String,
    pub steps: Vec<PlanStep>,
    pub environments: Vec<EnvironmentPlan>,
}

fn role_name(r: ClassRole) -> &'static str {
    match r {
        ClassRole::Extraction => "extraction",
        ClassRole::Generalization => "generalization",
        ClassRole::Specialization => "specialization",
        ClassRole::Unmapped => "unmapped",
    }
}

/// Classes ordered so every class follows the classes its mapping reads.
/// Ties break by name.
pub fn dependency_order(schema: &WarehouseSchema) -> Result<Vec<String>, ModelError> {
    let deps: BTreeMap<&str, BTreeSet<&str>> = schema
        .classes
        .values()
        .map(|c| {
            let d = c
                .mapping
                .as_ref()
                .map(|m| m.operand_classes().into_iter().collect())
                .unwrap_or_default();
            (c.name.as_str(), d)
        })
        .collect();
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < deps.len() {
        let ready: Vec<&str> = deps
            .iter()
            .filter(|(c, d)| {
                !done.contains(*c) && d.iter().all(|x| done.contains(x) || !deps.contains_key(x))
            })
            .map(|(c, _)| *c)
            .collect();
        let Some(first) = ready.first() else {
            let stuck = deps.keys().find(|c| !done.contains(*c)).unwrap();
            return Err(ModelError::InheritanceCycle(stuck.to_string()));
        };
        done.insert(first);
        out.push(first.to_string());
    }
    Ok(out)
}

pub fn plan(schema: &WarehouseSchema) -> Result<Plan, ModelError> {
    let mut steps = Vec::new();
    for name in dependency_order(schema)? {
        let c = schema.class(&name)?;
        let (tempo, archi) = schema.effective_filters(&name)?;
        steps.push(PlanStep {
            role: role_name(schema.role(&name)),
            depends_on: c
                .mapping
                .as_ref()
                .map(|m| {
                    m.operand_classes()
                        .into_iter()
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default(),
            mapping: c.mapping.as_ref().map(print_mapping),
            environment: schema.environment_of(&name).map(|e| e.name.clone()),
            temporal: tempo.into_iter().collect(),
            archive: archi
                .into_iter()
                .map(|(p, f)| (p, f.name().to_string()))
                .collect(),
            class: name,
        });
    }
    let mut environments = Vec::new();
    for e in schema.environments.values() {
        environments.push(EnvironmentPlan {
            name: e.name.clone(),
            level: schema.historization_level(&e.name)?,
            retention: schema.config.overlay(&e.config),
            classes: e.classes.clone(),
        });
    }
    Ok(Plan {
        warehouse: schema.name.clone(),
        steps,
        environments,
    })
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "warehouse {}", self.warehouse)?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(f, "{:>2}. {} ({})", i + 1, s.class, s.role)?;
            if let Some(m) = &s.mapping {
                writeln!(f, "      = {m}")?;
            }
            if let Some(e) = &s.environment {
                writeln!(f, "      environment {e}")?;
            }
            if !s.temporal.is_empty() {
                writeln!(f, "      temporal {}", s.temporal.join(", "))?;
            }
            if !s.archive.is_empty() {
                let a: Vec<String> = s
                    .archive
                    .iter()
                    .map(|(p, fun)| format!("{fun}({p})"))
                    .collect();
                writeln!(f, "      archive {}", a.join(", "))?;
            }
        }
        for e in &self.environments {
            write!(
                f,
                "environment {} [{}]: {}",
                e.name,
                e.level.name(),
                e.classes.join(", ")
            )?;
            if let Some(p) = e.retention.refresh_period {
                write!(f, "; refresh every {p}")?;
            }
            if let Some(k) = e.retention.keep_past_count {
                write!(f, "; keep past {k}")?;
            }
            if let Some(p) = e.retention.keep_past_duration {
                write!(f, "; keep for {p}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
