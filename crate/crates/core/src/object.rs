//! Warehouse objects and their current, past and archived states.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::algebra::SourceKey;
use crate::model::ArchiveFn;
use crate::temporal::{Instant, Interval, TemporalDomain, TemporalError};
use crate::value::{Oid, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub domain: TemporalDomain,
    pub value: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Frozen,
}

mod ratio_text {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => s.serialize_str(&r.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigRational>, D::Error> {
        let text: Option<String> = Option::deserialize(d)?;
        text.map(|t| t.parse().map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Running summary of one archived property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub function: ArchiveFn,
    pub value: Value,
    /// Number of values folded in (non-null ones for avg, sum and count).
    pub count: u64,
    /// Exact running sum for avg and sum.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "ratio_text")]
    pub sum: Option<BigRational>,
}

impl Aggregate {
    /// Exact mean for avg aggregates.
    pub fn mean(&self) -> Option<BigRational> {
        let sum = self.sum.as_ref()?;
        (self.count > 0).then(|| sum / BigRational::from_integer(self.count.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveState {
    pub domain: TemporalDomain,
    pub aggregates: BTreeMap<String, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseObject {
    pub oid: Oid,
    pub class: String,
    pub source_key: SourceKey,
    pub status: Status,
    pub current: State,
    /// Oldest first.
    pub past: Vec<State>,
    pub archive: Option<ArchiveState>,
}

/// Where `value_at` found an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lookup<'a> {
    Current(&'a State),
    Past(&'a State),
    Archive(&'a ArchiveState),
    Absent,
}

impl WarehouseObject {
    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    /// Every state domain: archive, past states, then current.
    pub fn domains(&self) -> impl Iterator<Item = &TemporalDomain> {
        self.archive
            .iter()
            .map(|a| &a.domain)
            .chain(self.past.iter().map(|s| &s.domain))
            .chain(std::iter::once(&self.current.domain))
    }

    /// Bounding interval of all state domains.
    pub fn lifecycle_span(&self) -> Interval {
        let mut span: Option<Interval> = None;
        for d in self.domains() {
            if let Some(s) = d.span() {
                span = Some(match span {
                    None => s,
                    Some(acc) => Interval {
                        start: if s.start.tick < acc.start.tick {
                            s.start
                        } else {
                            acc.start
                        },
                        end: if s.end.tick > acc.end.tick {
                            s.end
                        } else {
                            acc.end
                        },
                    },
                });
            }
        }
        span.expect("the current state is never empty")
    }

    /// Searches the current state, then past states, then the archive.
    pub fn value_at(&self, t: Instant) -> Result<Lookup<'_>, TemporalError> {
        if self.current.domain.contains(t)? {
            return Ok(Lookup::Current(&self.current));
        }
        for s in self.past.iter().rev() {
            if s.domain.contains(t)? {
                return Ok(Lookup::Past(s));
            }
        }
        if let Some(a) = &self.archive {
            if a.domain.contains(t)? {
                return Ok(Lookup::Archive(a));
            }
        }
        Ok(Lookup::Absent)
    }
}
