//! Folding evicted past states into an object's archive state.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::model::ArchiveFn;
use crate::object::{Aggregate, ArchiveState, State};
use crate::temporal::TemporalError;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArchiveError {
    #[error("cannot apply {function} to `{property}` value {value}")]
    TypeMismatch {
        property: String,
        function: ArchiveFn,
        value: String,
    },
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

/// Exact rational form of a numeric value.
pub fn exact(v: &Value) -> Option<BigRational> {
    match v {
        Value::Int(i) => Some(BigRational::from_integer(BigInt::from(*i))),
        Value::Double(d) => BigRational::from_float(*d),
        _ => None,
    }
}

fn fold(
    property: &str,
    function: ArchiveFn,
    acc: Option<Aggregate>,
    v: &Value,
) -> Result<Aggregate, ArchiveError> {
    let mut agg = acc.unwrap_or(Aggregate {
        function,
        value: Value::Null,
        count: 0,
        sum: matches!(function, ArchiveFn::Avg | ArchiveFn::Sum)
            .then(|| BigRational::from_integer(BigInt::from(0))),
    });
    let mismatch = || ArchiveError::TypeMismatch {
        property: property.to_string(),
        function,
        value: v.to_string(),
    };
    match function {
        ArchiveFn::Last => {
            agg.value = v.clone();
            agg.count += 1;
        }
        _ if v.is_null() => {}
        ArchiveFn::Avg | ArchiveFn::Sum => {
            let x = exact(v).ok_or_else(mismatch)?;
            let sum = agg
                .sum
                .get_or_insert_with(|| BigRational::from_integer(BigInt::from(0)));
            *sum += x;
            agg.count += 1;
            let shown = if function == ArchiveFn::Avg {
                sum.clone() / BigRational::from_integer(BigInt::from(agg.count))
            } else {
                sum.clone()
            };
            agg.value = shown.to_f64().map_or(Value::Null, Value::Double);
        }
        ArchiveFn::Min | ArchiveFn::Max => {
            let better = match (&agg.value, function) {
                (Value::Null, _) => true,
                (cur, ArchiveFn::Min) => v < cur,
                (cur, _) => v > cur,
            };
            if better {
                agg.value = v.clone();
            }
            agg.count += 1;
        }
        ArchiveFn::Count => {
            agg.count += 1;
            agg.value = Value::Int(agg.count as i64);
        }
    }
    Ok(agg)
}

/// Folds `evicted` into `archive` for the properties of `archi`.
pub fn merge_archive(
    archive: Option<ArchiveState>,
    evicted: &State,
    archi: &BTreeMap<String, ArchiveFn>,
) -> Result<ArchiveState, ArchiveError> {
    let (domain, mut aggregates) = match archive {
        Some(a) => (a.domain.union(&evicted.domain)?, a.aggregates),
        None => (evicted.domain.clone(), BTreeMap::new()),
    };
    for (p, f) in archi {
        let v = evicted.value.get(p).unwrap_or(&Value::Null);
        let acc = aggregates.remove(p);
        aggregates.insert(p.clone(), fold(p, *f, acc, v)?);
    }
    Ok(ArchiveState { domain, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::{Instant, TemporalDomain};

    fn state(year: i64, props: &[(&str, Value)]) -> State {
        State {
            domain: TemporalDomain::point(Instant::year(year)),
            value: props
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    #[test]
    fn last_keeps_the_latest_eviction() {
        let archi = BTreeMap::from([("spécialité".to_string(), ArchiveFn::Last)]);
        let a = merge_archive(
            None,
            &state(1990, &[("spécialité", Value::Str("cardio".into()))]),
            &archi,
        )
        .unwrap();
        assert_eq!(
            a.aggregates["spécialité"].value,
            Value::Str("cardio".into())
        );
    }

    #[test]
    fn avg_is_the_mean_of_all_values() {
        let archi = BTreeMap::from([("revenus".to_string(), ArchiveFn::Avg)]);
        let a = merge_archive(
            None,
            &state(1990, &[("revenus", Value::Double(100.0))]),
            &archi,
        )
        .unwrap();
        let a = merge_archive(
            Some(a),
            &state(1991, &[("revenus", Value::Double(200.0))]),
            &archi,
        )
        .unwrap();
        let agg = &a.aggregates["revenus"];
        assert_eq!(agg.value, Value::Double(150.0));
        assert_eq!(agg.count, 2);
        assert_eq!(agg.sum, Some(BigRational::from_integer(300.into())));
        assert_eq!(a.domain.to_string(), "<[1990,1991]>");
    }

    #[test]
    fn avg_rejects_text() {
        let archi = BTreeMap::from([("x".to_string(), ArchiveFn::Avg)]);
        assert!(
            merge_archive(None, &state(1990, &[("x", Value::Str("a".into()))]), &archi).is_err()
        );
    }
}
