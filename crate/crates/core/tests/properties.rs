mod common;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use owh_core::archive::{exact, merge_archive};
use owh_core::dsl::{
    parse_mapping, print_mapping, Atom, CmpOp, Literal, MappingExpr, Path, Predicate,
};
use owh_core::model::ArchiveFn;
use owh_core::object::{State, Status};
use owh_core::refresh::{initial_load, refresh};
use owh_core::temporal::{Instant, TemporalDomain};
use owh_core::value::Value;
use proptest::prelude::*;
use serde_json::json;

fn fold_all(values: &[i64], f: ArchiveFn) -> owh_core::object::Aggregate {
    let archi = BTreeMap::from([("x".to_string(), f)]);
    let mut acc = None;
    for (k, v) in values.iter().enumerate() {
        let s = State {
            domain: TemporalDomain::point(Instant::year(1990 + k as i64)),
            value: BTreeMap::from([("x".to_string(), Value::Int(*v))]),
        };
        acc = Some(merge_archive(acc, &s, &archi).unwrap());
    }
    acc.unwrap().aggregates["x"].clone()
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}".prop_filter("keyword", |s| {
        !matches!(s.as_str(), "and" | "true" | "as" | "contains")
    })
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        "[ -~éà]{0,8}".prop_map(Literal::Str),
        (0i64..1_000_000).prop_map(Literal::Int),
        (0u32..100_000, 1u32..64).prop_map(|(n, d)| Literal::Float(n as f64 / d as f64)),
    ]
}

fn op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Ne),
        Just(CmpOp::Lt),
        Just(CmpOp::Le),
        Just(CmpOp::Gt),
        Just(CmpOp::Ge)
    ]
}

fn atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        (prop::collection::vec(ident(), 1..3), op(), literal()).prop_map(|(p, op, literal)| {
            let mut segs = vec!["b".to_string()];
            segs.extend(p);
            Atom::Compare {
                path: Path(segs),
                op,
                literal,
            }
        }),
        (ident(), ident()).prop_map(|(p, binder)| Atom::Contains {
            path: Path::new(["b".to_string(), p]),
            binder,
        }),
    ]
}

proptest! {
    #[test]
    fn min_max_sum_count_ignore_eviction_order(mut values in prop::collection::vec(-1000i64..1000, 1..12), seed in any::<u64>()) {
        let before: Vec<_> = [ArchiveFn::Min, ArchiveFn::Max, ArchiveFn::Sum, ArchiveFn::Count]
            .iter().map(|f| fold_all(&values, *f)).collect();
        // deterministic shuffle
        let n = values.len();
        for i in 0..n {
            let j = (seed.wrapping_mul(i as u64 + 7) % n as u64) as usize;
            values.swap(i, j);
        }
        let after: Vec<_> = [ArchiveFn::Min, ArchiveFn::Max, ArchiveFn::Sum, ArchiveFn::Count]
            .iter().map(|f| fold_all(&values, *f)).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn avg_is_the_exact_mean(values in prop::collection::vec(-1e6f64..1e6, 1..12)) {
        let archi = BTreeMap::from([("x".to_string(), ArchiveFn::Avg)]);
        let mut acc = None;
        for (k, v) in values.iter().enumerate() {
            let s = State {
                domain: TemporalDomain::point(Instant::year(1990 + k as i64)),
                value: BTreeMap::from([("x".to_string(), Value::Double(*v))]),
            };
            acc = Some(merge_archive(acc, &s, &archi).unwrap());
        }
        let agg = &acc.unwrap().aggregates["x"];
        let mut sum = BigRational::from_integer(BigInt::from(0));
        for v in &values {
            sum += exact(&Value::Double(*v)).unwrap();
        }
        let mean = sum / BigRational::from_integer(BigInt::from(values.len()));
        prop_assert_eq!(agg.mean(), Some(mean));
    }

    #[test]
    fn printed_selections_reparse(atoms in prop::collection::vec(atom(), 0..4)) {
        let e = MappingExpr::Select {
            predicate: Predicate(atoms),
            child: Box::new(MappingExpr::Source { binder: "b".into(), interface: "I".into() }),
        };
        let text = print_mapping(&e);
        let back = parse_mapping(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e);
    }

    #[test]
    fn value_sets_are_canonical(items in prop::collection::vec(-5i64..5, 0..10)) {
        let a = Value::set(items.iter().map(|i| Value::Int(*i)));
        let b = Value::set(items.iter().rev().map(|i| Value::Int(*i)));
        prop_assert_eq!(a.clone(), b);
        let Value::Set(v) = a else { unreachable!() };
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Random yearly edits of the hospital snapshot keep every refresh
    /// invariant.
    #[test]
    fn refresh_invariants_hold(edits in prop::collection::vec((0usize..6, 0u32..4), 1..8)) {
        let schema = common::schema();
        let (mut store, _) = initial_load(schema.clone(), common::source(), &common::snapshot(common::JSONL, 1990), Instant::year(1990)).unwrap();
        let mut text = common::JSONL.to_string();
        for (k, (what, amount)) in edits.iter().enumerate() {
            let year = 1991 + k as i64;
            text = match what {
                0 => common::set_value(&text, "p1", "revenus", json!(100000.0 + *amount as f64)),
                1 => common::set_value(&text, "e1", "budget", json!(1e6 * (*amount as f64 + 1.0))),
                2 => common::set_value(&text, "p2", "catégorie", json!(if *amount % 2 == 0 { "chirurgie" } else { "médecine" })),
                3 => common::set_value(&text, "p3", "année_naissance", json!(1965 + *amount as i64 * 3)),
                4 => common::set_value(&text, "p4", "nom", json!(format!("Petit{amount}"))),
                _ => text,
            };
            let frozen_before: Vec<_> = store.objects.values().filter(|o| o.status == Status::Frozen).cloned().collect();
            let report = refresh(&mut store, &common::snapshot(&text, year), Instant::year(year)).unwrap();
            prop_assert!(report.classes.values().all(|c| c.balanced()));
            for f in &frozen_before {
                prop_assert_eq!(&store.objects[&f.oid], f);
            }
            for o in store.objects.values() {
                let domains: Vec<_> = o.domains().collect();
                for (i, a) in domains.iter().enumerate() {
                    prop_assert!(a.is_canonical());
                    for b in &domains[i + 1..] {
                        prop_assert!(!a.intersects(b));
                    }
                }
                prop_assert!(o.lifecycle_span().end.tick <= year - 1970);
                prop_assert!(o.past.len() <= 2);
            }
            for ci in schema.classes.keys() {
                for cj in schema.classes.keys() {
                    if schema.is_subclass(ci, cj).unwrap() {
                        prop_assert!(store.extension(ci).is_subset(&store.extension(cj)));
                    }
                }
            }
        }
    }
}
