//! Brute-force models of the extraction functions over random snapshots.

use std::collections::BTreeMap;

use owh_core::algebra::{eval_extraction, ClassBuild};
use owh_core::dsl::parse_mapping;
use owh_core::snapshot::ingest_snapshot;
use owh_core::source::{parse_source_schema, SourceSchema};
use owh_core::temporal::Instant;
use owh_core::value::Value;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde_json::json;

pub const ODL: &str = "
interface ITEM {
    attribute String name;
    attribute Long qty;
    attribute Double price;
    attribute String tag;
    attribute Set<Long> scores;
    relationship Set<PART> parts inverse PART::owner;
}
interface PART {
    attribute String label;
    attribute Long weight;
    relationship <ITEM> owner inverse ITEM::parts;
}
";

#[derive(Debug, Clone)]
struct Item {
    id: String,
    name: String,
    qty: Option<i64>,
    price: f64,
    tag: String,
    scores: Vec<i64>,
    parts: Vec<String>,
}

#[derive(Debug, Clone)]
struct Part {
    id: String,
    label: String,
    weight: i64,
    owner: Option<String>,
}

type Row = (Vec<(String, String)>, BTreeMap<String, Value>);

fn item_values(i: &Item) -> BTreeMap<String, Value> {
    BTreeMap::from([
        ("name".into(), Value::Str(i.name.clone())),
        ("qty".into(), i.qty.map_or(Value::Null, Value::Int)),
        ("price".into(), Value::Double(i.price)),
        ("tag".into(), Value::Str(i.tag.clone())),
        (
            "scores".into(),
            Value::set(i.scores.iter().map(|s| Value::Int(*s))),
        ),
        (
            "parts".into(),
            Value::set(i.parts.iter().map(|p| Value::Ref(p.clone()))),
        ),
    ])
}

fn part_values(p: &Part) -> BTreeMap<String, Value> {
    BTreeMap::from([
        ("label".into(), Value::Str(p.label.clone())),
        ("weight".into(), Value::Int(p.weight)),
        (
            "owner".into(),
            p.owner.clone().map_or(Value::Null, Value::Ref),
        ),
    ])
}

fn key(iface: &str, id: &str) -> Vec<(String, String)> {
    vec![(iface.to_string(), id.to_string())]
}

fn random_instance(rng: &mut StdRng) -> (Vec<Item>, Vec<Part>) {
    let n_items = rng.random_range(0..10);
    let n_parts = rng.random_range(0..12);
    let mut items: Vec<Item> = (0..n_items)
        .map(|k| Item {
            id: format!("i{k}"),
            name: ["ab", "cd", "ef"][rng.random_range(0..3)].to_string(),
            qty: rng.random_bool(0.85).then(|| rng.random_range(0..10)),
            price: rng.random_range(0..40) as f64 * 0.5,
            tag: ["x", "y"][rng.random_range(0..2)].to_string(),
            scores: (0..rng.random_range(0..4))
                .map(|_| rng.random_range(-5..20))
                .collect(),
            parts: Vec::new(),
        })
        .collect();
    let parts: Vec<Part> = (0..n_parts)
        .map(|k| {
            let owner = (n_items > 0 && rng.random_bool(0.7)).then(|| rng.random_range(0..n_items));
            if let Some(o) = owner {
                items[o].parts.push(format!("p{k}"));
            }
            Part {
                id: format!("p{k}"),
                label: format!("L{}", rng.random_range(0..4)),
                weight: rng.random_range(0..10),
                owner: owner.map(|o| format!("i{o}")),
            }
        })
        .collect();
    for i in &mut items {
        i.scores.sort();
        i.scores.dedup();
        i.parts.sort();
    }
    (items, parts)
}

fn to_lines(items: &[Item], parts: &[Part]) -> String {
    let mut out = String::new();
    for i in items {
        let rec = json!({"interface": "ITEM", "id": i.id, "values": {
            "name": i.name, "qty": i.qty, "price": i.price, "tag": i.tag, "scores": i.scores,
        }, "links": {"parts": i.parts}});
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    for p in parts {
        let rec = json!({"interface": "PART", "id": p.id, "values": {"label": p.label, "weight": p.weight},
            "links": {"owner": p.owner.iter().collect::<Vec<_>>()}});
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

fn rows(build: &ClassBuild) -> Vec<Row> {
    let mut v: Vec<Row> = build
        .rows
        .iter()
        .map(|r| (r.key.clone(), build.row_map(r)))
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

fn sorted(mut v: Vec<Row>) -> Vec<Row> {
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

fn restrict(m: BTreeMap<String, Value>, keep: &[&str]) -> BTreeMap<String, Value> {
    m.into_iter()
        .filter(|(k, _)| keep.contains(&k.as_str()))
        .collect()
}

/// One mapping expression with its brute-force counterpart.
struct Case {
    name: &'static str,
    expr: String,
    oracle: Vec<Row>,
}

fn cases(rng: &mut StdRng, items: &[Item], parts: &[Part]) -> Vec<Case> {
    let k = rng.random_range(0..10);
    let tag = ["x", "y"][rng.random_range(0..2)];
    let w = rng.random_range(0..10);
    let all_items = || items.iter().map(|i| (key("ITEM", &i.id), item_values(i)));
    let mut out = vec![
        Case {
            name: "project",
            expr: "project(i.name, i.qty, i: ITEM)".into(),
            oracle: all_items()
                .map(|(k, v)| (k, restrict(v, &["name", "qty"])))
                .collect(),
        },
        Case {
            name: "hide",
            expr: "hide(i.price, i.scores, i: ITEM)".into(),
            oracle: all_items()
                .map(|(k, v)| (k, restrict(v, &["name", "qty", "tag", "parts"])))
                .collect(),
        },
        Case {
            name: "select",
            expr: format!("select(i: ITEM, i.qty > {k} and i.tag = \"{tag}\")"),
            oracle: items
                .iter()
                .filter(|i| i.qty.is_some_and(|q| q > k) && i.tag == tag)
                .map(|i| (key("ITEM", &i.id), item_values(i)))
                .collect(),
        },
    ];
    let mut contains = Vec::new();
    let mut weighted = Vec::new();
    for i in items {
        for p in parts {
            let mut row_key = key("ITEM", &i.id);
            row_key.extend(key("PART", &p.id));
            let mut v = item_values(i);
            v.extend(part_values(p));
            if i.parts.contains(&p.id) {
                contains.push((row_key.clone(), v.clone()));
            }
            if p.weight < w {
                weighted.push((row_key, v));
            }
        }
    }
    out.push(Case {
        name: "join",
        expr: "join(i: ITEM, p: PART, i.parts ∋ p)".into(),
        oracle: contains,
    });
    out.push(Case {
        name: "join",
        expr: format!("join(i: ITEM, p: PART, p.weight < {w})"),
        oracle: weighted,
    });
    out.push(Case {
        name: "augment",
        expr: "augment(n := count(i.scores), total := sum(i.scores), top := max(i.scores), \
               low := min(i.scores), mean := avg(i.scores), i: ITEM)"
            .into(),
        oracle: items
            .iter()
            .map(|i| {
                let mut v = item_values(i);
                let s = &i.scores;
                let total: i64 = s.iter().sum();
                v.insert("n".into(), Value::Int(s.len() as i64));
                v.insert("total".into(), Value::Double(total as f64));
                v.insert(
                    "top".into(),
                    s.iter().max().map_or(Value::Null, |x| Value::Int(*x)),
                );
                v.insert(
                    "low".into(),
                    s.iter().min().map_or(Value::Null, |x| Value::Int(*x)),
                );
                let mean = if s.is_empty() {
                    Value::Null
                } else {
                    Value::Double(total as f64 / s.len() as f64)
                };
                v.insert("mean".into(), mean);
                (key("ITEM", &i.id), v)
            })
            .collect(),
    });
    out
}

pub fn source() -> SourceSchema {
    parse_source_schema(ODL).unwrap()
}

/// Runs `instances` random instances; returns per-function case counts or
/// the first mismatch.
pub fn check(instances: usize, seed: u64) -> Result<BTreeMap<&'static str, usize>, String> {
    let src = source();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for n in 0..instances {
        let (items, parts) = random_instance(&mut rng);
        if items.len() + parts.len() > 30 {
            return Err("instance too large".into());
        }
        let snap = ingest_snapshot(&src, &to_lines(&items, &parts), Instant::year(2000))
            .map_err(|e| e.to_string())?;
        for case in cases(&mut rng, &items, &parts) {
            let expr = parse_mapping(&case.expr).map_err(|e| format!("{}: {e}", case.expr))?;
            let build =
                eval_extraction(&expr, &src, &snap).map_err(|e| format!("{}: {e}", case.expr))?;
            let got = rows(&build);
            let want = sorted(case.oracle);
            if got != want {
                return Err(format!(
                    "instance {n}: `{}` differs\n got: {got:?}\nwant: {want:?}",
                    case.expr
                ));
            }
            *counts.entry(case.name).or_insert(0) += 1;
        }
    }
    Ok(counts)
}
