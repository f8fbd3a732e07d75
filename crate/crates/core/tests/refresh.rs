mod common;

use common::*;
use num_rational::BigRational;
use owh_core::object::{Lookup, Status};
use owh_core::refresh::{initial_load, patch_specific, refresh, PatchError, RefreshError};
use owh_core::store::{Store, StoreLock};
use owh_core::temporal::Instant;
use owh_core::value::{Oid, Value};
use serde_json::json;

fn load() -> Store {
    let (store, report) = initial_load(
        schema(),
        source(),
        &snapshot(JSONL, 1995),
        Instant::year(1995),
    )
    .unwrap();
    assert!(report.classes.values().all(|c| c.balanced()));
    store
}

fn oid_of(store: &Store, class: &str, id: &str) -> Oid {
    store
        .members(class)
        .find(|o| o.source_key.iter().any(|(_, i)| i == id))
        .unwrap_or_else(|| panic!("no {class} object for {id}"))
        .oid
}

#[test]
fn initial_load_populates_every_class() {
    let store = load();
    let count = |c: &str| store.members(c).count();
    assert_eq!(count("Chirurgiens"), 4);
    assert_eq!(count("Hôpitaux_Publics"), 2);
    assert_eq!(count("Services"), 3);
    assert_eq!(count("Jeunes_Chirurgiens"), 2);
    assert_eq!(count("Etablissements"), 2);
    assert_eq!(count("Personnes"), 0);
    assert_eq!(store.extension("Personnes").len(), 6);
    assert_eq!(store.extension("Chirurgiens").len(), 6);
}

#[test]
fn relations_point_to_warehouse_objects() {
    let store = load();
    let p1 = oid_of(&store, "Chirurgiens", "p1");
    let s1 = oid_of(&store, "Services", "s1");
    let chir = &store.objects[&p1];
    assert_eq!(
        chir.current.value["travaille"],
        Value::set([Value::Oid(s1)])
    );
    assert_eq!(chir.current.value["dirige"], Value::Oid(s1));
    let serv = &store.objects[&s1];
    let p2 = oid_of(&store, "Chirurgiens", "p2");
    assert_eq!(
        serv.current.value["équipe"],
        Value::set([Value::Oid(p1), Value::Oid(p2)])
    );
    let hop = &store.objects[&oid_of(&store, "Hôpitaux_Publics", "e1")];
    assert_eq!(hop.current.value["nb_services"], Value::Int(2));
    assert_eq!(hop.current.value["année_création"], Value::Null);
    assert_eq!(hop.current.value["ville"], Value::Str("Toulouse".into()));
}

#[test]
fn unchanged_snapshot_only_carries() {
    let mut store = load();
    let report = refresh(&mut store, &snapshot(JSONL, 1996), Instant::year(1996)).unwrap();
    for (class, c) in &report.classes {
        assert_eq!(c.carried, c.previously_active, "{class}");
        assert!(c.balanced());
    }
    assert!(report.warnings.is_empty());
    let p1 = &store.objects[&oid_of(&store, "Chirurgiens", "p1")];
    assert_eq!(p1.current.domain.to_string(), "<[1995,1996]>");
}

#[test]
fn temporal_change_historizes_and_plain_change_updates() {
    let mut store = load();
    let text = set_value(JSONL, "p1", "revenus", json!(125000.0));
    let text = set_value(&text, "p2", "nom", json!("Martin-Roy"));
    let report = refresh(&mut store, &snapshot(&text, 1996), Instant::year(1996)).unwrap();
    let c = report.classes["Chirurgiens"];
    assert_eq!((c.historized, c.updated, c.carried), (1, 1, 2));
    let p1 = &store.objects[&oid_of(&store, "Chirurgiens", "p1")];
    assert_eq!(p1.past.len(), 1);
    assert_eq!(p1.past[0].value["revenus"], Value::Double(120000.0));
    assert_eq!(p1.current.domain.to_string(), "<[1996,1996]>");
    let p2 = &store.objects[&oid_of(&store, "Chirurgiens", "p2")];
    assert!(p2.past.is_empty());
    assert_eq!(p2.current.value["nom"], Value::Str("Martin-Roy".into()));
}

#[test]
fn retention_archives_the_oldest_states_exactly() {
    let mut store = load();
    let revenus = [120000.0, 121000.5, 119999.25, 130000.0, 127500.75];
    for (i, r) in revenus.iter().enumerate().skip(1) {
        let year = 1995 + i as i64;
        let text = set_value(JSONL, "p1", "revenus", json!(r));
        refresh(&mut store, &snapshot(&text, year), Instant::year(year)).unwrap();
    }
    let p1 = &store.objects[&oid_of(&store, "Chirurgiens", "p1")];
    assert_eq!(p1.past.len(), 2);
    let archive = p1.archive.as_ref().unwrap();
    assert_eq!(archive.domain.to_string(), "<[1995,1996]>");
    let avg = &archive.aggregates["revenus"];
    assert_eq!(avg.count, 2);
    let exact = (BigRational::from_float(120000.0).unwrap()
        + BigRational::from_float(121000.5).unwrap())
        / BigRational::from_integer(2.into());
    assert_eq!(avg.mean(), Some(exact));
    assert_eq!(avg.value, Value::Double(120500.25));
    assert_eq!(
        archive.aggregates["spécialité"].value,
        Value::Str("cardiaque".into())
    );
    match p1.value_at(Instant::year(1995)).unwrap() {
        Lookup::Archive(_) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn leaving_the_selection_freezes_the_object_and_its_specializations() {
    let mut store = load();
    let text = set_value(JSONL, "p3", "catégorie", json!("médecine"));
    let report = refresh(&mut store, &snapshot(&text, 1996), Instant::year(1996)).unwrap();
    assert_eq!(report.classes["Chirurgiens"].frozen, 1);
    assert_eq!(report.classes["Jeunes_Chirurgiens"].frozen, 1);
    let p3 = &store.objects[&oid_of(&store, "Chirurgiens", "p3")];
    assert_eq!(p3.status, Status::Frozen);
    assert_eq!(p3.current.domain.to_string(), "<[1995,1995]>");
    // the service still names its former member
    let s2 = &store.objects[&oid_of(&store, "Services", "s2")];
    assert_eq!(s2.current.value["équipe"], Value::set([Value::Oid(p3.oid)]));

    let frozen = p3.clone();
    for year in 1997..2002 {
        refresh(&mut store, &snapshot(&text, year), Instant::year(year)).unwrap();
        assert_eq!(store.objects[&frozen.oid], frozen);
    }

    // coming back creates a new object
    let report = refresh(&mut store, &snapshot(JSONL, 2002), Instant::year(2002)).unwrap();
    assert_eq!(report.classes["Chirurgiens"].created, 1);
    assert_ne!(oid_of_active(&store, "p3"), frozen.oid);
}

fn oid_of_active(store: &Store, id: &str) -> Oid {
    store
        .members("Chirurgiens")
        .find(|o| o.is_active() && o.source_key.iter().any(|(_, i)| i == id))
        .unwrap()
        .oid
}

#[test]
fn failed_refresh_leaves_the_store_untouched() {
    let mut store = load();
    let before = store.clone();
    let err = refresh(&mut store, &snapshot(JSONL, 1995), Instant::year(1995)).unwrap_err();
    assert!(matches!(err, RefreshError::NonMonotonicInstant { .. }));
    assert!(refresh(&mut store, &snapshot(JSONL, 1996), Instant::month(1996, 1)).is_err());
    assert_eq!(store, before);
}

#[test]
fn irregular_period_is_reported() {
    let mut store = load();
    let report = refresh(&mut store, &snapshot(JSONL, 1998), Instant::year(1998)).unwrap();
    assert_eq!(report.warnings.len(), 1);
}

#[test]
fn specific_property_patch() {
    let mut store = load();
    let e1 = oid_of(&store, "Hôpitaux_Publics", "e1");
    patch_specific(
        &mut store,
        e1,
        "année_création",
        Value::Int(1892),
        Instant::year(1995),
    )
    .unwrap();
    refresh(&mut store, &snapshot(JSONL, 1996), Instant::year(1996)).unwrap();
    assert_eq!(
        store.objects[&e1].current.value["année_création"],
        Value::Int(1892)
    );
    let err = patch_specific(
        &mut store,
        e1,
        "budget",
        Value::Double(1.0),
        Instant::year(1996),
    );
    assert!(matches!(err, Err(PatchError::NotSpecific(_))));
    let err = patch_specific(
        &mut store,
        e1,
        "année_création",
        Value::Str("x".into()),
        Instant::year(1996),
    );
    assert!(matches!(err, Err(PatchError::TypeMismatch { .. })));
    let err = patch_specific(
        &mut store,
        e1,
        "année_création",
        Value::Int(1),
        Instant::year(1997),
    );
    assert!(matches!(err, Err(PatchError::OutOfRange { .. })));
}

#[test]
fn store_round_trips_through_json_and_disk() {
    let mut store = load();
    let text = set_value(JSONL, "p1", "revenus", json!(0.1 + 0.2));
    refresh(&mut store, &snapshot(&text, 1996), Instant::year(1996)).unwrap();
    let json = store.to_canonical_json();
    let back = Store::from_json(&json).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.to_canonical_json(), json);

    let dir = std::env::temp_dir().join(format!("owh-store-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("store.json");
    {
        let _lock = StoreLock::acquire(&path).unwrap();
        assert!(StoreLock::acquire(&path).is_err());
        store.save(&path).unwrap();
    }
    assert_eq!(Store::load(&path).unwrap(), store);
    assert!(StoreLock::acquire(&path).is_ok());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn build_and_refreshes_are_deterministic() {
    let run = || {
        let mut store = load();
        for (i, year) in (1996..2006).enumerate() {
            let text = set_value(
                JSONL,
                "p1",
                "revenus",
                json!(120000.0 + (i % 3) as f64 * 500.0),
            );
            let text = set_value(&text, "e2", "budget", json!(47500000.0 + i as f64));
            refresh(&mut store, &snapshot(&text, year), Instant::year(year)).unwrap();
        }
        store.to_canonical_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_snapshot_gives_an_empty_valid_store() {
    let (store, report) =
        initial_load(schema(), source(), &snapshot("", 1995), Instant::year(1995)).unwrap();
    assert!(store.objects.is_empty());
    assert!(report.classes.is_empty());
    assert_eq!(Store::from_json(&store.to_canonical_json()).unwrap(), store);
}

#[test]
fn surgeon_in_a_private_service_is_a_dangling_target() {
    let text = edit(JSONL, |r| {
        if r["id"] == "p1" {
            r["links"]["travaille"] = json!(["s1", "s4"]);
        }
        if r["id"] == "s4" {
            r["links"]["équipe"] = json!(["p1", "p5"]);
        }
    });
    let err = initial_load(
        schema(),
        source(),
        &snapshot(&text, 1995),
        Instant::year(1995),
    )
    .unwrap_err();
    assert!(
        matches!(&err, RefreshError::DanglingRelationTarget { class, property, id } if class == "Chirurgiens" && property == "travaille" && id == "s4"),
        "{err}"
    );
}

#[test]
fn removing_a_record_freezes_exactly_its_objects() {
    let mut store = load();
    let text = edit(JSONL, |r| {
        if r["id"] == "s1" {
            r["links"]["équipe"] = json!(["p1"]);
        }
    });
    let text: String = text
        .lines()
        .filter(|l| !l.contains("\"id\":\"p2\""))
        .map(|l| format!("{l}\n"))
        .collect();
    let p2 = oid_of(&store, "Chirurgiens", "p2");
    let jeune = oid_of(&store, "Jeunes_Chirurgiens", "p2");
    refresh(&mut store, &snapshot(&text, 1996), Instant::year(1996)).unwrap();
    let frozen: Vec<Oid> = store
        .objects
        .values()
        .filter(|o| !o.is_active())
        .map(|o| o.oid)
        .collect();
    assert_eq!(frozen, vec![p2, jeune]);
    for oid in frozen {
        assert_eq!(
            store.objects[&oid].current.domain.last(),
            Some(Instant::year(1995))
        );
    }
    let s1 = &store.objects[&oid_of(&store, "Services", "s1")];
    assert_eq!(s1.past.len(), 1);
}
