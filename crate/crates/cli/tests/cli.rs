use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_owh");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn owh(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn text(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let p = std::env::temp_dir().join(format!("owh-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        TempDir(p)
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

#[test]
fn validate_accepts_the_fixture() {
    let out = owh(&[
        "validate",
        "--source-schema",
        text(&fixture("hospital.odl")),
        "--warehouse",
        text(&fixture("hospital.edw")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 classes"));
}

#[test]
fn validate_reports_the_closure_violation() {
    let out = owh(&[
        "validate",
        "--source-schema",
        text(&fixture("hospital.odl")),
        "--warehouse",
        text(&fixture("hospital_minus_services.edw")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("relation-closure"));
}

#[test]
fn missing_files_and_bad_usage_exit_with_two() {
    let out = owh(&[
        "validate",
        "--source-schema",
        "/nonexistent.odl",
        "--warehouse",
        "/nonexistent.edw",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(owh(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        owh(&["refresh", "--store", "x.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn build_refresh_patch_inspect() {
    let dir = TempDir::new("cycle");
    let store = dir.0.join("store.json");
    let snap = fixture("hospital.jsonl");
    let out = owh(&[
        "build",
        "--source-schema",
        text(&fixture("hospital.odl")),
        "--warehouse",
        text(&fixture("hospital.edw")),
        "--snapshot",
        text(&snap),
        "--at",
        "1995",
        "--store",
        text(&store),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["classes"]["Chirurgiens"]["created"], 4);

    let out = owh(&[
        "refresh",
        "--store",
        text(&store),
        "--snapshot",
        text(&snap),
        "--at",
        "1996",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // going back in time is rejected and the store is unchanged
    let before = std::fs::read(&store).unwrap();
    let out = owh(&[
        "refresh",
        "--store",
        text(&store),
        "--snapshot",
        text(&snap),
        "--at",
        "1996",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read(&store).unwrap(), before);

    let out = owh(&[
        "inspect",
        "--store",
        text(&store),
        "--class",
        "Hôpitaux_Publics",
    ]);
    let items: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let purpan = items
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["current"]["value"]["nom"] == "CHU Purpan")
        .unwrap();
    let oid = purpan["oid"].as_u64().unwrap().to_string();

    let out = owh(&[
        "patch",
        "--store",
        text(&store),
        "--oid",
        &oid,
        "--set",
        "année_création=1892",
        "--at",
        "1996",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = owh(&[
        "patch",
        "--store",
        text(&store),
        "--oid",
        &oid,
        "--set",
        "budget=1.0",
        "--at",
        "1996",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = owh(&[
        "inspect",
        "--store",
        text(&store),
        "--class",
        "Hôpitaux_Publics",
        "--oid",
        &oid,
        "--at",
        "1995",
        "--history",
    ]);
    let items: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(items[0]["state"]["value"]["année_création"], 1892);
    assert_eq!(items[0]["past"], serde_json::json!([]));
    assert!(!dir.0.join("store.json.lock").exists());
}

#[test]
fn locked_store_is_refused() {
    let dir = TempDir::new("lock");
    let store = dir.0.join("store.json");
    std::fs::write(dir.0.join("store.json.lock"), "1").unwrap();
    let out = owh(&[
        "refresh",
        "--store",
        text(&store),
        "--snapshot",
        text(&fixture("hospital.jsonl")),
        "--at",
        "1996",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn plan_lists_classes_in_dependency_order() {
    let out = owh(&[
        "plan",
        "--source-schema",
        text(&fixture("hospital.odl")),
        "--warehouse",
        text(&fixture("hospital.edw")),
        "--json",
    ]);
    let plan: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let order: Vec<&str> = plan["steps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["class"].as_str().unwrap())
        .collect();
    let pos = |c: &str| order.iter().position(|x| *x == c).unwrap();
    assert!(pos("Chirurgiens") < pos("Jeunes_Chirurgiens"));
    assert!(pos("Services") < pos("Etablissements"));
    assert!(pos("Hôpitaux_Publics") < pos("Etablissements"));
    assert_eq!(plan["environments"][0]["level"], "graph");
}

#[test]
fn build_refuses_an_existing_store_and_inspect_reports_absence() {
    let dir = TempDir::new("exists");
    let store = dir.0.join("store.json");
    let build = |at: &str| {
        owh(&[
            "build",
            "--source-schema",
            text(&fixture("hospital.odl")),
            "--warehouse",
            text(&fixture("hospital.edw")),
            "--snapshot",
            text(&fixture("hospital.jsonl")),
            "--at",
            at,
            "--store",
            text(&store),
        ])
    };
    assert_eq!(build("1995").status.code(), Some(0));
    assert_eq!(build("1995").status.code(), Some(1));
    let out = owh(&[
        "inspect",
        "--store",
        text(&store),
        "--class",
        "Chirurgiens",
        "--at",
        "1990",
    ]);
    let items: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(items[0]["state"], "absent");
    let again = owh(&[
        "inspect",
        "--store",
        text(&store),
        "--class",
        "Chirurgiens",
        "--at",
        "1990",
    ]);
    assert_eq!(out.stdout, again.stdout);
    assert_eq!(
        owh(&[
            "inspect",
            "--store",
            text(&store),
            "--class",
            "Chirurgiens",
            "--oid",
            "999"
        ])
        .status
        .code(),
        Some(1)
    );
}
