use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use owh_core::dsl::{parse_warehouse_def, resolve};
use owh_core::model::WarehouseSchema;
use owh_core::object::{Lookup, WarehouseObject};
use owh_core::plan::plan;
use owh_core::property::PropertyKind;
use owh_core::refresh::{initial_load, patch_specific, refresh, RefreshReport};
use owh_core::snapshot::{ingest_snapshot, Snapshot};
use owh_core::source::{parse_source_schema, SourceSchema};
use owh_core::store::{Store, StoreError, StoreLock};
use owh_core::temporal::Instant;
use owh_core::value::{Oid, Value};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "owh",
    version,
    about = "Build and maintain a temporal object warehouse"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a warehouse definition against a source schema.
    Validate {
        #[arg(long)]
        source_schema: PathBuf,
        #[arg(long)]
        warehouse: PathBuf,
    },
    /// Populate a new store from a snapshot.
    Build {
        #[arg(long)]
        source_schema: PathBuf,
        #[arg(long)]
        warehouse: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        /// Instant such as `1995`, `1995-03` or `month:300`.
        #[arg(long)]
        at: Instant,
        #[arg(long)]
        store: PathBuf,
    },
    /// Bring a store up to date with a newer snapshot.
    Refresh {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        at: Instant,
    },
    /// Set specific properties of an object.
    Patch {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        oid: u64,
        /// `property=value`, the value in JSON (bare words are strings).
        #[arg(long = "set", required = true)]
        set: Vec<String>,
        #[arg(long)]
        at: Instant,
    },
    /// Print the objects of a class.
    Inspect {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long)]
        oid: Option<u64>,
        /// Show the state holding at this instant.
        #[arg(long)]
        at: Option<Instant>,
        /// Include past and archived states.
        #[arg(long)]
        history: bool,
    },
    /// Print the population order and retention of each class.
    Plan {
        #[arg(long)]
        source_schema: PathBuf,
        #[arg(long)]
        warehouse: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

/// Writes to stdout, ignoring a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

enum Failure {
    /// Rejected input: exit code 1.
    Domain(String),
    /// Filesystem trouble: exit code 2.
    Io(String),
}

fn domain(e: impl Display) -> Failure {
    Failure::Domain(e.to_string())
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Format { .. } => Failure::Domain(e.to_string()),
            _ => Failure::Io(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn load_definitions(
    source: &Path,
    warehouse: &Path,
) -> Result<(SourceSchema, WarehouseSchema), Failure> {
    let src = parse_source_schema(&read(source)?)
        .map_err(|e| domain(format!("{}: {e}", source.display())))?;
    let def = parse_warehouse_def(&read(warehouse)?)
        .map_err(|e| domain(format!("{}: {e}", warehouse.display())))?;
    let schema =
        resolve(&def, &src).map_err(|e| domain(format!("{}:\n{e}", warehouse.display())))?;
    Ok((src, schema))
}

fn load_snapshot(src: &SourceSchema, path: &Path, at: Instant) -> Result<Snapshot, Failure> {
    ingest_snapshot(src, &read(path)?, at).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn print_report(report: &RefreshReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    out!(
        "{}",
        serde_json::to_string_pretty(report).expect("report serializes")
    );
}

fn state_json(
    obj: &WarehouseObject,
    at: Option<Instant>,
    history: bool,
) -> Result<serde_json::Value, Failure> {
    let values = |m: &std::collections::BTreeMap<String, Value>| {
        serde_json::Value::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
    };
    let mut out = json!({
        "oid": obj.oid,
        "class": obj.class,
        "status": obj.status,
        "lifecycle": obj.lifecycle_span().to_string(),
    });
    match at {
        Some(t) => {
            out["at"] = json!(t.to_string());
            out["state"] = match obj.value_at(t).map_err(domain)? {
                Lookup::Current(s) | Lookup::Past(s) => {
                    json!({"domain": s.domain.to_string(), "value": values(&s.value)})
                }
                Lookup::Archive(a) => {
                    json!({"domain": a.domain.to_string(), "archive": a.aggregates})
                }
                Lookup::Absent => json!("absent"),
            };
        }
        None => {
            out["current"] = json!({"domain": obj.current.domain.to_string(), "value": values(&obj.current.value)});
        }
    }
    if history {
        out["past"] = obj
            .past
            .iter()
            .map(|s| json!({"domain": s.domain.to_string(), "value": values(&s.value)}))
            .collect();
        out["archive"] = match &obj.archive {
            Some(a) => json!({"domain": a.domain.to_string(), "aggregates": a.aggregates}),
            None => serde_json::Value::Null,
        };
    }
    Ok(out)
}

fn parse_assignment(store: &Store, oid: Oid, text: &str) -> Result<(String, Value), Failure> {
    let (prop, raw) = text
        .split_once('=')
        .ok_or_else(|| Failure::Io(format!("--set expects property=value, got `{text}`")))?;
    let obj = store
        .object(oid)
        .ok_or_else(|| domain(format!("no object {oid}")))?;
    let flat = store.schema.flatten_type(&obj.class).map_err(domain)?;
    let def = flat
        .iter()
        .find(|d| d.name == prop)
        .ok_or_else(|| domain(format!("class `{}` has no property `{prop}`", obj.class)))?;
    let PropertyKind::Attribute(ty) = &def.kind else {
        return Err(domain(format!("`{prop}` is a relationship")));
    };
    let json =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let value = Value::from_json(&json, ty).map_err(|e| domain(format!("{prop}: {e}")))?;
    Ok((prop.to_string(), value))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate {
            source_schema,
            warehouse,
        } => {
            let (_, schema) = load_definitions(&source_schema, &warehouse)?;
            out!(
                "{}: {} classes, {} environments, valid",
                schema.name,
                schema.classes.len(),
                schema.environments.len()
            );
        }
        Command::Build {
            source_schema,
            warehouse,
            snapshot,
            at,
            store,
        } => {
            let (src, schema) = load_definitions(&source_schema, &warehouse)?;
            let snap = load_snapshot(&src, &snapshot, at)?;
            let _lock = StoreLock::acquire(&store)?;
            if store.exists() {
                return Err(domain(format!("{} already exists", store.display())));
            }
            let (built, report) = initial_load(schema, src, &snap, at).map_err(domain)?;
            built.save(&store)?;
            print_report(&report);
        }
        Command::Refresh {
            store,
            snapshot,
            at,
        } => {
            let _lock = StoreLock::acquire(&store)?;
            let mut st = Store::load(&store)?;
            let snap = load_snapshot(&st.source, &snapshot, at)?;
            let report = refresh(&mut st, &snap, at).map_err(domain)?;
            st.save(&store)?;
            print_report(&report);
        }
        Command::Patch {
            store,
            oid,
            set,
            at,
        } => {
            let _lock = StoreLock::acquire(&store)?;
            let mut st = Store::load(&store)?;
            let oid = Oid(oid);
            for text in &set {
                let (prop, value) = parse_assignment(&st, oid, text)?;
                patch_specific(&mut st, oid, &prop, value, at).map_err(domain)?;
            }
            st.save(&store)?;
            out!("patched {oid}");
        }
        Command::Inspect {
            store,
            class,
            oid,
            at,
            history,
        } => {
            let st = Store::load(&store)?;
            st.schema.class(&class).map_err(domain)?;
            let oids = st.extension(&class);
            let selected: Vec<Oid> = match oid {
                Some(o) if oids.contains(&Oid(o)) => vec![Oid(o)],
                Some(o) => return Err(domain(format!("object #{o} is not in `{class}`"))),
                None => oids.into_iter().collect(),
            };
            let items = selected
                .iter()
                .map(|o| state_json(&st.objects[o], at, history))
                .collect::<Result<Vec<_>, _>>()?;
            out!(
                "{}",
                serde_json::to_string_pretty(&items).expect("json prints")
            );
        }
        Command::Plan {
            source_schema,
            warehouse,
            json,
        } => {
            let (_, schema) = load_definitions(&source_schema, &warehouse)?;
            let p = plan(&schema).map_err(domain)?;
            if json {
                out!(
                    "{}",
                    serde_json::to_string_pretty(&p).expect("plan serializes")
                );
            } else {
                out!("{}", p.to_string().trim_end());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
