//! The warehouse store: objects, identity bookkeeping and on-disk form.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::SourceKey;
use crate::model::WarehouseSchema;
use crate::object::WarehouseObject;
use crate::source::SourceSchema;
use crate::temporal::Instant;
use crate::value::Oid;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0} is locked by another process (remove {0}.lock if stale)")]
    Locked(PathBuf),
    #[error("{path}: malformed store: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct IdentityEntry {
    class: String,
    key: SourceKey,
    oids: Vec<Oid>,
}

/// Oids ever allocated per `(class, source key)`, oldest first. The last one
/// is the live candidate; earlier ones belong to frozen objects.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<IdentityEntry>", into = "Vec<IdentityEntry>")]
pub struct IdentityMap {
    entries: BTreeMap<(String, SourceKey), Vec<Oid>>,
}

impl From<Vec<IdentityEntry>> for IdentityMap {
    fn from(v: Vec<IdentityEntry>) -> Self {
        IdentityMap {
            entries: v.into_iter().map(|e| ((e.class, e.key), e.oids)).collect(),
        }
    }
}

impl From<IdentityMap> for Vec<IdentityEntry> {
    fn from(m: IdentityMap) -> Self {
        m.entries
            .into_iter()
            .map(|((class, key), oids)| IdentityEntry { class, key, oids })
            .collect()
    }
}

impl IdentityMap {
    pub fn latest(&self, class: &str, key: &SourceKey) -> Option<Oid> {
        self.entries
            .get(&(class.to_string(), key.clone()))
            .and_then(|v| v.last().copied())
    }

    pub fn history(&self, class: &str, key: &SourceKey) -> &[Oid] {
        self.entries
            .get(&(class.to_string(), key.clone()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn push(&mut self, class: &str, key: SourceKey, oid: Oid) {
        self.entries
            .entry((class.to_string(), key))
            .or_default()
            .push(oid);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SourceKey, &[Oid])> {
        self.entries
            .iter()
            .map(|((c, k), v)| (c.as_str(), k, v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub schema: WarehouseSchema,
    pub source: SourceSchema,
    pub last_refresh: Instant,
    pub next_oid: u64,
    pub identity: IdentityMap,
    pub objects: BTreeMap<Oid, WarehouseObject>,
}

impl Store {
    pub fn new(schema: WarehouseSchema, source: SourceSchema, at: Instant) -> Self {
        Store {
            schema,
            source,
            last_refresh: at,
            next_oid: 1,
            identity: IdentityMap::default(),
            objects: BTreeMap::new(),
        }
    }

    pub fn allocate(&mut self) -> Oid {
        let oid = Oid(self.next_oid);
        self.next_oid += 1;
        oid
    }

    pub fn object(&self, oid: Oid) -> Option<&WarehouseObject> {
        self.objects.get(&oid)
    }

    /// Objects whose class is `class` or one of its subclasses, frozen ones included.
    pub fn extension(&self, class: &str) -> BTreeSet<Oid> {
        self.objects
            .values()
            .filter(|o| self.schema.is_subclass(&o.class, class).unwrap_or(false))
            .map(|o| o.oid)
            .collect()
    }

    pub fn active_extension(&self, class: &str) -> BTreeSet<Oid> {
        self.extension(class)
            .into_iter()
            .filter(|o| self.objects[o].is_active())
            .collect()
    }

    /// Objects created directly in `class`.
    pub fn members(&self, class: &str) -> impl Iterator<Item = &WarehouseObject> + '_ {
        let class = class.to_string();
        self.objects.values().filter(move |o| o.class == class)
    }

    /// Byte-stable JSON text: object keys sorted, two-space indentation.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("store is always serializable");
        let mut text = serde_json::to_string_pretty(&value).expect("json value prints");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Store, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Store, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Store::from_json(&text).map_err(|e| StoreError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Writes a temporary sibling, then renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = sibling(path, "tmp");
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(self.to_canonical_json().as_bytes())
            .and_then(|_| f.sync_all())
            .map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Exclusive advisory lock on a store path, released on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(store: &Path) -> Result<StoreLock, StoreError> {
        let path = sibling(store, "lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(store.to_path_buf()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
