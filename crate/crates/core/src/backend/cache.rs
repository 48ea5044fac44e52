use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BackendError;
use crate::util::{sha256_hex, write_atomic};

const LOCK_SHARDS: usize = 16;

/// One stored response: the request it answers, the raw endpoint payload
/// kept for audit, and the derived value handed back to callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: Value,
    pub raw: Value,
    pub value: Value,
}

enum Store {
    Disabled,
    Memory(Mutex<HashMap<String, CacheEntry>>),
    Disk {
        dir: PathBuf,
        shards: Vec<Mutex<()>>,
    },
}

/// Content-addressed response store keyed by the SHA-256 of the request.
pub struct ResponseCache {
    store: Store,
}

impl ResponseCache {
    pub fn disabled() -> Self {
        ResponseCache {
            store: Store::Disabled,
        }
    }

    pub fn in_memory() -> Self {
        ResponseCache {
            store: Store::Memory(Mutex::new(HashMap::new())),
        }
    }

    /// Entries live at `dir/<first two hex digits>/<digest>.json`.
    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        ResponseCache {
            store: Store::Disk {
                dir: dir.into(),
                shards: (0..LOCK_SHARDS).map(|_| Mutex::new(())).collect(),
            },
        }
    }

    /// Digest of a canonical request document.
    pub fn key_for(request: &Value) -> String {
        sha256_hex(serde_json::to_vec(request).expect("request value serializes"))
    }

    fn entry_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn shard(key: &str) -> usize {
        usize::from_str_radix(&key[..2], 16).unwrap_or(0) % LOCK_SHARDS
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        match &self.store {
            Store::Disabled => Ok(None),
            Store::Memory(map) => Ok(map.lock().expect("cache poisoned").get(key).cloned()),
            Store::Disk { dir, .. } => {
                let path = Self::entry_path(dir, key);
                match fs::read(&path) {
                    Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| {
                        BackendError::Cache {
                            path,
                            message: e.to_string(),
                        }
                    }),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(BackendError::Cache {
                        path,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }

    pub fn put(&self, entry: CacheEntry) -> Result<(), BackendError> {
        match &self.store {
            Store::Disabled => Ok(()),
            Store::Memory(map) => {
                map.lock()
                    .expect("cache poisoned")
                    .insert(entry.key.clone(), entry);
                Ok(())
            }
            Store::Disk { dir, shards } => {
                let path = Self::entry_path(dir, &entry.key);
                let _guard = shards[Self::shard(&entry.key)]
                    .lock()
                    .expect("cache shard poisoned");
                let bytes = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
                write_atomic(&path, &bytes).map_err(|e| BackendError::Cache {
                    path,
                    message: e.to_string(),
                })
            }
        }
    }
}
