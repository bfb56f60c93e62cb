//! Content-addressed response cache: `<dir>/<2-char shard>/<digest>.json`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{BackendError, ChatResponse};

const LOCK_STRIPES: usize = 64;

/// Hex SHA-256 digest identifying a request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl CacheKey {
    /// Digest over `(kind, model_id, canonical payload)`.
    pub fn new(kind: &str, model_id: &str, canonical_payload: &str) -> Self {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0u8]);
        h.update(model_id.as_bytes());
        h.update([0u8]);
        h.update(canonical_payload.as_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn shard(&self) -> &str {
        &self.0[..2]
    }

    fn stripe(&self) -> usize {
        usize::from_str_radix(&self.0[..2], 16).unwrap_or(0) % LOCK_STRIPES
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CachedEntry {
    Chat { model_id: String, response: ChatResponse },
    Embedding { model_id: String, vector: Vec<f32> },
}

pub struct ResponseCache {
    dir: PathBuf,
    locks: Vec<Mutex<()>>,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), locks: (0..LOCK_STRIPES).map(|_| Mutex::new(())).collect() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.shard()).join(format!("{}.json", key.as_str()))
    }

    /// A corrupt or unreadable entry is treated as a miss.
    pub fn get(&self, key: &CacheKey) -> Option<CachedEntry> {
        let path = self.path_for(key);
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(entry) => Some(entry),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, entry: &CachedEntry) -> Result<(), BackendError> {
        let _guard = self.locks[key.stripe()].lock().unwrap_or_else(|p| p.into_inner());
        let path = self.path_for(key);
        let shard = path.parent().expect("cache path has a shard dir");
        fs::create_dir_all(shard).map_err(|e| BackendError::Cache(format!("{}: {e}", shard.display())))?;
        let tmp = shard.join(format!(".{}.tmp", key.as_str()));
        let body = serde_json::to_vec(entry).expect("cache entries serialize");
        fs::write(&tmp, body).map_err(|e| BackendError::Cache(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, &path).map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))
    }

    /// Number of entries on disk.
    pub fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(&self.dir) else { return 0 };
        shards
            .flatten()
            .filter_map(|s| fs::read_dir(s.path()).ok())
            .flat_map(|d| d.flatten())
            .filter(|f| f.path().extension().is_some_and(|x| x == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Usage;

    #[test]
    fn key_is_stable_and_sensitive() {
        let a = CacheKey::new("chat", "m", "payload");
        assert_eq!(a, CacheKey::new("chat", "m", "payload"));
        assert_ne!(a, CacheKey::new("chat", "m", "payload!"));
        assert_ne!(a, CacheKey::new("embedding", "m", "payload"));
        assert_ne!(a, CacheKey::new("chat", "m2", "payload"));
        assert_eq!(a.as_str().len(), 64);
    }

    #[test]
    fn put_then_get_uses_sharded_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = CacheKey::new("chat", "m", "x");
        let entry = CachedEntry::Chat {
            model_id: "m".into(),
            response: ChatResponse { text: "hi".into(), usage: Usage::default() },
        };
        assert!(cache.get(&key).is_none());
        cache.put(&key, &entry).unwrap();
        assert_eq!(cache.get(&key), Some(entry));
        let expected = dir.path().join(&key.as_str()[..2]).join(format!("{}.json", key.as_str()));
        assert!(expected.is_file());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = CacheKey::new("chat", "m", "x");
        let path = cache.path_for(&key);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, "{not json").unwrap();
        assert!(cache.get(&key).is_none());
    }
}
