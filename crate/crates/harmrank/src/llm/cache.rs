//! Content-addressed disk cache for backend replies.
//!
//! One file per cache key plus an `index.json` recording entry sizes and
//! logical access ordinals for LRU eviction. The index persists on puts
//! (throttled), on GC, and on flush; if it goes missing the directory
//! scan rebuilds it with access ordinals reset to zero.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;

const INDEX_FILE: &str = "index.json";
const PERSIST_EVERY: u64 = 256;

/// 256-bit digest of a canonical request serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    /// Hashes canonical request bytes. Callers are responsible for
    /// producing an order-stable serialization.
    pub fn from_canonical_bytes(bytes: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        CacheKey(hasher.finalize().into())
    }

    pub fn hex(&self) -> String {
        let mut out = String::with_capacity(64);
        for byte in self.0 {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryMeta {
    bytes: u64,
    last_access: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct IndexState {
    entries: BTreeMap<String, EntryMeta>,
    clock: u64,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    digest: String,
    reply: String,
}

struct CacheInner {
    dir: PathBuf,
    state: Mutex<IndexState>,
    unsaved: Mutex<u64>,
}

/// Shared handle to one cache directory.
#[derive(Clone)]
pub struct DiskCache {
    inner: Arc<CacheInner>,
}

fn io_error(context: &str, error: io::Error) -> LlmError {
    LlmError::Storage {
        message: format!("{context}: {error}"),
    }
}

impl DiskCache {
    /// Opens (creating if needed) a cache directory and loads its index.
    /// Entry files absent from the index are adopted with access ordinal
    /// zero, so a lost index degrades LRU order but loses no data.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_error("creating cache directory", e))?;

        let mut state: IndexState = match fs::read(dir.join(INDEX_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => IndexState::default(),
            Err(e) => return Err(io_error("reading cache index", e)),
        };

        let listing = fs::read_dir(&dir).map_err(|e| io_error("listing cache directory", e))?;
        let mut names: Vec<(String, u64)> = Vec::new();
        for entry in listing {
            let entry = entry.map_err(|e| io_error("listing cache directory", e))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if name == INDEX_FILE || !name.ends_with(".json") {
                continue;
            }
            let stem = name.trim_end_matches(".json").to_string();
            if !state.entries.contains_key(&stem) {
                let bytes = entry
                    .metadata()
                    .map_err(|e| io_error("reading cache entry metadata", e))?
                    .len();
                names.push((stem, bytes));
            }
        }
        names.sort();
        for (stem, bytes) in names {
            state.entries.insert(
                stem,
                EntryMeta {
                    bytes,
                    last_access: 0,
                },
            );
        }

        Ok(DiskCache {
            inner: Arc::new(CacheInner {
                dir,
                state: Mutex::new(state),
                unsaved: Mutex::new(0),
            }),
        })
    }

    fn entry_path(&self, hex: &str) -> PathBuf {
        self.inner.dir.join(format!("{hex}.json"))
    }

    fn persist_locked(&self, state: &IndexState) -> Result<(), LlmError> {
        let bytes = serde_json::to_vec(state).expect("index serialization cannot fail");
        fs::write(self.inner.dir.join(INDEX_FILE), bytes)
            .map_err(|e| io_error("writing cache index", e))
    }

    fn note_mutation(&self, state: &IndexState, force: bool) -> Result<(), LlmError> {
        let mut unsaved = self.inner.unsaved.lock().expect("cache counter poisoned");
        *unsaved += 1;
        if force || *unsaved >= PERSIST_EVERY {
            self.persist_locked(state)?;
            *unsaved = 0;
        }
        Ok(())
    }

    /// Returns the cached reply for `key`, bumping its access ordinal.
    pub fn get(&self, key: &CacheKey) -> Result<Option<String>, LlmError> {
        let hex = key.hex();
        {
            let mut state = self.inner.state.lock().expect("cache index poisoned");
            if !state.entries.contains_key(&hex) {
                return Ok(None);
            }
            state.clock += 1;
            let clock = state.clock;
            state
                .entries
                .get_mut(&hex)
                .expect("entry vanished under lock")
                .last_access = clock;
        }
        let bytes = match fs::read(self.entry_path(&hex)) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                // Index drifted from disk; forget the entry.
                let mut state = self.inner.state.lock().expect("cache index poisoned");
                state.entries.remove(&hex);
                return Ok(None);
            }
            Err(e) => return Err(io_error("reading cache entry", e)),
        };
        let entry: EntryFile = serde_json::from_slice(&bytes).map_err(|e| LlmError::Storage {
            message: format!("corrupt cache entry {hex}: {e}"),
        })?;
        Ok(Some(entry.reply))
    }

    /// Stores `reply` under `key`, overwriting any existing entry.
    pub fn put(&self, key: &CacheKey, reply: &str) -> Result<(), LlmError> {
        let hex = key.hex();
        let payload = serde_json::to_vec(&EntryFile {
            digest: hex.clone(),
            reply: reply.to_string(),
        })
        .expect("entry serialization cannot fail");
        fs::write(self.entry_path(&hex), &payload)
            .map_err(|e| io_error("writing cache entry", e))?;

        let mut state = self.inner.state.lock().expect("cache index poisoned");
        state.clock += 1;
        let clock = state.clock;
        state.entries.insert(
            hex,
            EntryMeta {
                bytes: payload.len() as u64,
                last_access: clock,
            },
        );
        self.note_mutation(&state, false)
    }

    /// Evicts least-recently-used entries until total size fits within
    /// `max_bytes`. Returns the number of bytes reclaimed.
    pub fn gc(&self, max_bytes: u64) -> Result<u64, LlmError> {
        let mut state = self.inner.state.lock().expect("cache index poisoned");
        let mut total: u64 = state.entries.values().map(|m| m.bytes).sum();
        let mut reclaimed = 0u64;
        while total > max_bytes {
            let victim = state
                .entries
                .iter()
                .min_by_key(|(hex, meta)| (meta.last_access, (*hex).clone()))
                .map(|(hex, meta)| (hex.clone(), meta.bytes));
            let Some((hex, bytes)) = victim else { break };
            match fs::remove_file(self.entry_path(&hex)) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_error("removing cache entry", e)),
            }
            state.entries.remove(&hex);
            total -= bytes;
            reclaimed += bytes;
        }
        self.persist_locked(&state)?;
        Ok(reclaimed)
    }

    /// Persists the index immediately.
    pub fn flush(&self) -> Result<(), LlmError> {
        let state = self.inner.state.lock().expect("cache index poisoned");
        self.persist_locked(&state)
    }

    pub fn len(&self) -> usize {
        self.inner
            .state
            .lock()
            .expect("cache index poisoned")
            .entries
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_bytes(&self) -> u64 {
        self.inner
            .state
            .lock()
            .expect("cache index poisoned")
            .entries
            .values()
            .map(|m| m.bytes)
            .sum()
    }
}

impl Drop for CacheInner {
    fn drop(&mut self) {
        // Best-effort index persistence; losing it only resets LRU order.
        if let Ok(state) = self.state.lock() {
            let bytes = serde_json::to_vec(&*state).expect("index serialization cannot fail");
            let _ = fs::write(self.dir.join(INDEX_FILE), bytes);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn key(n: u8) -> CacheKey {
        CacheKey::from_canonical_bytes(&[n])
    }

    #[test]
    fn round_trip_and_overwrite() {
        let dir = TempDir::new().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        assert_eq!(cache.get(&key(1)).unwrap(), None);
        cache.put(&key(1), "hello").unwrap();
        assert_eq!(cache.get(&key(1)).unwrap(), Some("hello".to_string()));
        cache.put(&key(1), "world").unwrap();
        assert_eq!(cache.get(&key(1)).unwrap(), Some("world".to_string()));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn survives_reopen() {
        let dir = TempDir::new().unwrap();
        {
            let cache = DiskCache::open(dir.path()).unwrap();
            cache.put(&key(7), "persisted").unwrap();
            cache.flush().unwrap();
        }
        let cache = DiskCache::open(dir.path()).unwrap();
        assert_eq!(cache.get(&key(7)).unwrap(), Some("persisted".to_string()));
    }

    #[test]
    fn gc_under_limit_reclaims_nothing() {
        let dir = TempDir::new().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        cache.put(&key(1), "a").unwrap();
        assert_eq!(cache.gc(u64::MAX).unwrap(), 0);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn gc_evicts_least_recently_used() {
        let dir = TempDir::new().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        // Equal-sized replies so byte accounting is uniform.
        cache.put(&key(1), "aaaaa").unwrap();
        cache.put(&key(2), "bbbbb").unwrap();
        cache.put(&key(3), "ccccc").unwrap();
        // Touch 1 so 2 becomes the oldest access.
        cache.get(&key(1)).unwrap();
        let entry_bytes = cache.total_bytes() / 3;
        let reclaimed = cache.gc(entry_bytes * 2).unwrap();
        assert_eq!(reclaimed, entry_bytes);
        assert_eq!(cache.get(&key(2)).unwrap(), None);
        assert!(cache.get(&key(1)).unwrap().is_some());
        assert!(cache.get(&key(3)).unwrap().is_some());
    }

    #[test]
    fn gc_zero_empties_cache() {
        let dir = TempDir::new().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        cache.put(&key(1), "a").unwrap();
        cache.put(&key(2), "b").unwrap();
        let reclaimed = cache.gc(0).unwrap();
        assert!(reclaimed > 0);
        assert!(cache.is_empty());
        assert_eq!(cache.get(&key(1)).unwrap(), None);
    }

    #[test]
    fn adopts_orphan_entries_when_index_missing() {
        let dir = TempDir::new().unwrap();
        {
            let cache = DiskCache::open(dir.path()).unwrap();
            cache.put(&key(9), "orphan").unwrap();
        }
        std::fs::remove_file(dir.path().join(INDEX_FILE)).unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        assert_eq!(cache.get(&key(9)).unwrap(), Some("orphan".to_string()));
    }
}
