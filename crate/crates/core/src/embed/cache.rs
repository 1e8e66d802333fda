//! Append-only embedding cache keyed by `(model_id, content_hash)`.
//!
//! One JSON record per line. Lines that fail to parse or validate (for
//! example a record truncated by a crash) are skipped with a warning and the
//! affected texts are simply re-embedded.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::vector::is_normalized;
use crate::error::{Error, Result};

pub const CACHE_FILE: &str = "embeddings.cache.jsonl";

/// Hex SHA-256 of the exact text bytes that were embedded.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    model_id: String,
    hash: String,
    values: Vec<f64>,
}

type Key = (String, String);

pub struct EmbeddingCache {
    path: PathBuf,
    entries: RwLock<HashMap<Key, Vec<f64>>>,
    writer: Mutex<File>,
}

impl EmbeddingCache {
    /// Opens (or creates) the cache file at `path`.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut entries = HashMap::new();
        let mut skipped = 0usize;
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for line in BufReader::new(file).split(b'\n') {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.is_empty() {
                    continue;
                }
                match serde_json::from_slice::<CacheRecord>(&line) {
                    Ok(r) if is_normalized(&r.values) => {
                        entries.insert((r.model_id, r.hash), r.values);
                    }
                    _ => skipped += 1,
                }
            }
        }
        if skipped > 0 {
            log::warn!(
                "embedding cache {}: ignored {skipped} corrupt record(s); they will be recomputed",
                path.display()
            );
        }
        let mut writer = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        terminate_partial_line(&mut writer).map_err(|e| Error::io(path, e))?;
        Ok(EmbeddingCache {
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model_id: &str, hash: &str) -> Option<Vec<f64>> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(model_id.to_string(), hash.to_string()))
            .cloned()
    }

    /// Stores `values` in memory and appends them to the cache file.
    pub fn put(&self, model_id: &str, hash: &str, values: &[f64]) -> Result<()> {
        let record = CacheRecord {
            model_id: model_id.to_string(),
            hash: hash.to_string(),
            values: values.to_vec(),
        };
        let mut line = serde_json::to_vec(&record).map_err(|e| Error::invalid(e.to_string()))?;
        line.push(b'\n');
        {
            let mut w = self.writer.lock().expect("cache lock poisoned");
            w.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert((record.model_id, record.hash), record.values);
        Ok(())
    }
}

// A crash can leave the last record without its newline; start fresh
// records on their own line so they stay parseable.
fn terminate_partial_line(file: &mut File) -> std::io::Result<()> {
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    file.seek(SeekFrom::Start(len - 1))?;
    let mut last = [0u8; 1];
    file.read_exact(&mut last)?;
    if last[0] != b'\n' {
        file.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_then_get_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        let v = vec![0.1f64.sqrt(), 0.9f64.sqrt()];
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.put("m", "h1", &v).unwrap();
            assert_eq!(cache.get("m", "h1").unwrap(), v);
        }
        let reopened = EmbeddingCache::open(&path).unwrap();
        let got = reopened.get("m", "h1").unwrap();
        assert!(got.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn empty_cache_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(&dir.path().join(CACHE_FILE)).unwrap();
        assert!(cache.get("m", "nope").is_none());
        assert!(cache.is_empty());
    }

    #[test]
    fn truncated_entry_is_ignored_and_file_stays_appendable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.put("m", "a", &[1.0, 0.0]).unwrap();
            cache.put("m", "b", &[0.0, 1.0]).unwrap();
        }
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();

        let cache = EmbeddingCache::open(&path).unwrap();
        assert!(cache.get("m", "a").is_some());
        assert!(cache.get("m", "b").is_none());
        cache.put("m", "c", &[0.6, 0.8]).unwrap();
        drop(cache);
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.get("m", "c").unwrap(), vec![0.6, 0.8]);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn content_hash_is_stable() {
        assert_eq!(content_hash("abc"), content_hash("abc"));
        assert_ne!(content_hash("abc"), content_hash("abd"));
        assert_eq!(content_hash("").len(), 64);
    }
}
