//! On-disk cache of numeric intermediates keyed by content hash.
//!
//! Each entry is `<root>/<stage>/<sha256>.bin`: one line of canonical key JSON,
//! one `rows cols` line, then `rows · cols` little-endian f64 values. Writes go
//! through a temporary file and a rename, so an interrupted run never leaves a
//! truncated entry behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{RunError, RunResult, Stage};

/// Dense row-major matrix as stored in the cache.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix payload does not match its shape");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn encode(&self, key: &str) -> Vec<u8> {
        let mut out = Vec::with_capacity(key.len() + 32 + self.data.len() * 8);
        out.extend_from_slice(key.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(format!("{} {}\n", self.rows, self.cols).as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    fn decode(bytes: &[u8], key: &str) -> Option<Self> {
        let nl = bytes.iter().position(|&b| b == b'\n')?;
        if &bytes[..nl] != key.as_bytes() {
            return None;
        }
        let rest = &bytes[nl + 1..];
        let nl2 = rest.iter().position(|&b| b == b'\n')?;
        let header = std::str::from_utf8(&rest[..nl2]).ok()?;
        let (r, c) = header.split_once(' ')?;
        let (rows, cols): (usize, usize) = (r.parse().ok()?, c.parse().ok()?);
        let body = &rest[nl2 + 1..];
        if body.len() != rows * cols * 8 {
            return None;
        }
        let data = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Some(Self { rows, cols, data })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a file, or of every file in a directory (sorted by name, names included).
pub fn hash_path(path: &Path) -> RunResult<String> {
    let io = |e| RunError::io(Stage::Corpus, path, e);
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut names: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        for p in names {
            h.update(p.file_name().map(|n| n.as_encoded_bytes()).unwrap_or_default());
            h.update(fs::read(&p).map_err(|e| RunError::io(Stage::Corpus, &p, e))?);
        }
    } else {
        h.update(fs::read(path).map_err(io)?);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug)]
pub struct Cache {
    root: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: Some(root.into()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// A cache that always recomputes and stores nothing.
    pub fn disabled() -> Self {
        Self {
            root: None,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Path an entry for `key` occupies under `stage`.
    pub fn entry_path(&self, stage: Stage, key: &impl Serialize) -> Option<PathBuf> {
        let json = serde_json::to_string(key).expect("cache keys serialize");
        self.root
            .as_ref()
            .map(|r| r.join(stage.to_string()).join(format!("{}.bin", sha256_hex(json.as_bytes()))))
    }

    /// Returns the cached matrix for `key`, computing and storing it on a miss.
    /// Unreadable or mismatched entries count as misses and are overwritten.
    pub fn get_or_compute(
        &self,
        stage: Stage,
        key: &impl Serialize,
        compute: impl FnOnce() -> RunResult<Matrix>,
    ) -> RunResult<Matrix> {
        let json = serde_json::to_string(key).expect("cache keys serialize");
        let Some(root) = &self.root else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return compute();
        };
        let dir = root.join(stage.to_string());
        let path = dir.join(format!("{}.bin", sha256_hex(json.as_bytes())));
        if let Some(m) = fs::read(&path).ok().and_then(|b| Matrix::decode(&b, &json)) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(m);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let m = compute()?;
        fs::create_dir_all(&dir).map_err(|e| RunError::io(stage, &dir, e))?;
        let tmp = dir.join(format!(".{}.{}.tmp", sha256_hex(json.as_bytes()), std::process::id()));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&m.encode(&json))?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| RunError::io(stage, &path, e))?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_counters() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let m = Matrix::new(2, 3, vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE, 0.0, 1e300]);
        let got = cache.get_or_compute(Stage::Vocab, &("a", 1), || Ok(m.clone())).unwrap();
        assert_eq!(got, m);
        let again = cache.get_or_compute(Stage::Vocab, &("a", 1), || panic!("should hit")).unwrap();
        assert_eq!(again, m);
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
        let other = cache.get_or_compute(Stage::Vocab, &("a", 2), || Ok(Matrix::new(0, 4, vec![]))).unwrap();
        assert_eq!(other.rows, 0);
        assert_eq!(cache.misses(), 2);
    }

    #[test]
    fn corrupt_entries_are_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let key = "k";
        cache.get_or_compute(Stage::Vocab, &key, || Ok(Matrix::new(1, 1, vec![4.0]))).unwrap();
        let path = cache.entry_path(Stage::Vocab, &key).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        let m = cache.get_or_compute(Stage::Vocab, &key, || Ok(Matrix::new(1, 1, vec![5.0]))).unwrap();
        assert_eq!(m.data, vec![5.0]);
    }
}
