//! Content-addressed response cache on disk.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatModel, CompletionRequest, LlmError};

/// Hex SHA-256 over the model name, temperature and messages.
pub fn cache_key(req: &CompletionRequest) -> String {
    let canonical = json!({
        "model": req.model,
        "temperature": req.temperature,
        "messages": req.messages,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    response: String,
}

pub struct CachedModel<M> {
    inner: M,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

impl<M: ChatModel> CachedModel<M> {
    pub fn new(inner: M, dir: impl Into<PathBuf>) -> Self {
        CachedModel {
            inner,
            dir: dir.into(),
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

    pub fn inner(&self) -> &M {
        &self.inner
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn read(&self, path: &Path, key: &str) -> Option<String> {
        let text = fs::read_to_string(path).ok()?;
        let e: Entry = serde_json::from_str(&text).ok()?;
        (e.key == key).then_some(e.response)
    }

    fn write(&self, path: &Path, key: &str, response: &str) -> Result<(), LlmError> {
        let err = |e: std::io::Error| LlmError::Cache(format!("{}: {e}", path.display()));
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(err)?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_string(&Entry {
            key: key.to_string(),
            response: response.to_string(),
        })
        .expect("entry serializes");
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(body.as_bytes()).map_err(err)?;
        f.sync_all().map_err(err)?;
        fs::rename(&tmp, path).map_err(err)
    }
}

impl<M: ChatModel> ChatModel for CachedModel<M> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let key = cache_key(req);
        let path = self.path(&key);
        if let Some(hit) = self.read(&path, &key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let response = self.inner.complete(req)?;
        self.write(&path, &key, &response)?;
        Ok(response)
    }
}
