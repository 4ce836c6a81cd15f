use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, CompletionRequest, CompletionResult, Message, Source, TokenUsage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    Record,
    Replay,
    Passthrough,
}

/// Fields that identify a request. The tag is deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResult {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

/// One cache file. Repeated identical requests are stored in call order
/// and replayed in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: KeyMaterial,
    pub results: Vec<StoredResult>,
}

fn key_material(model: &str, request: &CompletionRequest) -> KeyMaterial {
    KeyMaterial {
        model: model.to_string(),
        messages: request.messages.clone(),
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        seed: request.seed,
    }
}

/// Hex SHA-256 of the canonical JSON of (model, messages, temperature, max_tokens, seed).
pub fn cache_key(model: &str, request: &CompletionRequest) -> String {
    let canonical = serde_json::to_string(&key_material(model, request)).expect("key material serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub struct CacheBackend {
    inner: Option<Arc<dyn Backend>>,
    model: String,
    mode: CacheMode,
    strict: bool,
    dir: PathBuf,
    recorded: Mutex<HashMap<String, CacheEntry>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl CacheBackend {
    pub fn new(inner: Arc<dyn Backend>, mode: CacheMode, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        if mode == CacheMode::Record {
            std::fs::create_dir_all(&dir)?;
        }
        Ok(CacheBackend {
            model: inner.model().to_string(),
            inner: Some(inner),
            mode,
            strict: true,
            dir,
            recorded: Mutex::new(HashMap::new()),
            cursors: Mutex::new(HashMap::new()),
        })
    }

    /// Replay-only cache with no backend behind it; every miss is an error.
    pub fn replay_only(dir: impl Into<PathBuf>, model: impl Into<String>) -> Self {
        CacheBackend {
            inner: None,
            model: model.into(),
            mode: CacheMode::Replay,
            strict: true,
            dir: dir.into(),
            recorded: Mutex::new(HashMap::new()),
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// In non-strict replay a miss falls through to the inner backend.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn inner(&self) -> Result<&Arc<dyn Backend>, BackendError> {
        self.inner
            .as_ref()
            .ok_or_else(|| BackendError::Malformed("cache miss (no backend behind replay cache)".into()))
    }

    fn record(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let result = self.inner()?.complete(request)?;
        let key = cache_key(&self.model, request);
        let mut recorded = self.recorded.lock().unwrap();
        // first write of a key in this run starts a fresh entry, discarding older recordings
        let entry = recorded.entry(key.clone()).or_insert_with(|| CacheEntry {
            key: key.clone(),
            request: key_material(&self.model, request),
            results: Vec::new(),
        });
        entry.results.push(StoredResult {
            text: result.text.clone(),
            usage: result.usage,
            latency_ms: result.latency_ms,
        });
        let doc = serde_json::to_string_pretty(entry).expect("cache entry serializes");
        std::fs::write(self.path_for(&key), doc + "\n")
            .map_err(|e| BackendError::Transport(format!("cache write failed: {e}")))?;
        Ok(result)
    }

    fn replay(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let key = cache_key(&self.model, request);
        let entry = match std::fs::read_to_string(self.path_for(&key)) {
            Ok(text) => serde_json::from_str::<CacheEntry>(&text)
                .map_err(|e| BackendError::Malformed(format!("corrupt cache entry {key}: {e}")))?,
            Err(_) if !self.strict && self.inner.is_some() => return self.inner()?.complete(request),
            Err(_) => return Err(BackendError::Malformed(format!("cache miss: {key}"))),
        };
        let Some(last) = entry.results.len().checked_sub(1) else {
            return Err(BackendError::Malformed(format!("empty cache entry {key}")));
        };
        let index = {
            let mut cursors = self.cursors.lock().unwrap();
            let c = cursors.entry(key).or_insert(0);
            let i = (*c).min(last);
            *c += 1;
            i
        };
        let stored = &entry.results[index];
        Ok(CompletionResult {
            text: stored.text.clone(),
            usage: stored.usage,
            latency_ms: stored.latency_ms,
            source: Source::Cache,
        })
    }
}

impl Backend for CacheBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        match self.mode {
            CacheMode::Record => self.record(request),
            CacheMode::Replay => self.replay(request),
            CacheMode::Passthrough => self.inner()?.complete(request),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CallTag, ScriptedBackend};

    fn req(text: &str) -> CompletionRequest {
        CompletionRequest {
            messages: vec![Message::user(text)],
            temperature: 0.2,
            max_tokens: 64,
            seed: Some(7),
            tag: CallTag::Solve,
        }
    }

    #[test]
    fn key_depends_on_model_and_prompt_not_tag() {
        let a = req("x");
        let mut b = a.clone();
        b.tag = CallTag::Check;
        assert_eq!(cache_key("m", &a), cache_key("m", &b));
        assert_ne!(cache_key("m", &a), cache_key("other", &a));
        assert_ne!(cache_key("m", &a), cache_key("m", &req("y")));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(ScriptedBackend::new(["one", "two", "three"]));
        let rec = CacheBackend::new(inner, CacheMode::Record, dir.path()).unwrap();
        assert_eq!(rec.complete(&req("x")).unwrap().text, "one");
        assert_eq!(rec.complete(&req("x")).unwrap().text, "two");
        assert_eq!(rec.complete(&req("y")).unwrap().text, "three");

        let rep = CacheBackend::replay_only(dir.path(), "scripted");
        assert_eq!(rep.complete(&req("x")).unwrap().text, "one");
        assert_eq!(rep.complete(&req("y")).unwrap().source, Source::Cache);
        assert_eq!(rep.complete(&req("x")).unwrap().text, "two");
        // exhausted per-key sequences repeat the last value
        assert_eq!(rep.complete(&req("x")).unwrap().text, "two");
        assert!(matches!(rep.complete(&req("z")), Err(BackendError::Malformed(m)) if m.contains("cache miss")));
    }

    #[test]
    fn lenient_replay_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(ScriptedBackend::new(["live"]));
        let rep = CacheBackend::new(inner, CacheMode::Replay, dir.path()).unwrap().strict(false);
        let r = rep.complete(&req("q")).unwrap();
        assert_eq!((r.text.as_str(), r.source), ("live", Source::Script));
    }
}
