use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, BackendError, CallTag, CompletionRequest, CompletionResult, Source, TokenUsage};

/// Canned responses, either one global queue or one queue per [`CallTag`].
///
/// On disk a script is JSON: a plain array of strings, or an object keyed by
/// tag name (`{"routing": [...], "solve": [...]}`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Script {
    Sequential(Vec<String>),
    ByTag(BTreeMap<CallTag, Vec<String>>),
}

impl Script {
    pub fn load(path: &Path) -> std::io::Result<Script> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

enum Queues {
    Sequential(VecDeque<String>),
    ByTag(BTreeMap<CallTag, VecDeque<String>>),
}

pub struct ScriptedBackend {
    model: String,
    queues: Mutex<Queues>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_script(Script::Sequential(responses.into_iter().map(Into::into).collect()))
    }

    pub fn from_script(script: Script) -> Self {
        let queues = match script {
            Script::Sequential(v) => Queues::Sequential(v.into()),
            Script::ByTag(m) => Queues::ByTag(m.into_iter().map(|(k, v)| (k, v.into())).collect()),
        };
        ScriptedBackend {
            model: "scripted".into(),
            queues: Mutex::new(queues),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Responses not yet consumed, per tag (the sequential queue reports under `None`).
    pub fn remaining(&self) -> BTreeMap<Option<CallTag>, usize> {
        match &*self.queues.lock().unwrap() {
            Queues::Sequential(q) => BTreeMap::from([(None, q.len())]),
            Queues::ByTag(m) => m.iter().map(|(k, v)| (Some(*k), v.len())).collect(),
        }
    }
}

impl Backend for ScriptedBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let text = match &mut *self.queues.lock().unwrap() {
            Queues::Sequential(q) => q.pop_front(),
            Queues::ByTag(m) => m.get_mut(&request.tag).and_then(VecDeque::pop_front),
        }
        .ok_or(BackendError::ScriptExhausted)?;
        Ok(scripted_result(request, text))
    }
}

pub(crate) fn scripted_result(request: &CompletionRequest, text: String) -> CompletionResult {
    CompletionResult {
        usage: TokenUsage {
            prompt_tokens: estimate_tokens(request.prompt_chars()),
            completion_tokens: estimate_tokens(text.chars().count()),
        },
        text,
        latency_ms: 0,
        source: Source::Script,
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync;

/// A deterministic backend driven by a closure over the request.
pub struct FnBackend {
    model: String,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new<F>(model: impl Into<String>, respond: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        FnBackend {
            model: model.into(),
            respond: Box::new(respond),
        }
    }
}

impl Backend for FnBackend {
    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let text = (self.respond)(request)?;
        Ok(scripted_result(request, text))
    }
}
