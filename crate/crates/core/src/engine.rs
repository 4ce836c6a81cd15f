use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendError, CallTag, CompletionRequest, Message};
use crate::model::AtomicTree;
use crate::prompts::PromptCatalog;

/// Sampling parameters per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub routing_temperature: f64,
    pub solve_temperature: f64,
    pub check_temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            routing_temperature: 0.2,
            solve_temperature: 0.7,
            check_temperature: 0.0,
            max_tokens: 2048,
            seed: None,
        }
    }
}

impl Sampling {
    pub fn temperature(&self, tag: CallTag) -> f64 {
        match tag {
            CallTag::Routing | CallTag::Backtrack | CallTag::Triage => self.routing_temperature,
            CallTag::Check => self.check_temperature,
            CallTag::Solve | CallTag::Revise | CallTag::Compress | CallTag::Summarize => {
                self.solve_temperature
            }
        }
    }

    pub fn request(&self, tag: CallTag, messages: Vec<Message>) -> CompletionRequest {
        CompletionRequest {
            messages,
            temperature: self.temperature(tag),
            max_tokens: self.max_tokens,
            seed: self.seed,
            tag,
        }
    }
}

/// Everything an operation needs to talk to a backend.
#[derive(Clone, Copy)]
pub struct CallContext<'a> {
    pub backend: &'a dyn Backend,
    pub prompts: &'a PromptCatalog,
    pub sampling: &'a Sampling,
    /// Character budget for rendered trees inside prompts.
    pub render_budget: usize,
}

pub const DEFAULT_RENDER_BUDGET: usize = 24_000;

impl<'a> CallContext<'a> {
    pub fn new(backend: &'a dyn Backend, prompts: &'a PromptCatalog, sampling: &'a Sampling) -> Self {
        CallContext {
            backend,
            prompts,
            sampling,
            render_budget: DEFAULT_RENDER_BUDGET,
        }
    }

    /// One backend call, accounted on the tree.
    pub fn call(
        &self,
        tree: &mut AtomicTree,
        tag: CallTag,
        messages: Vec<Message>,
    ) -> Result<String, BackendError> {
        let request = self.sampling.request(tag, messages);
        let result = self.backend.complete(&request)?;
        tree.add_usage(
            result.usage.prompt_tokens,
            result.usage.completion_tokens,
            result.latency_ms,
        );
        Ok(result.text)
    }

    /// Calls the backend and parses the reply. On a parse failure the
    /// conversation is extended with `reminder` and asked once more.
    /// Returns the parsed value (if any) and the last raw reply.
    pub fn ask<T>(
        &self,
        tree: &mut AtomicTree,
        tag: CallTag,
        messages: Vec<Message>,
        reminder: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(Option<T>, String), BackendError> {
        let first = self.call(tree, tag, messages.clone())?;
        if let Some(v) = parse(&first) {
            return Ok((Some(v), first));
        }
        let mut retry = messages;
        retry.push(Message::assistant(first));
        retry.push(Message::user(reminder));
        let second = self.call(tree, tag, retry)?;
        Ok((parse(&second), second))
    }
}
