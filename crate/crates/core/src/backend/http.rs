use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{excerpt, Backend, BackendError, Clock, CompletionRequest, CompletionResult, Source, SystemClock, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Endpoint root; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_factor: f64,
    /// Extra random delay as a fraction of each backoff step.
    pub backoff_jitter: f64,
    pub max_concurrent: usize,
    /// Token-bucket refill rate; `None` disables rate limiting.
    pub requests_per_second: Option<f64>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model: "gpt-4o-mini".into(),
            timeout: Duration::from_secs(120),
            max_retries: 5,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2.0,
            backoff_jitter: 0.25,
            max_concurrent: 4,
            requests_per_second: Some(8.0),
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

struct TokenBucket {
    capacity: f64,
    tokens: f64,
    rate: f64,
    last: Duration,
}

impl TokenBucket {
    fn take(&mut self, clock: &dyn Clock) {
        loop {
            let now = clock.now();
            let elapsed = now.saturating_sub(self.last).as_secs_f64();
            self.tokens = (self.tokens + elapsed * self.rate).min(self.capacity);
            self.last = now;
            if self.tokens >= 1.0 {
                self.tokens -= 1.0;
                return;
            }
            clock.sleep(Duration::from_secs_f64((1.0 - self.tokens) / self.rate));
        }
    }
}

/// Blocking client for OpenAI-compatible chat-completion endpoints.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: Semaphore,
    bucket: Option<Mutex<TokenBucket>>,
    clock: Arc<dyn Clock>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        Self::with_clock(config, Arc::new(SystemClock::default()))
    }

    /// Same as [`HttpBackend::new`] with an injected clock for backoff and rate limiting.
    pub fn with_clock(config: HttpConfig, clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        let url = config.base_url.trim_end_matches('/');
        if !(url.starts_with("http://") || url.starts_with("https://")) || url.len() <= "https://".len() {
            return Err(BackendError::InvalidRequest(format!("invalid base url `{}`", config.base_url)));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let bucket = config.requests_per_second.filter(|r| *r > 0.0).map(|rate| {
            Mutex::new(TokenBucket {
                capacity: rate.max(1.0),
                tokens: rate.max(1.0),
                rate,
                last: clock.now(),
            })
        });
        Ok(HttpBackend {
            gate: Semaphore::new(config.max_concurrent),
            config,
            client,
            api_key,
            bucket,
            clock,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Delay before retry number `attempt + 1`.
    fn backoff(&self, attempt: u32, err: &BackendError) -> Duration {
        let base = self.config.backoff_base.as_secs_f64() * self.config.backoff_factor.powi(attempt as i32);
        let jitter = if self.config.backoff_jitter > 0.0 {
            rand::thread_rng().gen_range(0.0..self.config.backoff_jitter) * base
        } else {
            0.0
        };
        let mut delay = Duration::from_secs_f64(base + jitter);
        if let BackendError::RateLimited { retry_after_ms: Some(ms) } = err {
            delay = delay.max(Duration::from_millis(*ms));
        }
        delay
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let _permit = self.gate.acquire();
        if let Some(bucket) = &self.bucket {
            bucket.lock().unwrap().take(self.clock.as_ref());
        }
        let mut body = json!({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        let mut req = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = req.send().map_err(classify_transport)?;
        let status = resp.status().as_u16();
        let retry_after_ms = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(|s| (s * 1000.0) as u64);
        let text = resp.text().map_err(classify_transport)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => parse_completion(&text, latency_ms),
            401 | 403 => Err(BackendError::Auth(excerpt(&text, 200))),
            429 => Err(BackendError::RateLimited { retry_after_ms }),
            _ => Err(BackendError::Status { status, body: excerpt(&text, 200) }),
        }
    }
}

fn classify_transport(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else if e.is_decode() || e.is_body() {
        BackendError::Malformed(e.to_string())
    } else {
        BackendError::Transport(e.to_string())
    }
}

/// Reads `choices[0].message.content` and the optional `usage` block.
pub(crate) fn parse_completion(body: &str, latency_ms: u64) -> Result<CompletionResult, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|_| BackendError::Malformed(excerpt(body, 200)))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed(excerpt(body, 200)))?;
    let count = |field: &str| v.pointer(&format!("/usage/{field}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(CompletionResult {
        text: text.to_string(),
        usage: TokenUsage {
            prompt_tokens: count("prompt_tokens"),
            completion_tokens: count("completion_tokens"),
        },
        latency_ms,
        source: Source::Network,
    })
}

impl Backend for HttpBackend {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.backoff(attempt, &e);
                    log::warn!("attempt {} failed ({e}); retrying in {delay:?}", attempt + 1);
                    self.clock.sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ManualClock;

    #[test]
    fn parses_choices_and_usage() {
        let r = parse_completion(
            r#"{"choices":[{"message":{"content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#,
            5,
        )
        .unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.usage, TokenUsage { prompt_tokens: 3, completion_tokens: 1 });
        assert_eq!(r.source, Source::Network);
    }

    #[test]
    fn invalid_body_is_malformed() {
        assert!(matches!(parse_completion("not json", 0), Err(BackendError::Malformed(_))));
        assert!(matches!(parse_completion(r#"{"choices":[]}"#, 0), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn rejects_bad_base_url() {
        let cfg = HttpConfig { base_url: "localhost:80".into(), ..HttpConfig::default() };
        assert!(HttpBackend::new(cfg).is_err());
    }

    #[test]
    fn backoff_is_exponential_without_jitter() {
        let cfg = HttpConfig {
            base_url: "http://127.0.0.1:1".into(),
            backoff_jitter: 0.0,
            ..HttpConfig::default()
        };
        let b = HttpBackend::with_clock(cfg, Arc::new(ManualClock::new())).unwrap();
        let delays: Vec<_> = (0..4).map(|a| b.backoff(a, &BackendError::Timeout)).collect();
        assert_eq!(
            delays,
            [1, 2, 4, 8].map(Duration::from_secs).to_vec()
        );
        let ra = BackendError::RateLimited { retry_after_ms: Some(30_000) };
        assert_eq!(b.backoff(0, &ra), Duration::from_secs(30));
    }

    #[test]
    fn token_bucket_waits_on_virtual_clock() {
        let clock = ManualClock::new();
        let mut bucket = TokenBucket { capacity: 2.0, tokens: 2.0, rate: 2.0, last: Duration::ZERO };
        for _ in 0..4 {
            bucket.take(&clock);
        }
        // two free tokens, then two waits of half a second each
        assert_eq!(clock.total_slept(), Duration::from_secs(1));
    }
}
