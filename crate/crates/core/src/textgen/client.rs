//! Completion and fill-mask clients over a JSON request/response service.
//!
//! A [`JsonService`] maps a request body to a verbatim response body. The
//! HTTP implementation talks to a live endpoint, [`CachedService`] stores
//! every response under a digest of its request, and [`StubService`] replays
//! a transcript file for offline runs.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GenError, Result};

/// A request/response endpoint speaking JSON text.
pub trait JsonService: Send + Sync {
    fn call(&self, body: &str) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionClientConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}

/// Exponential backoff: `base_delay * 2^attempt`, `max_retries` retries.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn run<T>(&self, mut op: impl FnMut() -> std::result::Result<T, Attempt>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(e)) if attempt >= self.max_retries => return Err(e),
                Err(Attempt::Retryable(e)) => {
                    log::warn!("request failed (attempt {}): {e}; retrying", attempt + 1);
                    std::thread::sleep(self.base_delay * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// Outcome of one failed try.
pub enum Attempt {
    Retryable(GenError),
    Fatal(GenError),
}

/// POSTs JSON to a live endpoint with a bearer token.
pub struct HttpService {
    agent: ureq::Agent,
    endpoint: String,
    auth_env: String,
    retry: RetryPolicy,
}

impl HttpService {
    pub fn new(cfg: &CompletionClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build();
        Self {
            agent,
            endpoint: cfg.endpoint.clone(),
            auth_env: cfg.auth_env.clone(),
            retry: RetryPolicy {
                max_retries: cfg.max_retries,
                base_delay: Duration::from_millis(250),
            },
        }
    }
}

impl JsonService for HttpService {
    fn call(&self, body: &str) -> Result<String> {
        let token = std::env::var(&self.auth_env).map_err(|_| GenError::Auth(self.auth_env.clone()))?;
        self.retry.run(|| {
            let resp = self
                .agent
                .post(&self.endpoint)
                .set("Authorization", &format!("Bearer {token}"))
                .set("Content-Type", "application/json")
                .send_string(body);
            match resp {
                Ok(r) => r
                    .into_string()
                    .map_err(|e| Attempt::Retryable(GenError::Network(e.to_string()))),
                Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                    Err(Attempt::Retryable(GenError::Network(format!("HTTP {code}"))))
                }
                Err(ureq::Error::Status(code, _)) => Err(Attempt::Fatal(GenError::Network(format!("HTTP {code}")))),
                Err(e) => Err(Attempt::Retryable(GenError::Network(e.to_string()))),
            }
        })
    }
}

/// Hex SHA-256 of a request body; the cache key.
pub fn request_digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

/// On-disk response cache in front of another service.
pub struct CachedService {
    inner: Arc<dyn JsonService>,
    dir: PathBuf,
    write_lock: Mutex<()>,
    network_calls: AtomicUsize,
}

impl CachedService {
    pub fn new(inner: Arc<dyn JsonService>, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GenError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            inner,
            dir,
            write_lock: Mutex::new(()),
            network_calls: AtomicUsize::new(0),
        })
    }

    /// Requests forwarded to the inner service so far.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    fn entry(&self, body: &str) -> PathBuf {
        self.dir.join(format!("{}.json", request_digest(body)))
    }
}

impl JsonService for CachedService {
    fn call(&self, body: &str) -> Result<String> {
        let path = self.entry(body);
        if let Ok(hit) = fs::read_to_string(&path) {
            return Ok(hit);
        }
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.call(body)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(response.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| GenError::Cache(format!("{}: {e}", path.display())))?;
        Ok(response)
    }
}

#[derive(Debug, Deserialize)]
struct TranscriptLine {
    input: String,
    response: serde_json::Value,
}

/// Replays canned responses keyed by the request's input caption.
///
/// Transcript lines are `{"input": ..., "response": {...}}`. Completion
/// requests are keyed by the text after the prompt's last `Input:`; fill-mask
/// requests by their masked text.
pub struct StubService {
    table: HashMap<String, String>,
}

impl StubService {
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut table = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptLine = serde_json::from_str(line)
                .map_err(|e| GenError::Protocol(format!("transcript line {}: {e}", n + 1)))?;
            table.insert(rec.input.trim().to_string(), rec.response.to_string());
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GenError::Protocol(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    fn key(body: &str) -> Result<String> {
        let v: serde_json::Value =
            serde_json::from_str(body).map_err(|e| GenError::Protocol(format!("bad request body: {e}")))?;
        if let Some(prompt) = v.get("prompt").and_then(|p| p.as_str()) {
            let input = prompt
                .lines()
                .rev()
                .find_map(|l| l.strip_prefix("Input:"))
                .ok_or_else(|| GenError::Protocol("prompt has no Input: line".into()))?;
            return Ok(input.trim().to_string());
        }
        v.get("text_with_masks")
            .and_then(|t| t.as_str())
            .map(|t| t.trim().to_string())
            .ok_or_else(|| GenError::Protocol("unrecognized request body".into()))
    }
}

impl JsonService for StubService {
    fn call(&self, body: &str) -> Result<String> {
        let key = Self::key(body)?;
        self.table
            .get(&key)
            .cloned()
            .ok_or_else(|| GenError::Protocol(format!("no transcript entry for {key:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub beam_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskRequest {
    pub text_with_masks: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillMaskResponse {
    /// One ranked list per mask, in mask order.
    pub fills: Vec<Vec<String>>,
}

fn round_trip<Req: Serialize, Resp: for<'de> Deserialize<'de>>(service: &dyn JsonService, req: &Req) -> Result<Resp> {
    let body = serde_json::to_string(req).map_err(|e| GenError::Protocol(e.to_string()))?;
    let raw = service.call(&body)?;
    serde_json::from_str(&raw).map_err(|e| GenError::Protocol(format!("bad response: {e}")))
}

/// Typed completion client.
#[derive(Clone)]
pub struct CompletionClient {
    service: Arc<dyn JsonService>,
}

impl CompletionClient {
    pub fn new(service: Arc<dyn JsonService>) -> Self {
        Self { service }
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse> {
        round_trip(self.service.as_ref(), req)
    }
}

/// Typed fill-mask client.
#[derive(Clone)]
pub struct FillMaskClient {
    service: Arc<dyn JsonService>,
}

impl FillMaskClient {
    pub fn new(service: Arc<dyn JsonService>) -> Self {
        Self { service }
    }

    pub fn fill(&self, req: &FillMaskRequest) -> Result<FillMaskResponse> {
        round_trip(self.service.as_ref(), req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Counting {
        calls: AtomicUsize,
    }

    impl JsonService for Counting {
        fn call(&self, _body: &str) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(r#"{"candidates":["1) a"]}"#.to_string())
        }
    }

    #[test]
    fn retry_policy_backs_off_then_fails() {
        let policy = RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
        };
        let mut tries = 0;
        let r: Result<()> = policy.run(|| {
            tries += 1;
            Err(Attempt::Retryable(GenError::Network("down".into())))
        });
        assert!(r.is_err());
        assert_eq!(tries, 3);
        let mut tries = 0;
        let r = policy.run(|| {
            tries += 1;
            if tries < 2 {
                Err(Attempt::Retryable(GenError::Network("blip".into())))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r.unwrap(), 7);
        let mut tries = 0;
        let r: Result<()> = policy.run(|| {
            tries += 1;
            Err(Attempt::Fatal(GenError::Network("HTTP 401".into())))
        });
        assert!(r.is_err());
        assert_eq!(tries, 1);
    }

    #[test]
    fn cache_hits_skip_inner_service() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(Counting {
            calls: AtomicUsize::new(0),
        });
        let cached = CachedService::new(inner.clone(), dir.path()).unwrap();
        let a = cached.call("{\"prompt\":\"x\"}").unwrap();
        let b = cached.call("{\"prompt\":\"x\"}").unwrap();
        assert_eq!(a, b);
        assert_eq!(cached.network_calls(), 1);
        assert_eq!(inner.calls.load(Ordering::SeqCst), 1);
        let file = dir.path().join(format!("{}.json", request_digest("{\"prompt\":\"x\"}")));
        assert_eq!(fs::read_to_string(file).unwrap(), a);
    }

    #[test]
    fn stub_keys_on_last_input_line() {
        let stub = StubService::from_jsonl(
            "{\"input\": \"a man walks\", \"response\": {\"candidates\": [\"1) a man runs\"]}}\n\
             {\"input\": \"a man [MASK]\", \"response\": {\"fills\": [[\"runs\"]]}}\n",
        )
        .unwrap();
        let client = CompletionClient::new(Arc::new(stub));
        let req = CompletionRequest {
            prompt: "Instr\nInput: other\nOutputs:\n1) x\nInput: a man walks\nOutputs:".into(),
            max_tokens: 10,
            temperature: 0.0,
            beam_size: 1,
        };
        assert_eq!(client.complete(&req).unwrap().candidates, ["1) a man runs"]);
        let missing = CompletionRequest {
            prompt: "Input: nobody\nOutputs:".into(),
            ..req
        };
        assert!(client.complete(&missing).is_err());
    }
}
