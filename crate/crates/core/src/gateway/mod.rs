//! Backend-agnostic chat completion with caching, retries and usage accounting.
//!
//! A [`Gateway`] wraps one [`Backend`] (the live HTTP endpoint or the offline
//! [`ScriptedBackend`]) and owns the response cache. Identical requests share
//! one backend call per process: concurrent callers for the same key wait on
//! the first one instead of issuing their own.

mod cache;
mod live;
mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::StageId;

pub use cache::ResponseCache;
pub use live::{LiveBackend, ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
pub use scripted::{ScriptEntry, ScriptedBackend};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_TOP_P: f64 = 1.0;
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
/// Mixed into every cache key so edited prompts never hit stale entries.
pub const PIPELINE_VERSION: &str = "marg-prompts-v1";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no backend configured")]
    BackendUnconfigured,
    #[error("no scripted response for stage {stage} and key `{key}`")]
    ScriptMiss { stage: StageId, key: String },
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport { retryable: true, .. })
    }
}

/// One prompt sent to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub stage: StageId,
    /// Logical input identifier (patent id or pair id); used by the scripted backend.
    pub key: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub model: String,
}

impl ChatRequest {
    pub fn new(stage: StageId, key: impl Into<String>, prompt: impl Into<String>) -> Self {
        ChatRequest {
            stage,
            key: key.into(),
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            model: DEFAULT_MODEL.to_string(),
        }
    }

    pub fn with_sampling(mut self, temperature: f64, top_p: f64) -> Self {
        self.temperature = temperature;
        self.top_p = top_p;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    /// Content digest over everything that determines the response.
    pub fn digest(&self, version: &str) -> String {
        let mut hasher = Sha256::new();
        for part in [
            version,
            self.stage.as_str(),
            &self.model,
            &format!("{:?}", self.temperature),
            &format!("{:?}", self.top_p),
            &self.prompt,
        ] {
            hasher.update(part.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }
}

/// Token and call accounting for one or more requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageRecord {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub calls: u64,
    #[serde(rename = "wall_time_ms", with = "millis")]
    pub wall_time: Duration,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl UsageRecord {
    pub fn single(input_tokens: u64, output_tokens: u64, wall_time: Duration) -> Self {
        UsageRecord {
            input_tokens,
            output_tokens,
            calls: 1,
            wall_time,
        }
    }
}

/// Sums two records whose spans ran one after the other.
pub fn merge_usage(a: UsageRecord, b: UsageRecord) -> UsageRecord {
    UsageRecord {
        input_tokens: a.input_tokens + b.input_tokens,
        output_tokens: a.output_tokens + b.output_tokens,
        calls: a.calls + b.calls,
        wall_time: a.wall_time + b.wall_time,
    }
}

/// Sums two records whose spans overlapped; wall time is the longer span.
pub fn merge_usage_concurrent(a: UsageRecord, b: UsageRecord) -> UsageRecord {
    UsageRecord {
        wall_time: a.wall_time.max(b.wall_time),
        ..merge_usage(a, b)
    }
}

/// Prices in currency units per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub input_price_per_1m: f64,
    pub output_price_per_1m: f64,
}

impl PriceTable {
    pub fn new(input_price_per_1m: f64, output_price_per_1m: f64) -> Result<Self, GatewayError> {
        if !(input_price_per_1m >= 0.0 && output_price_per_1m >= 0.0) {
            return Err(GatewayError::InvalidRequest("prices must be non-negative".into()));
        }
        Ok(PriceTable {
            input_price_per_1m,
            output_price_per_1m,
        })
    }
}

impl Default for PriceTable {
    fn default() -> Self {
        PriceTable {
            input_price_per_1m: 0.15,
            output_price_per_1m: 0.60,
        }
    }
}

pub fn estimate_cost(usage: &UsageRecord, prices: &PriceTable) -> f64 {
    usage.input_tokens as f64 * prices.input_price_per_1m / 1e6
        + usage.output_tokens as f64 * prices.output_price_per_1m / 1e6
}

/// What a backend returns for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub elapsed: Duration,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<BackendReply, GatewayError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    /// Zero tokens and zero calls when served from cache.
    pub usage: UsageRecord,
    pub cached: bool,
}

/// Bounded retries with exponential backoff on retryable transport errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub struct Gateway {
    backend: Option<Arc<dyn Backend>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    version: String,
    backend_calls: AtomicU64,
}

impl Gateway {
    /// Gateway with an in-memory cache and the default retry policy.
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway {
            backend: Some(backend),
            cache: Some(ResponseCache::in_memory()),
            retry: RetryPolicy::default(),
            version: PIPELINE_VERSION.to_string(),
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn unconfigured() -> Self {
        Gateway {
            backend: None,
            cache: None,
            retry: RetryPolicy::default(),
            version: PIPELINE_VERSION.to_string(),
            backend_calls: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Option<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_version(mut self, version: impl Into<String>) -> Self {
        self.version = version.into();
        self
    }

    /// Number of calls that reached the backend, retries included.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let backend = self.backend.as_ref().ok_or(GatewayError::BackendUnconfigured)?;
        if !(request.temperature >= 0.0) || !(request.top_p > 0.0 && request.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} / top_p {} out of range",
                request.temperature, request.top_p
            )));
        }
        let Some(cache) = &self.cache else {
            return self.call_with_retry(backend.as_ref(), request);
        };
        let digest = request.digest(&self.version);
        let slot = cache.slot(&digest);
        let mut guard = slot.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        if let Some(text) = guard.as_ref() {
            return Ok(cached_response(text.clone()));
        }
        if let Some(text) = cache.load_file(&digest, request)? {
            *guard = Some(text.clone());
            return Ok(cached_response(text));
        }
        let response = self.call_with_retry(backend.as_ref(), request)?;
        cache.store_file(&digest, request, &response)?;
        *guard = Some(response.text.clone());
        Ok(response)
    }

    fn call_with_retry(&self, backend: &dyn Backend, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut retry = 0;
        loop {
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match backend.complete(request) {
                Ok(reply) => {
                    return Ok(ChatResponse {
                        text: reply.text,
                        usage: UsageRecord::single(reply.input_tokens, reply.output_tokens, reply.elapsed),
                        cached: false,
                    })
                }
                Err(err) if err.is_retryable() && retry < self.retry.max_retries => {
                    log::warn!("{} call failed ({err}); retrying", request.stage);
                    thread::sleep(self.retry.delay_for(retry));
                    retry += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

fn cached_response(text: String) -> ChatResponse {
    ChatResponse {
        text,
        usage: UsageRecord::default(),
        cached: true,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;

    /// Fails with a retryable error `failures` times, then answers.
    struct Flaky {
        failures: Mutex<u32>,
        retryable: bool,
    }

    impl Backend for Flaky {
        fn complete(&self, request: &ChatRequest) -> Result<BackendReply, GatewayError> {
            let mut left = self.failures.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(GatewayError::Transport {
                    message: "503".into(),
                    retryable: self.retryable,
                });
            }
            Ok(BackendReply {
                text: format!("echo {}", request.key),
                input_tokens: 3,
                output_tokens: 1,
                elapsed: Duration::ZERO,
            })
        }
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy {
            max_retries: 2,
            base_delay: Duration::ZERO,
        }
    }

    fn flaky(failures: u32, retryable: bool) -> Gateway {
        Gateway::new(Arc::new(Flaky {
            failures: Mutex::new(failures),
            retryable,
        }))
        .with_retry(no_wait())
    }

    #[test]
    fn request_defaults() {
        let r = ChatRequest::new(StageId::SimTechnical, "p", "x");
        assert_eq!(r.temperature, 0.2);
        assert_eq!(r.top_p, 1.0);
    }

    #[test]
    fn retries_up_to_two_times() {
        let gw = flaky(2, true);
        let out = gw.complete(&ChatRequest::new(StageId::SimTechnical, "k", "p")).unwrap();
        assert_eq!(out.text, "echo k");
        assert_eq!(gw.backend_calls(), 3);

        let gw = flaky(3, true);
        assert!(matches!(
            gw.complete(&ChatRequest::new(StageId::SimTechnical, "k", "p")),
            Err(GatewayError::Transport { .. })
        ));
        assert_eq!(gw.backend_calls(), 3);
    }

    #[test]
    fn non_retryable_errors_fail_fast() {
        let gw = flaky(1, false);
        assert!(gw.complete(&ChatRequest::new(StageId::SimTechnical, "k", "p")).is_err());
        assert_eq!(gw.backend_calls(), 1);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_for(0), Duration::from_millis(500));
        assert_eq!(p.delay_for(1), Duration::from_millis(1000));
    }

    #[test]
    fn unconfigured_backend() {
        assert!(matches!(
            Gateway::unconfigured().complete(&ChatRequest::new(StageId::SimTechnical, "k", "p")),
            Err(GatewayError::BackendUnconfigured)
        ));
    }

    #[test]
    fn rejects_negative_temperature() {
        let gw = flaky(0, true);
        let req = ChatRequest::new(StageId::SimTechnical, "k", "p").with_sampling(-0.1, 1.0);
        assert!(matches!(gw.complete(&req), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn digest_covers_sampling_and_version() {
        let r = ChatRequest::new(StageId::SimTechnical, "k", "p");
        assert_eq!(r.digest("v1"), r.clone().digest("v1"));
        assert_ne!(r.digest("v1"), r.digest("v2"));
        assert_ne!(r.digest("v1"), r.clone().with_sampling(0.3, 1.0).digest("v1"));
        assert_ne!(r.digest("v1"), r.clone().with_model("other").digest("v1"));
        // The scripted key does not change the response identity.
        let mut k = r.clone();
        k.key = "other".into();
        assert_eq!(r.digest("v1"), k.digest("v1"));
    }

    #[test]
    fn cost_examples() {
        let prices = PriceTable::new(0.15, 0.60).unwrap();
        assert_eq!(estimate_cost(&UsageRecord::default(), &prices), 0.0);
        let pair = UsageRecord { input_tokens: 13_225, output_tokens: 832, calls: 8, wall_time: Duration::ZERO };
        assert!((estimate_cost(&pair, &prices) - 0.0024829).abs() < 1e-7);
        let million = UsageRecord { input_tokens: 1_000_000, ..Default::default() };
        assert!((estimate_cost(&million, &prices) - 0.15).abs() < 1e-15);
        assert!(PriceTable::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn merge_examples() {
        let u = |i, o, c| UsageRecord { input_tokens: i, output_tokens: o, calls: c, wall_time: Duration::ZERO };
        assert_eq!(merge_usage(u(10, 2, 1), u(0, 0, 0)), u(10, 2, 1));
        assert_eq!(merge_usage(u(5, 1, 1), u(7, 3, 2)), u(12, 4, 3));
        let a = UsageRecord { wall_time: Duration::from_millis(30), ..u(1, 1, 1) };
        let b = UsageRecord { wall_time: Duration::from_millis(50), ..u(1, 1, 1) };
        assert_eq!(merge_usage(a, b).wall_time, Duration::from_millis(80));
        assert_eq!(merge_usage_concurrent(a, b).wall_time, Duration::from_millis(50));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn usage() -> impl Strategy<Value = UsageRecord> {
            (0u64..1 << 40, 0u64..1 << 40, 0u64..1000, 0u64..1 << 30).prop_map(|(i, o, c, ms)| UsageRecord {
                input_tokens: i,
                output_tokens: o,
                calls: c,
                wall_time: Duration::from_millis(ms),
            })
        }

        proptest! {
            #[test]
            fn merge_is_associative(a in usage(), b in usage(), c in usage()) {
                let left = merge_usage(merge_usage(a, b), c);
                prop_assert_eq!(left, merge_usage(a, merge_usage(b, c)));
                prop_assert_eq!(left.input_tokens, a.input_tokens + b.input_tokens + c.input_tokens);
                prop_assert_eq!(left.calls, a.calls + b.calls + c.calls);
                let cl = merge_usage_concurrent(merge_usage_concurrent(a, b), c);
                prop_assert_eq!(cl, merge_usage_concurrent(a, merge_usage_concurrent(b, c)));
            }

            #[test]
            fn cost_is_linear(i in 0u64..1 << 30, o in 0u64..1 << 30, k in 1u64..8) {
                let prices = PriceTable::default();
                let one = estimate_cost(&UsageRecord { input_tokens: i, output_tokens: o, ..Default::default() }, &prices);
                let many = estimate_cost(&UsageRecord { input_tokens: i * k, output_tokens: o * k, ..Default::default() }, &prices);
                prop_assert!((many - one * k as f64).abs() <= 1e-9 * many.abs().max(1.0));
            }
        }
    }
}
