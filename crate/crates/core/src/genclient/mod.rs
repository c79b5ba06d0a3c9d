//! Chat-completion generation backends, response validation and batch
//! accumulation.

mod http;
mod mock;
mod parse;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, FixtureSpec, Record, Schema};
use crate::prompt::PromptSpec;
use crate::seed::mix_seed;

pub use http::HttpBackend;
pub use mock::{
    mock_generate, MockBackend, MockGenerator, DEFAULT_NOISE_FRACTION, NOISE_TRUNCATION,
    REFERENCE_TEMPERATURE,
};
pub use parse::{parse_batch, parse_columns, RANGE_SLACK};

pub const DEFAULT_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_BATCH_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("transport error (status {status:?}): {message}")]
    TransportError { status: Option<u16>, message: String },
    #[error("authentication error: {0}")]
    AuthError(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("value {value} for key {key:?} at index {index} is outside the accepted range")]
    RangeViolation { key: String, index: usize, value: f64 },
    #[error("batch {batch} failed {attempts} consecutive attempts; last error: {last_error}")]
    BackendExhausted {
        batch: usize,
        attempts: usize,
        last_error: String,
    },
    #[error("at least two example rows are required, got {0}")]
    TooFewExamples(usize),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl GenError {
    /// Rate limiting, server errors and network failures are worth a backoff.
    pub fn is_retryable_transport(&self) -> bool {
        matches!(
            self,
            GenError::TransportError { status: None, .. }
        ) || matches!(self, GenError::TransportError { status: Some(s), .. } if *s == 429 || *s >= 500)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    /// Total attempts per batch before giving up.
    pub max_retries_per_batch: usize,
    pub max_inflight: usize,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// First backoff delay after a retryable transport error; doubles per attempt.
    pub backoff_base_ms: u64,
    /// Mock jitter as a fraction of the example standard deviation.
    pub noise_fraction: f64,
    /// Fixture whose true group distributions answer group-tailored mock requests.
    pub oracle_fixture: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4-turbo".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_retries_per_batch: 5,
            max_inflight: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 30,
            backoff_base_ms: 1000,
            noise_fraction: DEFAULT_NOISE_FRACTION,
            oracle_fixture: None,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GenError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_retries_per_batch < 1 {
            return Err(GenError::InvalidConfig("max_retries_per_batch must be at least 1".into()));
        }
        if self.max_inflight < 1 {
            return Err(GenError::InvalidConfig("max_inflight must be at least 1".into()));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(GenError::InvalidConfig("noise_fraction must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-call parameters handed to a backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallContext {
    pub temperature: f64,
    pub batch_index: usize,
    pub attempt: usize,
    /// Seed for local backends; live backends ignore it.
    pub seed: u64,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// Returns the message content produced for the rendered prompt.
    fn complete(&self, rendered: &str, ctx: &CallContext) -> Result<String, GenError>;

    /// Local backends are pure and cheap; they are never called concurrently.
    fn is_local(&self) -> bool {
        false
    }
}

/// Instantiates the backend described by `cfg`.
pub fn build_backend(cfg: &BackendConfig, schema: Arc<Schema>) -> Result<Arc<dyn Backend>, GenError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Http => Arc::new(HttpBackend::new(cfg)),
        BackendKind::Mock => {
            let oracle = match &cfg.oracle_fixture {
                Some(path) => Some(Arc::new(FixtureSpec::load(path)?.sampler()?)),
                None => None,
            };
            let generator = MockGenerator {
                noise_fraction: cfg.noise_fraction,
                oracle,
            };
            Arc::new(MockBackend::new(schema, generator))
        }
    })
}

/// Sends one rendered prompt to the configured backend and returns the raw content.
pub fn request_batch(prompt: &str, cfg: &BackendConfig, schema: Arc<Schema>) -> Result<String, GenError> {
    let backend = build_backend(cfg, schema)?;
    backend.complete(
        prompt,
        &CallContext {
            temperature: cfg.temperature,
            batch_index: 0,
            attempt: 0,
            seed: 0,
        },
    )
}

/// Validated synthetic rows with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationBatch {
    pub rows: Vec<Record>,
    pub backend_id: String,
    pub temperature: f64,
    pub prompt_hash: String,
    /// Failed attempts per batch request, in batch order.
    pub retries: Vec<usize>,
    pub seed: u64,
}

/// Shared cache of generation results keyed by prompt content.
///
/// Concurrent inserts of the same key keep the last write.
#[derive(Debug, Default)]
pub struct GenerationCache {
    entries: Mutex<HashMap<String, GenerationBatch>>,
}

impl GenerationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(prompt_hash: &str, backend_id: &str, temperature: f64, target_n: usize) -> String {
        format!("{backend_id}|{temperature}|{target_n}|{prompt_hash}")
    }

    pub fn get(&self, key: &str) -> Option<GenerationBatch> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, batch: GenerationBatch) {
        self.entries.lock().expect("cache lock").insert(key, batch);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Drives a backend until a target number of validated rows is collected.
#[derive(Clone)]
pub struct Generator {
    backend: Arc<dyn Backend>,
    cfg: BackendConfig,
    schema: Arc<Schema>,
    cache: Option<Arc<GenerationCache>>,
}

impl Generator {
    pub fn new(backend: Arc<dyn Backend>, cfg: BackendConfig, schema: Arc<Schema>) -> Self {
        Self {
            backend,
            cfg,
            schema,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: Arc<GenerationCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    /// Requests `ceil(target_n / batch)` batches of `prompt.n_generate` rows,
    /// retrying malformed batches, and truncates the result to `target_n`.
    pub fn generate_to_target(
        &self,
        prompt: &PromptSpec,
        target_n: usize,
        seed: u64,
    ) -> Result<GenerationBatch, GenError> {
        self.cfg.validate()?;
        if target_n == 0 {
            return Err(GenError::InvalidConfig("target_n must be at least 1".into()));
        }
        let batch_size = prompt.n_generate;
        if batch_size == 0 {
            return Err(GenError::InvalidConfig("prompt requests zero samples".into()));
        }
        let prompt_hash = prompt.content_hash();
        let backend_id = self.backend.id();
        let cache_key = GenerationCache::key(&prompt_hash, &backend_id, self.cfg.temperature, target_n);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&cache_key)) {
            return Ok(hit);
        }

        let rendered = prompt.render();
        let rendered = rendered.as_str();
        let n_batches = target_n.div_ceil(batch_size);
        let results: Vec<Result<(Vec<Record>, usize), GenError>> =
            if self.backend.is_local() || self.cfg.max_inflight <= 1 {
                (0..n_batches)
                    .map(|b| self.run_batch(rendered, batch_size, b, seed))
                    .collect()
            } else {
                let mut out = Vec::with_capacity(n_batches);
                let indices: Vec<usize> = (0..n_batches).collect();
                for wave in indices.chunks(self.cfg.max_inflight) {
                    let wave_results: Vec<_> = std::thread::scope(|s| {
                        let handles: Vec<_> = wave
                            .iter()
                            .map(|&b| s.spawn(move || self.run_batch(rendered, batch_size, b, seed)))
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("batch worker panicked"))
                            .collect()
                    });
                    out.extend(wave_results);
                }
                out
            };

        let mut rows = Vec::with_capacity(n_batches * batch_size);
        let mut retries = Vec::with_capacity(n_batches);
        for r in results {
            let (batch_rows, failed) = r?;
            rows.extend(batch_rows);
            retries.push(failed);
        }
        rows.truncate(target_n);
        let batch = GenerationBatch {
            rows,
            backend_id,
            temperature: self.cfg.temperature,
            prompt_hash,
            retries,
            seed,
        };
        if let Some(cache) = &self.cache {
            cache.insert(cache_key, batch.clone());
        }
        Ok(batch)
    }

    fn run_batch(
        &self,
        rendered: &str,
        batch_size: usize,
        batch_index: usize,
        seed: u64,
    ) -> Result<(Vec<Record>, usize), GenError> {
        let attempts = self.cfg.max_retries_per_batch;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            let ctx = CallContext {
                temperature: self.cfg.temperature,
                batch_index,
                attempt,
                seed: mix_seed(seed, &[batch_index as u64, attempt as u64]),
            };
            let outcome = self
                .backend
                .complete(rendered, &ctx)
                .and_then(|text| parse_batch(&text, &self.schema, batch_size));
            match outcome {
                Ok(rows) => return Ok((rows, attempt)),
                Err(e @ GenError::AuthError(_)) => return Err(e),
                Err(e @ GenError::TransportError { .. }) if !e.is_retryable_transport() => {
                    return Err(e)
                }
                Err(e) => {
                    log::debug!("batch {batch_index} attempt {attempt} failed: {e}");
                    if e.is_retryable_transport() && attempt + 1 < attempts {
                        std::thread::sleep(self.backoff(attempt, ctx.seed));
                    }
                    last_error = e.to_string();
                }
            }
        }
        Err(GenError::BackendExhausted {
            batch: batch_index,
            attempts,
            last_error,
        })
    }

    /// `base * 2^attempt`, stretched by up to 25% jitter.
    fn backoff(&self, attempt: usize, seed: u64) -> Duration {
        let base = self.cfg.backoff_base_ms as f64 * 2f64.powi(attempt.min(16) as i32);
        let jitter = 1.0 + 0.25 * ChaCha8Rng::seed_from_u64(seed).random::<f64>();
        Duration::from_millis((base * jitter).min(60_000.0) as u64)
    }
}

/// One-shot convenience around [`Generator::generate_to_target`].
pub fn generate_to_target(
    prompt: &PromptSpec,
    target_n: usize,
    backend: Arc<dyn Backend>,
    cfg: &BackendConfig,
    schema: Arc<Schema>,
    seed: u64,
) -> Result<GenerationBatch, GenError> {
    Generator::new(backend, cfg.clone(), schema).generate_to_target(prompt, target_n, seed)
}
