//! Offline generation backend.
//!
//! The mock reads the rendered prompt the same way a language model would:
//! it pulls the example JSON, the requested sample count and the optional
//! group clause out of the text and answers with a dict-of-lists JSON object.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{parse_columns, Backend, CallContext, GenError};
use crate::data::{FeatureKind, FixtureSampler, Record, Schema};
use crate::prompt::serialize_examples;

/// Temperature at which the jitter equals `noise_fraction` of the example sd.
pub const REFERENCE_TEMPERATURE: f64 = 0.9;
pub const DEFAULT_NOISE_FRACTION: f64 = 0.1;
/// Jitter draws are truncated to this many noise scales.
pub const NOISE_TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct MockGenerator {
    pub noise_fraction: f64,
    /// When set, group-tailored requests are answered from this group-conditional
    /// model instead of the examples.
    pub oracle: Option<Arc<FixtureSampler>>,
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self {
            noise_fraction: DEFAULT_NOISE_FRACTION,
            oracle: None,
        }
    }
}

impl MockGenerator {
    pub fn with_oracle(oracle: Arc<FixtureSampler>) -> Self {
        Self {
            oracle: Some(oracle),
            ..Self::default()
        }
    }

    /// Jitter scale per feature: `noise_fraction * sd * temperature / 0.9` for
    /// numeric features, zero otherwise.
    pub fn noise_scales(&self, examples: &[Record], schema: &Schema, temperature: f64) -> Vec<f64> {
        let factor = self.noise_fraction * temperature / REFERENCE_TEMPERATURE;
        schema
            .features
            .iter()
            .enumerate()
            .map(|(fi, f)| match f.kind {
                FeatureKind::Numeric => factor * sample_sd(examples.iter().map(|r| r.features[fi])),
                _ => 0.0,
            })
            .collect()
    }

    pub fn generate(
        &self,
        examples: &[Record],
        schema: &Schema,
        group_label: Option<&str>,
        n: usize,
        temperature: f64,
        seed: u64,
    ) -> Result<Vec<Record>, GenError> {
        if examples.len() < 2 {
            return Err(GenError::TooFewExamples(examples.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let (Some(oracle), Some(label)) = (&self.oracle, group_label) {
            if let Some(rows) = oracle.sample_group(label, n, &mut rng) {
                return Ok(rows);
            }
        }

        let scales = self.noise_scales(examples, schema, temperature);
        let m = examples.len();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let src = &examples[rng.random_range(0..m)];
            let mut features = Vec::with_capacity(schema.features.len());
            for (fi, f) in schema.features.iter().enumerate() {
                let v = match f.kind {
                    FeatureKind::Numeric => {
                        let z = truncated_normal(&mut rng, NOISE_TRUNCATION);
                        let v = src.features[fi] + scales[fi] * z;
                        match f.bounds {
                            Some([lo, hi]) => v.clamp(lo, hi),
                            None => v,
                        }
                    }
                    FeatureKind::Binary | FeatureKind::Categorical => {
                        examples[rng.random_range(0..m)].features[fi]
                    }
                };
                features.push(v);
            }
            out.push(Record {
                features,
                outcomes: src.outcomes.clone(),
            });
        }
        Ok(out)
    }
}

/// Bootstrap-plus-jitter generation at the reference temperature.
pub fn mock_generate(
    examples: &[Record],
    schema: &Schema,
    group_label: Option<&str>,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<Record>, GenError> {
    MockGenerator::default().generate(examples, schema, group_label, n, REFERENCE_TEMPERATURE, rng_seed)
}

fn truncated_normal<R: Rng>(rng: &mut R, limit: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= limit {
            return z;
        }
    }
}

fn sample_sd(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// In-process backend answering from [`MockGenerator`].
#[derive(Debug, Clone)]
pub struct MockBackend {
    schema: Arc<Schema>,
    generator: MockGenerator,
}

impl MockBackend {
    pub fn new(schema: Arc<Schema>, generator: MockGenerator) -> Self {
        Self { schema, generator }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        if self.generator.oracle.is_some() {
            "mock-oracle".into()
        } else {
            "mock".into()
        }
    }

    fn is_local(&self) -> bool {
        true
    }

    fn complete(&self, rendered: &str, ctx: &CallContext) -> Result<String, GenError> {
        let examples_text = rendered
            .split("\n\n")
            .find(|s| s.trim_start().starts_with('{'))
            .ok_or_else(|| GenError::MalformedResponse("prompt has no examples section".into()))?;
        let examples = parse_columns(examples_text, &self.schema, None, false)?;
        let n = requested_count(rendered).unwrap_or(examples.len());
        let label = requested_group(rendered);
        let rows = self.generator.generate(
            &examples,
            &self.schema,
            label,
            n,
            ctx.temperature,
            ctx.seed,
        )?;
        serialize_examples(&rows, &self.schema).map_err(|e| GenError::MalformedResponse(e.to_string()))
    }
}

fn requested_count(text: &str) -> Option<usize> {
    let rest = &text[text.find("to generate ")? + "to generate ".len()..];
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

fn requested_group(text: &str) -> Option<&str> {
    const OPEN: &str = "specifically for ";
    let start = text.find(OPEN)? + OPEN.len();
    let len = text[start..].find(" patients")?;
    Some(&text[start..start + len])
}
