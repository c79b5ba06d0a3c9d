use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::augment::{MethodId, DEFAULT_K};
use crate::data::{load_table, presets, FixtureSpec, Schema, Table, DEFAULT_MAX_REDRAWS};
use crate::genclient::{BackendConfig, DEFAULT_BATCH_SIZE, DEFAULT_TEMPERATURE};
use crate::model::LogisticConfig;
use crate::prompt::HEART_CONTEXT;

pub const DEFAULT_TEMPERATURES: [f64; 3] = [0.5, 0.9, 1.2];
pub const DEFAULT_SIZES: [usize; 3] = [50, 100, 200];

/// Where the experiment's table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSource {
    Csv {
        data: PathBuf,
        schema: PathBuf,
    },
    /// Generated from a fixture spec file.
    Fixture {
        spec: PathBuf,
        #[serde(default)]
        seed: u64,
    },
    /// Generated from a built-in spec: `framingham-like` or `mimic-like`.
    Preset {
        name: String,
        /// Divisor applied to the `mimic-like` group sizes.
        #[serde(default = "one")]
        scale: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> usize {
    1
}

impl DatasetSource {
    pub fn fixture_spec(&self) -> Result<Option<FixtureSpec>, RunnerError> {
        Ok(match self {
            DatasetSource::Csv { .. } => None,
            DatasetSource::Fixture { spec, .. } => Some(FixtureSpec::load(spec)?),
            DatasetSource::Preset { name, scale, .. } => Some(preset(name, *scale)?),
        })
    }

    pub fn load(&self) -> Result<Table, RunnerError> {
        match self {
            DatasetSource::Csv { data, schema } => {
                let schema = Arc::new(Schema::load(schema)?);
                Ok(load_table(data, schema)?)
            }
            DatasetSource::Fixture { seed, .. } | DatasetSource::Preset { seed, .. } => {
                let spec = self.fixture_spec()?.expect("fixture-backed source");
                Ok(spec.make_fixture(*seed)?)
            }
        }
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSource::Csv { data, schema } => {
                fix(data);
                fix(schema);
            }
            DatasetSource::Fixture { spec, .. } => fix(spec),
            DatasetSource::Preset { .. } => {}
        }
    }
}

pub fn preset(name: &str, scale: usize) -> Result<FixtureSpec, RunnerError> {
    match name {
        "framingham-like" => Ok(presets::framingham_like()),
        "mimic-like" => Ok(presets::mimic_like(scale.max(1))),
        other => Err(RunnerError::Config(format!("unknown preset {other:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Label of the dataset in reports.
    #[serde(default = "default_dataset_name")]
    pub dataset_name: String,
    /// Domain phrase inserted into the prompt context.
    #[serde(default = "default_context")]
    pub dataset_context: String,
    pub majority: String,
    pub minorities: Vec<String>,
    pub outcomes: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodId>,
    #[serde(default = "default_n_maj")]
    pub n_maj: usize,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_k_prompt")]
    pub k_prompt: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Synthetic rows per LLM-augmented training set; `n_maj - n_min` when absent.
    #[serde(default)]
    pub synthetic_n: Option<usize>,
    /// Rows requested per prompt.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Overrides `backend.temperature`.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
    /// Generation cache; on for live backends and off for the mock when absent.
    #[serde(default)]
    pub cache: Option<bool>,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    #[serde(default)]
    pub logistic: LogisticConfig,
    #[serde(default = "default_max_redraws")]
    pub max_redraws: usize,
}

fn default_dataset_name() -> String {
    "dataset".into()
}
fn default_context() -> String {
    HEART_CONTEXT.into()
}
fn default_methods() -> Vec<MethodId> {
    MethodId::ALL.to_vec()
}
fn default_n_maj() -> usize {
    1000
}
fn default_n_min() -> usize {
    100
}
fn default_k_prompt() -> usize {
    20
}
fn default_reps() -> usize {
    25
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_smote_k() -> usize {
    DEFAULT_K
}
fn default_max_redraws() -> usize {
    DEFAULT_MAX_REDRAWS
}

impl ExperimentConfig {
    /// A configuration with every default filled in.
    pub fn new(
        dataset: DatasetSource,
        majority: &str,
        minorities: &[&str],
        outcomes: &[&str],
    ) -> Self {
        Self {
            dataset,
            dataset_name: default_dataset_name(),
            dataset_context: default_context(),
            majority: majority.into(),
            minorities: minorities.iter().map(|s| s.to_string()).collect(),
            outcomes: outcomes.iter().map(|s| s.to_string()).collect(),
            methods: default_methods(),
            n_maj: default_n_maj(),
            n_min: default_n_min(),
            k_prompt: default_k_prompt(),
            reps: default_reps(),
            synthetic_n: None,
            batch_size: default_batch_size(),
            backend: BackendConfig::default(),
            temperature: default_temperature(),
            master_seed: 0,
            output_dir: default_output_dir(),
            workers: 1,
            cache: None,
            smote_k: default_smote_k(),
            logistic: LogisticConfig::default(),
            max_redraws: default_max_redraws(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RunnerError> {
        serde_json::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))
    }

    /// Reads a config file; dataset paths are relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.dataset.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn synthetic_target(&self) -> usize {
        self.synthetic_n
            .unwrap_or(self.n_maj.saturating_sub(self.n_min))
    }

    /// Backend settings with the experiment temperature applied.
    pub fn backend_config(&self) -> BackendConfig {
        BackendConfig {
            temperature: self.temperature,
            ..self.backend.clone()
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), RunnerError> {
        let err = |m: String| Err(RunnerError::Config(m));
        if self.reps < 1 {
            return err("reps must be at least 1".into());
        }
        if self.methods.is_empty() {
            return err("methods must not be empty".into());
        }
        if self.minorities.is_empty() || self.outcomes.is_empty() {
            return err("minorities and outcomes must not be empty".into());
        }
        if self.n_maj == 0 || self.n_min == 0 {
            return err("n_maj and n_min must be positive".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be positive".into());
        }
        if self.methods.iter().any(|m| m.uses_llm()) {
            if self.k_prompt < 2 {
                return err("k_prompt must be at least 2 for LLM methods".into());
            }
            if self.synthetic_target() == 0 {
                return err("synthetic target is zero".into());
            }
        }
        for g in std::iter::once(&self.majority).chain(&self.minorities) {
            if schema.group_index(g).is_none() {
                return err(format!("unknown group label {g:?}"));
            }
        }
        if self.minorities.contains(&self.majority) {
            return err("the majority group cannot also be a minority".into());
        }
        for o in &self.outcomes {
            if schema.outcome_index(o).is_none() {
                return err(format!("unknown outcome {o:?}"));
            }
        }
        self.backend_config()
            .validate()
            .map_err(|e| RunnerError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_json() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset": {"kind": "preset", "name": "framingham-like"},
                "majority": "White", "minorities": ["Black"], "outcomes": ["CVD"]}"#,
        )
        .unwrap();
        assert_eq!((cfg.n_maj, cfg.n_min, cfg.k_prompt, cfg.reps), (1000, 100, 20, 25));
        assert_eq!(cfg.temperature, 0.9);
        assert_eq!(cfg.methods.len(), 6);
        assert_eq!(cfg.synthetic_target(), 900);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let schema = presets::framingham_like().schema;
        let mut cfg = ExperimentConfig::new(
            DatasetSource::Preset { name: "framingham-like".into(), scale: 1, seed: 0 },
            "White",
            &["Black"],
            &["CVD"],
        );
        assert!(cfg.validate(&schema).is_ok());
        cfg.reps = 0;
        assert!(cfg.validate(&schema).is_err());
        cfg.reps = 1;
        cfg.outcomes.push("Nope".into());
        assert!(cfg.validate(&schema).is_err());
    }
}
