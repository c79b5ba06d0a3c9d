//! Experiment orchestration: configuration, per-cell repetitions, grids and sweeps.

mod config;
mod report;

pub use config::{DatasetSource, ExperimentConfig, DEFAULT_SIZES, DEFAULT_TEMPERATURES};
pub use report::{
    read_csv, render_markdown, render_size_markdown, render_temperature_markdown, write_csv,
    write_report, ReportFormat, METRICS,
};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{assemble, AssembleOptions, Assembled, AugmentError, MethodId, TrainingSet};
use crate::data::{
    sample_groups, select_prompt_examples, DataError, GroupSample, Record, SampleParams, Table,
};
use crate::genclient::{build_backend, Backend, BackendKind, GenError, GenerationCache, Generator};
use crate::metrics::{evaluate_group, EvalResult, Fitted, MetricsError};
use crate::model::{fit_logistic, LogisticConfig, LogisticModel, ModelError};
use crate::prompt::{build_prompt, PromptVariant};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed results file: {0}")]
    Results(String),
}

/// Mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Standard deviation uses `n - 1`; a single value has std 0.
    pub fn from_values(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellStatus {
    Complete,
    /// Undefined metrics; nothing is imputed.
    Skipped(String),
    /// Aborted, possibly after some repetitions completed.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub reps: usize,
    pub auroc: Option<Stat>,
    pub auprc: Option<Stat>,
    pub majority_auroc: Option<Stat>,
    pub majority_auprc: Option<Stat>,
    pub status: CellStatus,
}

impl CellSummary {
    fn skipped(reason: String) -> Self {
        Self {
            reps: 0,
            auroc: None,
            auprc: None,
            majority_auroc: None,
            majority_auprc: None,
            status: CellStatus::Skipped(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub group: String,
    pub outcome: String,
    pub method: MethodId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub key: CellKey,
    pub summary: CellSummary,
}

/// Cell summaries in execution-plan order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsGrid {
    pub cells: Vec<GridCell>,
}

impl ResultsGrid {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, group: &str, outcome: &str, method: MethodId) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.key.group == group && c.key.outcome == outcome && c.key.method == method)
            .map(|c| &c.summary)
    }

    pub fn keys(&self) -> Vec<&CellKey> {
        self.cells.iter().map(|c| &c.key).collect()
    }

    /// Distinct `(group, outcome)` pairs in first-appearance order.
    pub fn rows(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for c in &self.cells {
            let row = (c.key.group.clone(), c.key.outcome.clone());
            if !out.contains(&row) {
                out.push(row);
            }
        }
        out
    }

    /// Distinct methods in canonical column order.
    pub fn methods(&self) -> Vec<MethodId> {
        MethodId::ALL
            .into_iter()
            .filter(|m| self.cells.iter().any(|c| c.key.method == *m))
            .collect()
    }

    pub fn failed(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.summary.status, CellStatus::Failed(_)))
            .count()
    }

    pub fn skipped(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.summary.status, CellStatus::Skipped(_)))
            .count()
    }

    /// True when some cell failed; skipped cells do not count.
    pub fn is_partial(&self) -> bool {
        self.failed() > 0
    }
}

/// Metrics of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub minority: EvalResult,
    pub majority: Option<EvalResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    pub reps: Vec<RepOutcome>,
    pub summary: CellSummary,
}

enum RepError {
    Skip(String),
    Fail(String),
}

impl From<MetricsError> for RepError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::SkippedCell { reason } => RepError::Skip(reason),
            other => RepError::Fail(other.to_string()),
        }
    }
}

impl From<ModelError> for RepError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SingleClass => RepError::Skip("training outcome has a single class".into()),
            other => RepError::Fail(other.to_string()),
        }
    }
}

/// A configuration bound to its loaded table and generation backend.
#[derive(Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    table: Arc<Table>,
    backend: Arc<dyn Backend>,
    cache: Option<Arc<GenerationCache>>,
}

impl Experiment {
    /// Loads the dataset and builds the configured backend.
    pub fn load(config: ExperimentConfig) -> Result<Self, RunnerError> {
        let table = Arc::new(config.dataset.load()?);
        Self::new(config, table)
    }

    pub fn new(config: ExperimentConfig, table: Arc<Table>) -> Result<Self, RunnerError> {
        config.validate(table.schema())?;
        let backend = build_backend(&config.backend_config(), table.schema_arc())?;
        Ok(Self::assemble_parts(config, table, backend))
    }

    /// Uses `backend` instead of the one described by the configuration.
    pub fn with_backend(
        config: ExperimentConfig,
        table: Arc<Table>,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, RunnerError> {
        config.validate(table.schema())?;
        Ok(Self::assemble_parts(config, table, backend))
    }

    fn assemble_parts(config: ExperimentConfig, table: Arc<Table>, backend: Arc<dyn Backend>) -> Self {
        let cache_on = config
            .cache
            .unwrap_or(config.backend.kind == BackendKind::Http);
        Self {
            config,
            table,
            backend,
            cache: cache_on.then(|| Arc::new(GenerationCache::new())),
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn table(&self) -> &Arc<Table> {
        &self.table
    }

    pub fn cache(&self) -> Option<&Arc<GenerationCache>> {
        self.cache.as_ref()
    }

    /// Same data and backend under a modified configuration; the cache is shared.
    pub fn with_config(&self, config: ExperimentConfig) -> Result<Self, RunnerError> {
        config.validate(self.table.schema())?;
        Ok(Self {
            config,
            ..self.clone()
        })
    }

    fn generator(&self) -> Generator {
        let g = Generator::new(
            self.backend.clone(),
            self.config.backend_config(),
            self.table.schema_arc(),
        );
        match &self.cache {
            Some(c) => g.with_cache(c.clone()),
            None => g,
        }
    }

    /// Cells in plan order: minority groups, then outcomes, then methods.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let c = &self.config;
        c.minorities
            .iter()
            .flat_map(|g| {
                c.outcomes.iter().flat_map(move |o| {
                    c.methods.iter().map(move |&m| CellKey {
                        group: g.clone(),
                        outcome: o.clone(),
                        method: m,
                    })
                })
            })
            .collect()
    }

    /// Seed of the group sample of repetition `rep`. Methods share it so
    /// that every method sees the same training rows within a repetition.
    pub fn sample_seed(&self, group: &str, outcome: &str, rep: usize) -> u64 {
        derive_seed(self.config.master_seed, &[group, outcome, "sample"], rep as u64)
    }

    /// Seed of the method-specific randomness of repetition `rep`.
    pub fn method_seed(&self, key: &CellKey, rep: usize) -> u64 {
        derive_seed(
            self.config.master_seed,
            &[&key.group, &key.outcome, key.method.name()],
            rep as u64,
        )
    }

    pub fn run_cell(&self, key: &CellKey) -> CellResult {
        let schema = self.table.schema();
        let finish = |reps: Vec<RepOutcome>, status: CellStatus| {
            let summary = summarize(&reps, status);
            CellResult {
                key: key.clone(),
                reps,
                summary,
            }
        };
        let (Some(gi), Some(oi)) = (schema.group_index(&key.group), schema.outcome_index(&key.outcome)) else {
            return finish(Vec::new(), CellStatus::Failed("unknown group or outcome".into()));
        };
        let group_rows = self.table.rows_in_group(gi);
        if self.table.positives(&group_rows, oi) == 0 {
            return CellResult {
                key: key.clone(),
                reps: Vec::new(),
                summary: CellSummary::skipped(format!(
                    "no positive {} cases in group {}",
                    key.outcome, key.group
                )),
            };
        }

        let generator = key.method.uses_llm().then(|| self.generator());
        let mut reps = Vec::with_capacity(self.config.reps);
        for rep in 0..self.config.reps {
            match self.run_rep(key, rep, generator.as_ref()) {
                Ok(r) => reps.push(r),
                Err(RepError::Skip(reason)) => {
                    return CellResult {
                        key: key.clone(),
                        reps: Vec::new(),
                        summary: CellSummary::skipped(format!("repetition {}: {reason}", rep + 1)),
                    };
                }
                Err(RepError::Fail(reason)) => {
                    log::warn!(
                        "cell {}/{}/{} failed at repetition {}: {reason}",
                        key.group,
                        key.outcome,
                        key.method,
                        rep + 1
                    );
                    return finish(reps, CellStatus::Failed(format!("repetition {}: {reason}", rep + 1)));
                }
            }
        }
        finish(reps, CellStatus::Complete)
    }

    fn run_rep(&self, key: &CellKey, rep: usize, generator: Option<&Generator>) -> Result<RepOutcome, RepError> {
        let c = &self.config;
        let table = &*self.table;
        let params = SampleParams::new(&c.majority, &key.group, c.n_maj, c.n_min, c.k_prompt);
        let mut sample = sample_groups(table, &params, self.sample_seed(&key.group, &key.outcome, rep))
            .map_err(|e| RepError::Fail(e.to_string()))?;
        let method_seed = self.method_seed(key, rep);

        let synthetic = match generator {
            Some(generator) => {
                let (resampled, rows) = self.synthesize(key, &sample, generator, method_seed)?;
                sample = resampled;
                Some(rows)
            }
            None => None,
        };

        let opts = AssembleOptions {
            smote_k: c.smote_k,
            smote_seed: method_seed,
        };
        let assembled = assemble(key.method, table, &sample, &key.outcome, synthetic.as_deref(), &opts)
            .map_err(|e| match e {
                AugmentError::TooFewRows { .. } => RepError::Skip(e.to_string()),
                other => RepError::Fail(other.to_string()),
            })?;
        let fitted = match assembled {
            Assembled::Pooled(set) => Fitted::Pooled(fit(&set, &c.logistic)?),
            Assembled::Separate { majority, minority } => Fitted::Separate {
                majority: fit(&majority, &c.logistic)?,
                minority: fit(&minority, &c.logistic)?,
            },
        };
        let minority = evaluate_group(&fitted, table, &sample, &key.group, &key.outcome, key.method)?;
        let majority = match evaluate_group(&fitted, table, &sample, &c.majority, &key.outcome, key.method) {
            Ok(r) => Some(r),
            Err(MetricsError::SkippedCell { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(RepOutcome { minority, majority })
    }

    /// Chooses prompt examples, generates synthetic rows and returns the
    /// sample with its holdout adjusted to exclude the examples.
    fn synthesize(
        &self,
        key: &CellKey,
        sample: &GroupSample,
        generator: &Generator,
        seed: u64,
    ) -> Result<(GroupSample, Vec<Record>), RepError> {
        let c = &self.config;
        let table = &*self.table;
        let schema = table.schema();
        let pool: Vec<usize> = match key.method {
            MethodId::GptGroup => {
                let gi = schema.group_index(&key.group).expect("validated group");
                let mut training = vec![false; table.len()];
                sample.minority_rows.iter().for_each(|&i| training[i] = true);
                table
                    .rows_in_group(gi)
                    .into_iter()
                    .filter(|&i| !training[i])
                    .collect()
            }
            _ => sample.non_training_rows(table),
        };
        let constrained: Vec<usize> = c
            .outcomes
            .iter()
            .filter_map(|o| schema.outcome_index(o))
            .filter(|&oi| table.positives(&pool, oi) > 0)
            .collect();

        let current_ok = key.method == MethodId::GptGroup
            && constrained
                .iter()
                .all(|&oi| table.positives(&sample.prompt_example_rows, oi) > 0);
        let sample = if current_ok {
            sample.clone()
        } else {
            let rows = select_prompt_examples(table, &pool, &constrained, c.k_prompt, seed, c.max_redraws)
                .map_err(|e| RepError::Fail(e.to_string()))?;
            sample.with_prompt_examples(table, rows)
        };

        let examples: Vec<Record> = sample
            .prompt_example_rows
            .iter()
            .map(|&i| table.record(i).clone())
            .collect();
        let variant = match key.method {
            MethodId::GptGroup => PromptVariant::GroupTailored(key.group.clone()),
            _ => PromptVariant::Generic,
        };
        let prompt = build_prompt(schema, &examples, &c.dataset_context, variant, c.batch_size)
            .map_err(|e| RepError::Fail(e.to_string()))?;
        let batch = generator
            .generate_to_target(&prompt, c.synthetic_target(), seed)
            .map_err(|e| RepError::Fail(e.to_string()))?;
        Ok((sample, batch.rows))
    }

    /// Runs every cell on a pool of `workers` threads; cell failures are
    /// recorded in the grid rather than aborting it.
    pub fn run_grid_detailed(&self) -> Vec<CellResult> {
        use rayon::prelude::*;
        let keys = self.cell_keys();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| keys.par_iter().map(|k| self.run_cell(k)).collect())
    }

    pub fn run_grid(&self) -> ResultsGrid {
        ResultsGrid {
            cells: self
                .run_grid_detailed()
                .into_iter()
                .map(|r| GridCell {
                    key: r.key,
                    summary: r.summary,
                })
                .collect(),
        }
    }

    /// One grid per temperature, in the given order.
    pub fn sweep_temperature(&self, temps: &[f64]) -> Result<Vec<(f64, ResultsGrid)>, RunnerError> {
        if !self.config.methods.iter().any(|m| m.uses_llm()) {
            return Err(RunnerError::Config(
                "temperature sweep needs an LLM generation method".into(),
            ));
        }
        temps
            .iter()
            .map(|&t| {
                let mut cfg = self.config.clone();
                cfg.temperature = t;
                Ok((t, self.with_config(cfg)?.run_grid()))
            })
            .collect()
    }

    /// One grid per minority training size, in the given order.
    pub fn sweep_minority_size(&self, sizes: &[usize]) -> Result<Vec<(usize, ResultsGrid)>, RunnerError> {
        let schema = self.table.schema();
        for &size in sizes {
            let required = size + self.config.k_prompt;
            for g in &self.config.minorities {
                let available = self.table.group_count(schema.require_group(g)?);
                if available < required {
                    return Err(DataError::InsufficientGroup {
                        group: g.clone(),
                        available,
                        required,
                    }
                    .into());
                }
            }
        }
        sizes
            .iter()
            .map(|&size| {
                let mut cfg = self.config.clone();
                cfg.n_min = size;
                Ok((size, self.with_config(cfg)?.run_grid()))
            })
            .collect()
    }
}

fn fit(set: &TrainingSet, cfg: &LogisticConfig) -> Result<LogisticModel, ModelError> {
    fit_logistic(set.x.view(), set.y.view(), set.nontrivial_weights(), cfg)
}

fn summarize(reps: &[RepOutcome], status: CellStatus) -> CellSummary {
    let collect = |f: &dyn Fn(&RepOutcome) -> Option<f64>| -> Option<Stat> {
        let v: Option<Vec<f64>> = reps.iter().map(f).collect();
        v.and_then(|v| Stat::from_values(&v))
    };
    CellSummary {
        reps: reps.len(),
        auroc: collect(&|r| Some(r.minority.auroc)),
        auprc: collect(&|r| Some(r.minority.auprc)),
        majority_auroc: collect(&|r| r.majority.as_ref().map(|m| m.auroc)),
        majority_auprc: collect(&|r| r.majority.as_ref().map(|m| m.auprc)),
        status,
    }
}
