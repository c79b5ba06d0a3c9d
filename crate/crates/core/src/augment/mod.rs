//! Small-group remedies: pooled baselines, group upweighting, per-group
//! models, SMOTE and LLM-augmented training sets.

mod smote;

pub use smote::{smote_upsample, SmoteColumn, SmoteOutput, DEFAULT_K};

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ColumnKind, DataError, Encoder, GroupSample, Record, Table};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("method {0} requires synthetic rows")]
    MissingSynthetic(MethodId),
    #[error("method {0} does not take synthetic rows")]
    UnexpectedSynthetic(MethodId),
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("target {target} is below the {rows} existing rows")]
    TargetBelowRows { target: usize, rows: usize },
    #[error("group indicator must contain both 0 and 1")]
    SingleGroup,
    #[error("group indicator values must be 0 or 1")]
    InvalidIndicator,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The compared training strategies, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    Baseline,
    Upweighted,
    Separate,
    #[serde(rename = "SMOTE")]
    Smote,
    GptGroup,
    GptGeneric,
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        MethodId::Baseline,
        MethodId::Upweighted,
        MethodId::Separate,
        MethodId::Smote,
        MethodId::GptGroup,
        MethodId::GptGeneric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Baseline => "Baseline",
            MethodId::Upweighted => "Upweighted",
            MethodId::Separate => "Separate",
            MethodId::Smote => "SMOTE",
            MethodId::GptGroup => "GptGroup",
            MethodId::GptGeneric => "GptGeneric",
        }
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, MethodId::GptGroup | MethodId::GptGeneric)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    RealMajority,
    RealMinority,
    SyntheticSmote,
    SyntheticLlm,
}

/// Model-ready rows for one outcome.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Encoded features, plus the group indicator as the last column when pooled.
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// Strictly positive.
    pub weights: Array1<f64>,
    pub provenance: Vec<Provenance>,
    pub has_group_indicator: bool,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn group_indicator(&self) -> Option<ArrayView1<'_, f64>> {
        self.has_group_indicator
            .then(|| self.x.column(self.x.ncols() - 1))
    }

    /// Weights if any differ from 1.
    pub fn nontrivial_weights(&self) -> Option<ArrayView1<'_, f64>> {
        self.weights
            .iter()
            .any(|&w| w != 1.0)
            .then(|| self.weights.view())
    }

    pub fn count(&self, tag: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == tag).count()
    }
}

#[derive(Debug, Clone)]
pub enum Assembled {
    Pooled(TrainingSet),
    Separate {
        majority: TrainingSet,
        minority: TrainingSet,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    pub smote_k: usize,
    pub smote_seed: u64,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            smote_k: DEFAULT_K,
            smote_seed: 0,
        }
    }
}

/// Minority (indicator 1) rows get `n_majority / n_minority`, majority rows 1.
pub fn group_weights(indicator: ArrayView1<f64>) -> Result<Array1<f64>, AugmentError> {
    if indicator.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(AugmentError::InvalidIndicator);
    }
    let n_min = indicator.iter().filter(|&&v| v == 1.0).count();
    let n_maj = indicator.len() - n_min;
    if n_min == 0 || n_maj == 0 {
        return Err(AugmentError::SingleGroup);
    }
    let ratio = n_maj as f64 / n_min as f64;
    Ok(indicator.mapv(|v| if v == 1.0 { ratio } else { 1.0 }))
}

/// SMOTE column roles for encoded features followed by one outcome column.
pub fn smote_columns(encoder: &Encoder) -> Vec<SmoteColumn> {
    encoder
        .kinds()
        .iter()
        .map(|k| match k {
            ColumnKind::Continuous => SmoteColumn::Continuous,
            ColumnKind::Binary => SmoteColumn::Binary,
            ColumnKind::OneHot { feature } => SmoteColumn::OneHot { block: *feature },
        })
        .chain(std::iter::once(SmoteColumn::Label))
        .collect()
}

/// Builds the training set(s) for `method` on `outcome`.
///
/// `synthetic` must be given exactly for the LLM methods; its rows join the
/// minority group. SMOTE up-samples the minority to the majority's size.
pub fn assemble(
    method: MethodId,
    table: &Table,
    sample: &GroupSample,
    outcome: &str,
    synthetic: Option<&[Record]>,
    opts: &AssembleOptions,
) -> Result<Assembled, AugmentError> {
    match (method.uses_llm(), synthetic.is_some()) {
        (true, false) => return Err(AugmentError::MissingSynthetic(method)),
        (false, true) => return Err(AugmentError::UnexpectedSynthetic(method)),
        _ => {}
    }
    let schema = table.schema();
    let oi = schema.require_outcome(outcome)?;
    let encoder = Encoder::new(schema);

    let encode = |records: &[&Record]| -> (Array2<f64>, Array1<f64>) {
        let x = encoder.encode_records(schema, records.iter().copied());
        let y = records.iter().map(|r| f64::from(u8::from(r.outcomes[oi]))).collect();
        (x, y)
    };
    let rows_of = |idx: &[usize]| -> Vec<&Record> { idx.iter().map(|&i| table.record(i)).collect() };
    let (x_maj, y_maj) = encode(&rows_of(&sample.majority_rows));
    let (x_min, y_min) = encode(&rows_of(&sample.minority_rows));

    if method == MethodId::Separate {
        return Ok(Assembled::Separate {
            majority: unpooled(x_maj, y_maj, Provenance::RealMajority),
            minority: unpooled(x_min, y_min, Provenance::RealMinority),
        });
    }

    let (x_extra, y_extra, extra_tag) = match method {
        MethodId::Smote => {
            let pooled_x = concatenate(Axis(0), &[x_maj.view(), x_min.view()]).expect("same width");
            let mut scales: Vec<f64> = pooled_x
                .columns()
                .into_iter()
                .map(|c| c.std(0.0))
                .collect();
            scales.push(1.0);
            let with_label = concatenate(
                Axis(1),
                &[x_min.view(), y_min.view().insert_axis(Axis(1))],
            )
            .expect("same height");
            let out = smote_upsample(
                with_label.view(),
                &smote_columns(&encoder),
                sample.majority_rows.len().max(x_min.nrows()),
                opts.smote_k,
                opts.smote_seed,
                Some(&scales),
            )?;
            let w = encoder.width();
            (
                out.rows.slice(s![.., ..w]).to_owned(),
                out.rows.column(w).to_owned(),
                Provenance::SyntheticSmote,
            )
        }
        MethodId::GptGroup | MethodId::GptGeneric => {
            let recs: Vec<&Record> = synthetic.unwrap_or_default().iter().collect();
            let (x, y) = encode(&recs);
            (x, y, Provenance::SyntheticLlm)
        }
        _ => (Array2::zeros((0, encoder.width())), Array1::zeros(0), Provenance::SyntheticLlm),
    };

    let n_maj = x_maj.nrows();
    let n_min = x_min.nrows() + x_extra.nrows();
    let x = concatenate(Axis(0), &[x_maj.view(), x_min.view(), x_extra.view()]).expect("same width");
    let indicator: Array1<f64> = (0..n_maj + n_min)
        .map(|i| if i < n_maj { 0.0 } else { 1.0 })
        .collect();
    let x = concatenate(Axis(1), &[x.view(), indicator.view().insert_axis(Axis(1))]).expect("same height");
    let y = concatenate(Axis(0), &[y_maj.view(), y_min.view(), y_extra.view()]).expect("vectors");
    let weights = if method == MethodId::Upweighted {
        group_weights(indicator.view())?
    } else {
        Array1::ones(n_maj + n_min)
    };
    let provenance = std::iter::repeat_n(Provenance::RealMajority, n_maj)
        .chain(std::iter::repeat_n(Provenance::RealMinority, x_min.nrows()))
        .chain(std::iter::repeat_n(extra_tag, x_extra.nrows()))
        .collect();
    Ok(Assembled::Pooled(TrainingSet {
        x,
        y,
        weights,
        provenance,
        has_group_indicator: true,
    }))
}

fn unpooled(x: Array2<f64>, y: Array1<f64>, tag: Provenance) -> TrainingSet {
    let n = y.len();
    TrainingSet {
        x,
        y,
        weights: Array1::ones(n),
        provenance: vec![tag; n],
        has_group_indicator: false,
    }
}
