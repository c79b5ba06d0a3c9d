//! Quality analyses of synthetic rows against real data, plus file emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Encoder, FeatureKind, Record, Schema};
use crate::model::{fit_forest, forest_predict_proba, ForestConfig, ModelError};
use crate::seed::mix_seed;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("reference set is empty")]
    EmptyReference,
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("need at least 2 points, found {0}")]
    TooFewPoints(usize),
    #[error("feature {0:?} is unknown or not numeric")]
    InvalidFeature(String),
    #[error("x and y differ in length")]
    LengthMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// For each synthetic row, the smallest L1 distance to a reference row.
///
/// Numeric and binary features are min-max scaled by the reference range
/// (a zero range scales by 1). A categorical feature contributes half the
/// L1 distance between full one-hot vectors: 1 if the categories differ.
pub fn l1_nn_distances(
    synthetic: &[Record],
    reference: &[Record],
    schema: &Schema,
) -> Result<Vec<f64>, DiagnosticsError> {
    if reference.is_empty() {
        return Err(DiagnosticsError::EmptyReference);
    }
    let d = schema.features.len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for r in reference {
        for j in 0..d {
            lo[j] = lo[j].min(r.features[j]);
            hi[j] = hi[j].max(r.features[j]);
        }
    }
    let span: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { h - l } else { 1.0 })
        .collect();
    let categorical: Vec<bool> = schema
        .features
        .iter()
        .map(|f| f.kind == FeatureKind::Categorical)
        .collect();
    let distance = |a: &Record, b: &Record| -> f64 {
        (0..d)
            .map(|j| {
                if categorical[j] {
                    f64::from(u8::from(a.features[j] != b.features[j]))
                } else {
                    (a.features[j] - b.features[j]).abs() / span[j]
                }
            })
            .sum()
    };
    Ok(synthetic
        .iter()
        .map(|s| {
            reference
                .iter()
                .map(|r| distance(s, r))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Pearson correlations; `None` where either feature is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a][b]
    }

    pub fn missing(&self) -> Vec<(usize, usize)> {
        let n = self.features.len();
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.values[a][b].is_none())
            .collect()
    }
}

pub fn correlation_matrix(
    rows: &[Record],
    schema: &Schema,
    features: &[&str],
) -> Result<CorrelationMatrix, DiagnosticsError> {
    if rows.len() < 2 {
        return Err(DiagnosticsError::TooFewRows {
            needed: 2,
            found: rows.len(),
        });
    }
    let idx = features
        .iter()
        .map(|name| {
            schema
                .feature_index(name)
                .filter(|&i| schema.features[i].kind != FeatureKind::Categorical)
                .ok_or_else(|| DiagnosticsError::InvalidFeature(name.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = rows.len() as f64;
    let centered: Vec<Vec<f64>> = idx
        .iter()
        .map(|&j| {
            let m = rows.iter().map(|r| r.features[j]).sum::<f64>() / n;
            rows.iter().map(|r| r.features[j] - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let k = idx.len();
    let mut values = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            let v = if norms[a] > 0.0 && norms[b] > 0.0 {
                if a == b {
                    Some(1.0)
                } else {
                    let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
                    Some((dot / (norms[a] * norms[b])).clamp(-1.0, 1.0))
                }
            } else {
                None
            };
            values[a][b] = v;
            values[b][a] = v;
        }
    }
    Ok(CorrelationMatrix {
        features: features.iter().map(|s| s.to_string()).collect(),
        values,
    })
}

/// Gaussian product-kernel density on a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde2d {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `density[[i, j]]` is the density at `(xs[i], ys[j])`.
    pub density: Array2<f64>,
    pub bandwidth: [f64; 2],
}

impl Kde2d {
    pub fn cell_area(&self) -> f64 {
        step(&self.xs) * step(&self.ys)
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.density.sum() * self.cell_area()
    }
}

fn step(v: &[f64]) -> f64 {
    if v.len() < 2 {
        1.0
    } else {
        v[1] - v[0]
    }
}

pub const DEFAULT_KDE_GRID: usize = 100;

/// Evaluates on `grid x grid` nodes spanning the data range plus a 10% margin
/// per side. Bandwidths follow Scott's rule, `n^(-1/6) * sd` per axis.
pub fn kde2d(x: &[f64], y: &[f64], grid: usize) -> Result<Kde2d, DiagnosticsError> {
    if x.len() != y.len() {
        return Err(DiagnosticsError::LengthMismatch);
    }
    if x.len() < 2 {
        return Err(DiagnosticsError::TooFewPoints(x.len()));
    }
    let grid = grid.max(2);
    let n = x.len() as f64;
    let factor = n.powf(-1.0 / 6.0);
    let axis = |v: &[f64]| -> (Vec<f64>, f64) {
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let h = if sd > 0.0 { factor * sd } else { 1e-3 * (1.0 + m.abs()) };
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = if hi > lo { 0.1 * (hi - lo) } else { 3.0 * h };
        let (a, b) = (lo - margin, hi + margin);
        let nodes = (0..grid)
            .map(|i| a + (b - a) * i as f64 / (grid - 1) as f64)
            .collect();
        (nodes, h)
    };
    let (xs, hx) = axis(x);
    let (ys, hy) = axis(y);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy * n);
    // Separable kernel: density = norm * Kx^T Ky with per-point kernel rows.
    let kx = Array2::from_shape_fn((x.len(), grid), |(p, i)| (-0.5 * ((xs[i] - x[p]) / hx).powi(2)).exp());
    let ky = Array2::from_shape_fn((y.len(), grid), |(p, j)| (-0.5 * ((ys[j] - y[p]) / hy).powi(2)).exp());
    let density = kx.t().dot(&ky) * norm;
    Ok(Kde2d {
        xs,
        ys,
        density,
        bandwidth: [hx, hy],
    })
}

/// Forest-predicted probabilities of minority membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorReport {
    pub synthetic: Vec<f64>,
    pub minority_holdout: Vec<f64>,
    pub majority_holdout: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl DiscriminatorReport {
    pub fn means(&self) -> [f64; 3] {
        [mean(&self.synthetic), mean(&self.minority_holdout), mean(&self.majority_holdout)]
    }
}

pub const DISCRIMINATOR_MIN_ROWS: usize = 20;
const TRAIN_FRACTION: f64 = 0.7;

/// Trains a forest on 70% of each real group (minority = class 1) and scores
/// the held-out 30% of both groups and every synthetic row.
pub fn discriminator_report(
    real_minority: &[Record],
    real_majority: &[Record],
    synthetic: &[Record],
    schema: &Schema,
    seed: u64,
    cfg: &ForestConfig,
) -> Result<DiscriminatorReport, DiagnosticsError> {
    for g in [real_minority, real_majority] {
        if g.len() < DISCRIMINATOR_MIN_ROWS {
            return Err(DiagnosticsError::TooFewRows {
                needed: DISCRIMINATOR_MIN_ROWS,
                found: g.len(),
            });
        }
    }
    let split = |rows: &[Record], stream: u64| -> (Vec<Record>, Vec<Record>) {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, &[stream])));
        let cut = (rows.len() as f64 * TRAIN_FRACTION).round() as usize;
        let pick = |s: &[usize]| s.iter().map(|&i| rows[i].clone()).collect();
        (pick(&idx[..cut]), pick(&idx[cut..]))
    };
    let (min_train, min_hold) = split(real_minority, 1);
    let (maj_train, maj_hold) = split(real_majority, 2);

    let encoder = Encoder::new(schema);
    let x = encoder.encode_records(schema, maj_train.iter().chain(&min_train));
    let y: Array1<f64> = std::iter::repeat_n(0.0, maj_train.len())
        .chain(std::iter::repeat_n(1.0, min_train.len()))
        .collect();
    let forest = fit_forest(x.view(), y.view(), cfg, mix_seed(seed, &[3]))?;
    let score = |rows: &[Record]| -> Result<Vec<f64>, DiagnosticsError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let x = encoder.encode_records(schema, rows);
        Ok(forest_predict_proba(&forest, x.view())?.to_vec())
    };
    Ok(DiscriminatorReport {
        synthetic: score(synthetic)?,
        minority_holdout: score(&min_hold)?,
        majority_holdout: score(&maj_hold)?,
    })
}

/// All analyses for one synthetic set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// Reference name to per-synthetic-row distances.
    pub nn_distances: BTreeMap<String, Vec<f64>>,
    /// Source name to correlation matrix.
    pub correlation: BTreeMap<String, CorrelationMatrix>,
    /// `(x feature, y feature)` to per-source densities.
    pub kde: BTreeMap<(String, String), BTreeMap<String, Kde2d>>,
    pub discriminator: Option<DiscriminatorReport>,
}

/// Inputs for [`build_report`].
#[derive(Debug, Clone)]
pub struct DiagnosticsInput<'a> {
    pub schema: &'a Schema,
    pub synthetic: &'a [Record],
    pub minority: &'a [Record],
    pub majority: &'a [Record],
    /// Numeric features for correlations; all non-categorical features when empty.
    pub correlation_features: Vec<String>,
    pub kde_pairs: Vec<(String, String)>,
    pub kde_grid: usize,
    pub seed: u64,
    pub forest: ForestConfig,
}

pub fn build_report(input: &DiagnosticsInput<'_>) -> Result<DiagnosticsReport, DiagnosticsError> {
    let schema = input.schema;
    let sources = [
        ("synthetic", input.synthetic),
        ("minority", input.minority),
        ("majority", input.majority),
    ];
    let mut report = DiagnosticsReport::default();
    for (name, rows) in &sources[1..] {
        if !rows.is_empty() {
            report
                .nn_distances
                .insert(name.to_string(), l1_nn_distances(input.synthetic, rows, schema)?);
        }
    }
    let corr_features: Vec<String> = if input.correlation_features.is_empty() {
        schema
            .features
            .iter()
            .filter(|f| f.kind != FeatureKind::Categorical)
            .map(|f| f.name.clone())
            .collect()
    } else {
        input.correlation_features.clone()
    };
    let corr_refs: Vec<&str> = corr_features.iter().map(String::as_str).collect();
    for (name, rows) in &sources {
        if rows.len() >= 2 {
            report
                .correlation
                .insert(name.to_string(), correlation_matrix(rows, schema, &corr_refs)?);
        }
    }
    for (fx, fy) in &input.kde_pairs {
        let ix = numeric_index(schema, fx)?;
        let iy = numeric_index(schema, fy)?;
        let mut per_source = BTreeMap::new();
        for (name, rows) in &sources {
            if rows.len() >= 2 {
                let xs: Vec<f64> = rows.iter().map(|r| r.features[ix]).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r.features[iy]).collect();
                per_source.insert(name.to_string(), kde2d(&xs, &ys, input.kde_grid)?);
            }
        }
        report.kde.insert((fx.clone(), fy.clone()), per_source);
    }
    if input.minority.len() >= DISCRIMINATOR_MIN_ROWS && input.majority.len() >= DISCRIMINATOR_MIN_ROWS {
        report.discriminator = Some(discriminator_report(
            input.minority,
            input.majority,
            input.synthetic,
            schema,
            input.seed,
            &input.forest,
        )?);
    }
    Ok(report)
}

fn numeric_index(schema: &Schema, name: &str) -> Result<usize, DiagnosticsError> {
    schema
        .feature_index(name)
        .filter(|&i| schema.features[i].kind != FeatureKind::Categorical)
        .ok_or_else(|| DiagnosticsError::InvalidFeature(name.to_string()))
}

/// Lowercase alphanumerics with every other run of characters replaced by `_`.
pub fn file_slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub analysis: String,
    pub file: String,
    pub columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl DiagnosticsReport {
    /// Writes one CSV per analysis and `manifest.json` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<Manifest, DiagnosticsError> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut entry = |analysis: &str, file: String, columns: &[&str], source: Option<String>| {
            files.push(ManifestEntry {
                analysis: analysis.to_string(),
                file,
                columns: columns.iter().map(|s| s.to_string()).collect(),
                source,
            });
        };

        for (reference, dists) in &self.nn_distances {
            let file = format!("nn_distances_{}.csv", file_slug(reference));
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            w.write_record(["row", "distance"])?;
            for (i, d) in dists.iter().enumerate() {
                w.write_record([i.to_string(), d.to_string()])?;
            }
            w.flush()?;
            entry("nn_distances", file, &["row", "distance"], Some(reference.clone()));
        }

        for (source, m) in &self.correlation {
            let file = format!("corr_{}.csv", file_slug(source));
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            let mut header = vec!["feature".to_string()];
            header.extend(m.features.iter().cloned());
            w.write_record(&header)?;
            for (a, name) in m.features.iter().enumerate() {
                let mut rec = vec![name.clone()];
                rec.extend(m.values[a].iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
                w.write_record(&rec)?;
            }
            w.flush()?;
            let cols: Vec<&str> = header.iter().map(String::as_str).collect();
            entry("correlation", file, &cols, Some(source.clone()));
        }

        for ((fx, fy), per_source) in &self.kde {
            let file = format!("kde_{}_{}.csv", file_slug(fx), file_slug(fy));
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            w.write_record(["source", "x", "y", "density"])?;
            for (source, k) in per_source {
                for (i, x) in k.xs.iter().enumerate() {
                    for (j, y) in k.ys.iter().enumerate() {
                        w.write_record([
                            source.clone(),
                            x.to_string(),
                            y.to_string(),
                            k.density[[i, j]].to_string(),
                        ])?;
                    }
                }
            }
            w.flush()?;
            entry("kde", file, &["source", "x", "y", "density"], None);
        }

        if let Some(d) = &self.discriminator {
            let file = "discriminator_probs.csv".to_string();
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            w.write_record(["source", "probability"])?;
            for (source, probs) in [
                ("synthetic", &d.synthetic),
                ("minority-holdout", &d.minority_holdout),
                ("majority-holdout", &d.majority_holdout),
            ] {
                for p in probs {
                    w.write_record([source.to_string(), p.to_string()])?;
                }
            }
            w.flush()?;
            entry("discriminator", file, &["source", "probability"], None);
        }

        let manifest = Manifest { files };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn manifest_path(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }
}
