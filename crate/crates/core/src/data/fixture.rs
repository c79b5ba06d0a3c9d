//! Calibrated synthetic datasets with group-specific feature distributions and
//! logistic outcome models.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::encode::Encoder;
use super::schema::{FeatureKind, Schema};
use super::table::{Record, Table};
use super::DataError;

/// Seed of the feature draws used to solve intercepts for prevalence targets.
const CALIBRATION_SEED: u64 = 0x5eed_ca1b;
const CALIBRATION_DRAWS: usize = 20_000;

/// Marginal distribution of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum FeatureDistribution {
    /// Gaussian, clamped to the schema bounds when present.
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Categorical { probs: Vec<f64> },
}

/// Latent Gaussian-copula correlation between two features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

/// Logistic model for one outcome over encoded features.
///
/// When `intercept` is absent it is solved so that the expected prevalence
/// of the group equals `prevalence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prevalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFixture {
    pub label: String,
    pub size: usize,
    /// One distribution per schema feature, in schema order.
    pub features: Vec<FeatureDistribution>,
    #[serde(default)]
    pub correlations: Vec<PairCorrelation>,
    /// One model per schema outcome, in schema order.
    pub outcomes: Vec<OutcomeModel>,
}

/// Description of a synthetic dataset: schema plus per-group generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub schema: Schema,
    pub groups: Vec<GroupFixture>,
}

impl FixtureSpec {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let spec: FixtureSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_json(&std::fs::read_to_string(path.as_ref())?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture spec serializes")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.schema.validate()?;
        let bad = |m: String| Err(DataError::InvalidFixture(m));
        let width = Encoder::new(&self.schema).width();
        if self.groups.is_empty() {
            return bad("no groups".into());
        }
        for (gi, g) in self.groups.iter().enumerate() {
            if self.schema.group_index(&g.label).is_none() {
                return bad(format!("group {:?} not in schema", g.label));
            }
            if self.groups[..gi].iter().any(|o| o.label == g.label) {
                return bad(format!("group {:?} listed twice", g.label));
            }
            if g.size == 0 {
                return bad(format!("group {:?} has size 0", g.label));
            }
            if g.features.len() != self.schema.features.len() {
                return bad(format!("group {:?}: one distribution per feature required", g.label));
            }
            for (f, d) in self.schema.features.iter().zip(&g.features) {
                let ok = match (f.kind, d) {
                    (FeatureKind::Numeric, FeatureDistribution::Normal { mean, sd }) => {
                        mean.is_finite() && sd.is_finite() && *sd >= 0.0
                    }
                    (FeatureKind::Binary, FeatureDistribution::Bernoulli { p }) => {
                        (0.0..=1.0).contains(p)
                    }
                    (FeatureKind::Categorical, FeatureDistribution::Categorical { probs }) => {
                        probs.len() == f.categories.len()
                            && probs.iter().all(|p| *p >= 0.0)
                            && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-6
                    }
                    _ => false,
                };
                if !ok {
                    return bad(format!("group {:?}: bad distribution for {:?}", g.label, f.name));
                }
            }
            for c in &g.correlations {
                if self.schema.feature_index(&c.a).is_none()
                    || self.schema.feature_index(&c.b).is_none()
                    || c.a == c.b
                    || !(c.rho > -1.0 && c.rho < 1.0)
                {
                    return bad(format!("group {:?}: bad correlation {}~{}", g.label, c.a, c.b));
                }
            }
            if g.outcomes.len() != self.schema.outcomes.len() {
                return bad(format!("group {:?}: one model per outcome required", g.label));
            }
            for (name, m) in self.schema.outcomes.iter().zip(&g.outcomes) {
                if m.coefficients.len() != width {
                    return bad(format!(
                        "group {:?}, outcome {name:?}: {} coefficients for {width} encoded columns",
                        g.label,
                        m.coefficients.len()
                    ));
                }
                if let Some(p) = m.prevalence {
                    if !(p > 0.0 && p < 1.0) {
                        return bad(format!("group {:?}, outcome {name:?}: prevalence outside (0, 1)", g.label));
                    }
                }
                if m.intercept.is_none() && m.prevalence.is_none() {
                    return bad(format!(
                        "group {:?}, outcome {name:?}: intercept or prevalence required",
                        g.label
                    ));
                }
            }
            cholesky(&correlation_matrix(&self.schema, g)).ok_or_else(|| {
                DataError::InvalidFixture(format!(
                    "group {:?}: correlation matrix is not positive definite",
                    g.label
                ))
            })?;
        }
        Ok(())
    }

    /// Validates the spec and solves any prevalence-calibrated intercepts.
    pub fn sampler(&self) -> Result<FixtureSampler, DataError> {
        self.validate()?;
        let schema = Arc::new(self.schema.clone());
        let encoder = Encoder::new(&schema);
        let mut groups = Vec::with_capacity(self.groups.len());
        for (gi, g) in self.groups.iter().enumerate() {
            let chol = cholesky(&correlation_matrix(&schema, g)).expect("validated");
            let mut resolved = ResolvedGroup {
                group: schema.group_index(&g.label).expect("validated"),
                spec: g.clone(),
                chol,
                intercepts: vec![0.0; g.outcomes.len()],
            };
            let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
            rng.set_stream(gi as u64);
            let draws: Vec<Vec<f64>> = (0..CALIBRATION_DRAWS)
                .map(|_| encoder.encode(&schema, &resolved.draw_features(&schema, &mut rng)))
                .collect();
            for (oi, m) in g.outcomes.iter().enumerate() {
                resolved.intercepts[oi] = match (m.intercept, m.prevalence) {
                    (Some(b), _) => b,
                    (None, Some(p)) => {
                        let scores: Vec<f64> = draws.iter().map(|x| dot(&m.coefficients, x)).collect();
                        solve_intercept(&scores, p)
                    }
                    (None, None) => unreachable!("validated"),
                };
            }
            groups.push(resolved);
        }
        Ok(FixtureSampler {
            schema,
            encoder,
            groups,
        })
    }

    /// Generates the full table, groups in spec order. Deterministic under `seed`.
    pub fn make_fixture(&self, seed: u64) -> Result<Table, DataError> {
        let sampler = self.sampler()?;
        let mut records = Vec::new();
        let mut groups = Vec::new();
        for (gi, g) in sampler.groups.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(gi as u64);
            for _ in 0..g.spec.size {
                records.push(sampler.draw_record(g, &mut rng));
                groups.push(g.group);
            }
        }
        Table::new(Arc::clone(&sampler.schema), records, groups)
    }
}

#[derive(Debug, Clone)]
struct ResolvedGroup {
    group: usize,
    spec: GroupFixture,
    chol: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
}

impl ResolvedGroup {
    fn draw_features<R: Rng>(&self, schema: &Schema, rng: &mut R) -> Vec<f64> {
        let d = self.chol.len();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let latent: Vec<f64> = (0..d)
            .map(|i| (0..=i).map(|j| self.chol[i][j] * z[j]).sum())
            .collect();
        schema
            .features
            .iter()
            .zip(&self.spec.features)
            .zip(latent)
            .map(|((f, dist), l)| match dist {
                FeatureDistribution::Normal { mean, sd } => {
                    let v = mean + sd * l;
                    match f.bounds {
                        Some([lo, hi]) => v.clamp(lo, hi),
                        None => v,
                    }
                }
                FeatureDistribution::Bernoulli { p } => f64::from(u8::from(std_normal_cdf(l) < *p)),
                FeatureDistribution::Categorical { probs } => {
                    let u = std_normal_cdf(l);
                    let mut acc = 0.0;
                    let mut pick = probs.len() - 1;
                    for (i, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick as f64
                }
            })
            .collect()
    }
}

/// Resolved generative model that draws records for any group of a fixture.
#[derive(Debug, Clone)]
pub struct FixtureSampler {
    schema: Arc<Schema>,
    encoder: Encoder,
    groups: Vec<ResolvedGroup>,
}

impl FixtureSampler {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Intercepts in effect for `label`, one per outcome.
    pub fn intercepts(&self, label: &str) -> Option<&[f64]> {
        self.find(label).map(|g| g.intercepts.as_slice())
    }

    fn find(&self, label: &str) -> Option<&ResolvedGroup> {
        self.groups.iter().find(|g| g.spec.label == label)
    }

    fn draw_record<R: Rng>(&self, g: &ResolvedGroup, rng: &mut R) -> Record {
        let features = g.draw_features(&self.schema, rng);
        let x = self.encoder.encode(&self.schema, &features);
        let outcomes = g
            .spec
            .outcomes
            .iter()
            .zip(&g.intercepts)
            .map(|(m, b)| {
                let p = sigmoid(b + dot(&m.coefficients, &x));
                rng.random::<f64>() < p
            })
            .collect();
        Record { features, outcomes }
    }

    /// Draws `n` records from the true distribution of group `label`.
    pub fn sample_group<R: Rng>(&self, label: &str, n: usize, rng: &mut R) -> Option<Vec<Record>> {
        let g = self.find(label)?;
        Some((0..n).map(|_| self.draw_record(g, rng)).collect())
    }
}

fn correlation_matrix(schema: &Schema, g: &GroupFixture) -> Vec<Vec<f64>> {
    let d = schema.features.len();
    let mut m = vec![vec![0.0; d]; d];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for c in &g.correlations {
        if let (Some(a), Some(b)) = (schema.feature_index(&c.a), schema.feature_index(&c.b)) {
            m[a][b] = c.rho;
            m[b][a] = c.rho;
        }
    }
    m
}

/// Lower-triangular Cholesky factor, `None` unless positive definite.
fn cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = m.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = m[i][i] - s;
                if v <= 1e-12 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Intercept `b` with `mean(sigmoid(b + s)) = p`, found by bisection.
fn solve_intercept(scores: &[f64], p: f64) -> f64 {
    let prevalence = |b: f64| scores.iter().map(|s| sigmoid(b + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prevalence(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ready-made fixtures sized and calibrated after two public cohort datasets.
pub mod presets {
    use super::*;
    use crate::data::schema::FeatureSpec;

    fn normal(mean: f64, sd: f64) -> FeatureDistribution {
        FeatureDistribution::Normal { mean, sd }
    }

    fn bern(p: f64) -> FeatureDistribution {
        FeatureDistribution::Bernoulli { p }
    }

    fn corr(a: &str, b: &str, rho: f64) -> PairCorrelation {
        PairCorrelation {
            a: a.into(),
            b: b.into(),
            rho,
        }
    }

    fn outcome(coefficients: Vec<f64>, prevalence: f64) -> OutcomeModel {
        OutcomeModel {
            coefficients,
            intercept: None,
            prevalence: Some(prevalence),
        }
    }

    /// Heart-study style cohort: White 2927, Asian 111, Black 170, Hispanic 215;
    /// outcomes CHD, CVD, CHF with group-specific prevalences.
    pub fn framingham_like() -> FixtureSpec {
        let schema = Schema {
            features: vec![
                FeatureSpec::numeric("Age", Some([20.0, 90.0])),
                FeatureSpec::binary("Sex (Male)"),
                FeatureSpec::numeric("SBP", Some([80.0, 240.0])),
                FeatureSpec::numeric("DBP", Some([40.0, 140.0])),
                FeatureSpec::numeric("BMI", Some([15.0, 60.0])),
                FeatureSpec::numeric("Total Cholesterol", Some([100.0, 400.0])),
                FeatureSpec::binary("Current Smoker"),
                FeatureSpec::binary("Diabetes"),
                FeatureSpec::binary("BP Medication"),
            ],
            group_column: "race".into(),
            group_labels: ["White", "Asian", "Black", "Hispanic"].map(String::from).to_vec(),
            outcomes: ["CHD", "CVD", "CHF"].map(String::from).to_vec(),
        };
        let correlations = vec![
            corr("SBP", "DBP", 0.65),
            corr("Age", "SBP", 0.4),
            corr("BMI", "SBP", 0.2),
            corr("BMI", "DBP", 0.25),
            corr("Age", "BP Medication", 0.35),
        ];
        // Age, Male, SBP, DBP, BMI, Chol, Smoker, Diabetes, BP meds
        let base = [0.06, 0.5, 0.015, 0.005, 0.03, 0.006, 0.5, 0.7, 0.3];
        let group = |label: &str, size, age: f64, bmi: f64, diab: f64, diab_mult: f64, prev: [f64; 3]| {
            let mut coef = base.to_vec();
            coef[7] *= diab_mult;
            let mut chf = coef.clone();
            chf[4] *= 2.0;
            GroupFixture {
                label: label.into(),
                size,
                features: vec![
                    normal(age, 10.0),
                    bern(0.45),
                    normal(126.0, 18.0),
                    normal(78.0, 10.0),
                    normal(bmi, 5.0),
                    normal(200.0, 38.0),
                    bern(0.2),
                    bern(diab),
                    bern(0.2),
                ],
                correlations: correlations.clone(),
                outcomes: vec![
                    outcome(coef.clone(), prev[0]),
                    outcome(coef, prev[1]),
                    outcome(chf, prev[2]),
                ],
            }
        };
        FixtureSpec {
            schema,
            groups: vec![
                group("White", 2927, 50.0, 27.5, 0.06, 1.0, [0.020, 0.027, 0.015]),
                group("Asian", 111, 55.0, 24.5, 0.10, 1.5, [0.117, 0.144, 0.027]),
                group("Black", 170, 58.0, 30.0, 0.14, 1.2, [0.106, 0.206, 0.071]),
                group("Hispanic", 215, 56.0, 29.0, 0.15, 2.0, [0.079, 0.116, 0.042]),
            ],
        }
    }

    /// Emergency-department style cohort with group sizes proportional to a
    /// large EHR extract (244,093 / 18,321 / 92,168 / 35,205) divided by `scale`.
    pub fn mimic_like(scale: usize) -> FixtureSpec {
        let scale = scale.max(1);
        let schema = Schema {
            features: vec![
                FeatureSpec::numeric("age", Some([18.0, 100.0])),
                FeatureSpec::binary("gender (Male)"),
                FeatureSpec::numeric("triage_sbp", Some([50.0, 250.0])),
                FeatureSpec::numeric("triage_dbp", Some([20.0, 150.0])),
                FeatureSpec::numeric("triage_heartrate", Some([30.0, 200.0])),
                FeatureSpec::numeric("triage_o2sat", Some([70.0, 100.0])),
                FeatureSpec::numeric("n_ed_90d", Some([0.0, 30.0])),
                FeatureSpec::numeric("n_hosp_90d", Some([0.0, 30.0])),
                FeatureSpec::numeric("n_icu_365d", Some([0.0, 20.0])),
                FeatureSpec::categorical(
                    "chiefcom",
                    ["other", "chest pain", "abdominal pain", "dyspnea"],
                ),
            ],
            group_column: "race".into(),
            group_labels: ["White", "Asian", "Black", "Hispanic"].map(String::from).to_vec(),
            outcomes: ["critical", "ed_revisit_3d", "hospitalization"]
                .map(String::from)
                .to_vec(),
        };
        let correlations = vec![
            corr("triage_sbp", "triage_dbp", 0.55),
            corr("n_ed_90d", "n_hosp_90d", 0.5),
            corr("n_hosp_90d", "n_icu_365d", 0.4),
            corr("age", "n_hosp_90d", 0.2),
        ];
        // age, male, sbp, dbp, hr, o2, ed90, hosp90, icu365, chest, abdo, dysp
        let critical = [0.03, 0.2, -0.01, 0.0, 0.02, -0.12, 0.05, 0.15, 0.4, 0.3, 0.0, 0.8];
        let revisit = [0.0, 0.1, 0.0, 0.0, 0.005, 0.0, 0.25, 0.1, 0.05, -0.2, 0.1, 0.0];
        let hosp = [0.035, 0.15, -0.005, 0.0, 0.01, -0.06, 0.1, 0.3, 0.2, 0.2, 0.4, 0.9];
        let group = |label: &str, size: usize, ed: f64, shift: f64, prev: [f64; 3]| {
            let mut rev = revisit.to_vec();
            rev[6] *= 1.0 + shift;
            GroupFixture {
                label: label.into(),
                size: (size / scale).max(1),
                features: vec![
                    normal(55.0 - 5.0 * shift, 19.0),
                    bern(0.45),
                    normal(135.0, 22.0),
                    normal(77.0, 14.0),
                    normal(85.0, 17.0),
                    normal(98.0, 2.0),
                    normal(ed, 1.2),
                    normal(0.4, 0.8),
                    normal(0.1, 0.4),
                    FeatureDistribution::Categorical {
                        probs: vec![0.55, 0.15, 0.2, 0.1],
                    },
                ],
                correlations: correlations.clone(),
                outcomes: vec![
                    outcome(critical.to_vec(), prev[0]),
                    outcome(rev, prev[1]),
                    outcome(hosp.to_vec(), prev[2]),
                ],
            }
        };
        FixtureSpec {
            schema,
            groups: vec![
                group("White", 244_093, 0.5, 0.0, [0.067, 0.033, 0.533]),
                group("Asian", 18_321, 0.4, 0.3, [0.050, 0.031, 0.389]),
                group("Black", 92_168, 0.9, 1.0, [0.039, 0.047, 0.393]),
                group("Hispanic", 35_205, 0.8, 0.8, [0.029, 0.039, 0.349]),
            ],
        }
    }
}
