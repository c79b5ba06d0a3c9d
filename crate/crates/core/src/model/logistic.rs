//! Weighted, L2-penalized logistic regression fitted by gradient descent
//! with backtracking line search on internally standardized features.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// Penalty `lambda` in `(lambda / 2) * ||beta||^2`; the intercept is not penalized.
    pub l2: f64,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tolerance: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective: f64,
    pub converged: bool,
    /// Objective at the start and after each accepted step. Entries after the
    /// first add up per-step changes, which are exact below rounding level.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Coefficients on the standardized scale.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    /// Always positive; constant columns keep sd 1 and a zero coefficient.
    pub sds: Vec<f64>,
    pub dropped: Vec<bool>,
    pub config: LogisticConfig,
    pub report: ConvergenceReport,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    /// Parameter vector `[intercept, coefficients...]`.
    pub fn params(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.coefficients.iter().copied())
            .collect()
    }

    /// Linear scores `b + sum_j beta_j (x_j - mean_j) / sd_j`.
    pub fn decision_function(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
        if x.ncols() != self.n_features() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.coefficients)
                        .zip(self.means.iter().zip(&self.sds))
                        .map(|((v, b), (m, s))| b * (v - m) / s)
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Penalized weighted negative log-likelihood over standardized data.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    /// Row-major standardized design, `n x d`.
    z: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    n: usize,
    d: usize,
    l2: f64,
    means: Vec<f64>,
    sds: Vec<f64>,
    dropped: Vec<bool>,
}

impl LogisticObjective {
    /// Standardizes `x` with weighted column means and standard deviations.
    pub fn new(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        w: Option<ArrayView1<f64>>,
        l2: f64,
    ) -> Result<Self, ModelError> {
        let (n, d) = x.dim();
        if y.len() != n {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if n < 2 {
            return Err(ModelError::TooFewRows { needed: 2, found: n });
        }
        let w: Vec<f64> = match w {
            Some(w) => {
                if w.len() != n {
                    return Err(ModelError::DimensionMismatch {
                        expected: n,
                        found: w.len(),
                    });
                }
                if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(ModelError::InvalidWeights);
                }
                w.to_vec()
            }
            None => vec![1.0; n],
        };
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(ModelError::InvalidLabels);
        }
        let positives = y.iter().filter(|&&v| v == 1.0).count();
        if positives == 0 || positives == n {
            return Err(ModelError::SingleClass);
        }

        let total: f64 = w.iter().sum();
        let mut means = vec![0.0; d];
        let mut sds = vec![1.0; d];
        let mut dropped = vec![false; d];
        for j in 0..d {
            let col = x.column(j);
            let m = col.iter().zip(&w).map(|(v, wi)| v * wi).sum::<f64>() / total;
            let var = col.iter().zip(&w).map(|(v, wi)| wi * (v - m).powi(2)).sum::<f64>() / total;
            means[j] = m;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + m.abs()) {
                sds[j] = sd;
            } else {
                dropped[j] = true;
                log::warn!("dropping constant feature column {j}");
            }
        }
        let mut z = Vec::with_capacity(n * d);
        for row in x.rows() {
            for j in 0..d {
                z.push(if dropped[j] { 0.0 } else { (row[j] - means[j]) / sds[j] });
            }
        }
        Ok(Self {
            z,
            y: y.to_vec(),
            w,
            n,
            d,
            l2,
            means,
            sds,
            dropped,
        })
    }

    pub fn dim(&self) -> usize {
        self.d + 1
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let (b, beta) = params.split_first().expect("non-empty params");
        let mut total = 0.0;
        for i in 0..self.n {
            let s = b + dot(&self.z[i * self.d..(i + 1) * self.d], beta);
            total += self.w[i] * (softplus(s) - self.y[i] * s);
        }
        total + 0.5 * self.l2 * dot(beta, beta)
    }

    /// `value(params + delta) - value(params)`, accurate for small `delta`
    /// where subtracting two full objective values would lose it to rounding.
    pub fn change(&self, params: &[f64], delta: &[f64]) -> f64 {
        let (b, beta) = params.split_first().expect("non-empty params");
        let (db, dbeta) = delta.split_first().expect("non-empty delta");
        let mut total = 0.0;
        for i in 0..self.n {
            let row = &self.z[i * self.d..(i + 1) * self.d];
            let s = b + dot(row, beta);
            let ds = db + dot(row, dbeta);
            total += self.w[i] * (softplus_change(s, ds) - self.y[i] * ds);
        }
        let penalty: f64 = beta
            .iter()
            .zip(dbeta)
            .map(|(bj, dj)| dj * (2.0 * bj + dj))
            .sum();
        total + 0.5 * self.l2 * penalty
    }

    /// Objective value and gradient with respect to `[intercept, beta...]`.
    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (b, beta) = params.split_first().expect("non-empty params");
        let mut grad = vec![0.0; self.d + 1];
        let mut total = 0.0;
        for i in 0..self.n {
            let row = &self.z[i * self.d..(i + 1) * self.d];
            let s = b + dot(row, beta);
            total += self.w[i] * (softplus(s) - self.y[i] * s);
            let r = self.w[i] * (sigmoid(s) - self.y[i]);
            grad[0] += r;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += r * v;
            }
        }
        for (g, bj) in grad[1..].iter_mut().zip(beta) {
            *g += self.l2 * bj;
        }
        (total + 0.5 * self.l2 * dot(beta, beta), grad)
    }

    /// Upper bound on the gradient's Lipschitz constant.
    fn lipschitz_bound(&self) -> f64 {
        let mut max_sq: f64 = 0.0;
        for i in 0..self.n {
            let row = &self.z[i * self.d..(i + 1) * self.d];
            max_sq = max_sq.max(1.0 + dot(row, row));
        }
        0.25 * self.w.iter().sum::<f64>() * max_sq + self.l2
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// Fits the model; `w` are optional positive sample weights.
pub fn fit_logistic(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: Option<ArrayView1<f64>>,
    cfg: &LogisticConfig,
) -> Result<LogisticModel, ModelError> {
    let obj = LogisticObjective::new(x, y, w, cfg.l2)?;
    let mut params = vec![0.0; obj.dim()];
    let (mut f, mut g) = obj.value_and_gradient(&params);
    let mut trace = vec![f];
    let mut step = 1.0 / obj.lipschitz_bound();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut gnorm = norm(&g);

    while gnorm > cfg.tolerance && iterations < cfg.max_iter {
        // Barzilai-Borwein trial step, then backtrack until sufficient decrease.
        if let Some((p_old, g_old)) = &prev {
            let s: Vec<f64> = params.iter().zip(p_old).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = g.iter().zip(g_old).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &yv);
            if sy > 0.0 {
                step = dot(&s, &s) / sy;
            } else {
                step *= 2.0;
            }
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let delta: Vec<f64> = g.iter().map(|gi| -step * gi).collect();
            let change = obj.change(&params, &delta);
            if change <= -ARMIJO * step * gnorm * gnorm {
                let trial: Vec<f64> = params.iter().zip(&delta).map(|(p, d)| p + d).collect();
                accepted = Some((trial, change));
                break;
            }
            step *= 0.5;
        }
        let Some((next, change)) = accepted else {
            break;
        };
        let (_, g_next) = obj.value_and_gradient(&next);
        prev = Some((std::mem::replace(&mut params, next), std::mem::replace(&mut g, g_next)));
        f += change;
        trace.push(f);
        gnorm = norm(&g);
        iterations += 1;
    }

    Ok(LogisticModel {
        intercept: params[0],
        coefficients: params[1..].to_vec(),
        means: obj.means.clone(),
        sds: obj.sds.clone(),
        dropped: obj.dropped.clone(),
        config: *cfg,
        report: ConvergenceReport {
            iterations,
            gradient_norm: gnorm,
            objective: f,
            converged: gnorm <= cfg.tolerance,
            objective_trace: trace,
        },
    })
}

/// Probabilities `sigmoid(decision_function)`, kept strictly inside (0, 1).
pub fn predict_proba(model: &LogisticModel, x: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
    const EDGE: f64 = 1e-15;
    Ok(model
        .decision_function(x)?
        .mapv(|s| sigmoid(s).clamp(EDGE, 1.0 - EDGE)))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `softplus(s + ds) - softplus(s)`.
fn softplus_change(s: f64, ds: f64) -> f64 {
    if ds.abs() < 1.0 {
        (sigmoid(s) * ds.exp_m1()).ln_1p()
    } else {
        softplus(s + ds) - softplus(s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
