//! Independent reference implementations used as test oracles.

use synthaug::data::{FeatureKind, Record, Schema};
use synthaug::model::LogisticObjective;

/// Fraction of positive-negative pairs ordered correctly, ties counting one half.
pub fn pair_count_auroc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Average precision from an explicit sweep over every distinct threshold.
pub fn threshold_sweep_ap(labels: &[bool], scores: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = labels.iter().zip(scores).filter(|(l, s)| **l && **s >= t).count() as f64;
        let predicted = scores.iter().filter(|s| **s >= t).count() as f64;
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Direct transcription of the distance definition over full one-hot vectors.
pub fn brute_force_nn(synth: &[Record], reference: &[Record], schema: &Schema) -> Vec<f64> {
    let d = schema.features.len();
    let ranges: Vec<f64> = (0..d)
        .map(|j| {
            let lo = reference.iter().map(|r| r.features[j]).fold(f64::INFINITY, f64::min);
            let hi = reference.iter().map(|r| r.features[j]).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo { hi - lo } else { 1.0 }
        })
        .collect();
    synth
        .iter()
        .map(|s| {
            let mut best = f64::INFINITY;
            for r in reference {
                let mut total = 0.0;
                for (j, f) in schema.features.iter().enumerate() {
                    if f.kind == FeatureKind::Categorical {
                        let onehot = |v: f64| -> Vec<f64> {
                            (0..f.categories.len()).map(|c| f64::from(c == v as usize)).collect()
                        };
                        let (a, b) = (onehot(s.features[j]), onehot(r.features[j]));
                        total += 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
                    } else {
                        total += (s.features[j] - r.features[j]).abs() / ranges[j];
                    }
                }
                best = best.min(total);
            }
            best
        })
        .collect()
}

/// Largest relative deviation between the analytic and a central-difference gradient.
pub fn fd_relative_error(obj: &LogisticObjective, params: &[f64]) -> f64 {
    let (_, g) = obj.value_and_gradient(params);
    let fd: Vec<f64> = (0..params.len())
        .map(|k| {
            let h = 1e-5 * params[k].abs().max(1.0);
            let mut up = params.to_vec();
            let mut down = params.to_vec();
            up[k] += h;
            down[k] -= h;
            (obj.value(&up) - obj.value(&down)) / (2.0 * h)
        })
        .collect();
    let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / norm
}
