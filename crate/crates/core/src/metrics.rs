//! Rank metrics and per-group holdout evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::MethodId;
use crate::data::{DataError, Encoder, GroupSample, Table};
use crate::model::{LogisticModel, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("labels contain no positives")]
    NoPositives,
    #[error("labels and scores differ in length ({labels} vs {scores})")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("skipped: {reason}")]
    SkippedCell { reason: String },
    #[error("group {0:?} is not part of the sample")]
    UnknownGroup(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<DataError> for MetricsError {
    fn from(e: DataError) -> Self {
        MetricsError::Data(e.to_string())
    }
}

fn check_lengths(labels: &[bool], scores: &[f64]) -> Result<(), MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    Ok(())
}

/// Mann-Whitney AUROC with midranks for tied scores.
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let midrank = (i + j + 2) as f64 / 2.0;
        let pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision over descending unique score thresholds.
pub fn auprc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            if labels[k] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub group: String,
    pub outcome: String,
    pub method: MethodId,
    pub auroc: f64,
    pub auprc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Fitted logistic model(s) for one training strategy.
#[derive(Debug, Clone)]
pub enum Fitted {
    /// One model over both groups with the group indicator as its last input.
    Pooled(LogisticModel),
    /// One model per group, without an indicator.
    Separate {
        majority: LogisticModel,
        minority: LogisticModel,
    },
}

/// Scores the holdout rows of `group` and computes both metrics.
///
/// A group whose holdout lacks either outcome class yields `SkippedCell`.
pub fn evaluate_group(
    fitted: &Fitted,
    table: &Table,
    sample: &GroupSample,
    group: &str,
    outcome: &str,
    method: MethodId,
) -> Result<EvalResult, MetricsError> {
    let is_minority = if group == sample.minority {
        true
    } else if group == sample.majority {
        false
    } else {
        return Err(MetricsError::UnknownGroup(group.to_string()));
    };
    let schema = table.schema();
    let oi = schema
        .outcome_index(outcome)
        .ok_or_else(|| DataError::UnknownOutcome(outcome.to_string()))?;
    let gi = schema
        .group_index(group)
        .ok_or_else(|| DataError::UnknownLabel(group.to_string()))?;
    let rows = sample.holdout_in_group(table, gi);
    let labels: Vec<bool> = rows.iter().map(|&i| table.record(i).outcomes[oi]).collect();
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SkippedCell {
            reason: format!(
                "holdout for {group} has {n_pos} positive and {n_neg} negative {outcome} cases"
            ),
        });
    }

    let encoder = Encoder::new(schema);
    let x = encoder.encode_records(schema, rows.iter().map(|&i| table.record(i)));
    let scores = match fitted {
        Fitted::Pooled(m) => {
            let ind = ndarray::Array2::from_elem((x.nrows(), 1), if is_minority { 1.0 } else { 0.0 });
            let xi = ndarray::concatenate(ndarray::Axis(1), &[x.view(), ind.view()]).expect("same height");
            m.decision_function(xi.view())?
        }
        Fitted::Separate { majority, minority } => {
            let m = if is_minority { minority } else { majority };
            m.decision_function(x.view())?
        }
    };
    let scores = scores.to_vec();
    Ok(EvalResult {
        group: group.to_string(),
        outcome: outcome.to_string(),
        method,
        auroc: auroc(&labels, &scores)?,
        auprc: auprc(&labels, &scores)?,
        n_pos,
        n_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let l = [false, true, false, true];
        assert!((auroc(&l, &[0.1, 0.4, 0.5, 0.8]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(auroc(&l, &[1.0; 4]).unwrap(), 0.5);
        let ap = auprc(&[true, false, true], &[0.9, 0.8, 0.7]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(auprc(&[true, true, false], &[0.9, 0.8, 0.1]).unwrap(), 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(auroc(&[true, true], &[0.1, 0.2]), Err(MetricsError::SingleClass));
        assert_eq!(auprc(&[false, false], &[0.1, 0.2]), Err(MetricsError::NoPositives));
        assert!(matches!(auroc(&[true], &[0.1, 0.2]), Err(MetricsError::LengthMismatch { .. })));
    }
}
