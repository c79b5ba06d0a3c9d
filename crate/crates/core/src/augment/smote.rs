use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AugmentError;

pub const DEFAULT_K: usize = 5;

/// How SMOTE treats a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoteColumn {
    Continuous,
    /// Rounded to 0 or 1 after interpolation.
    Binary,
    /// Dummy column of one-hot block `block`; the block is snapped to a valid encoding.
    OneHot { block: usize },
    /// Interpolated and rounded like `Binary` but excluded from the neighbor search.
    Label,
}

#[derive(Debug, Clone)]
pub struct SmoteOutput {
    /// Synthetic rows after rounding.
    pub rows: Array2<f64>,
    /// Synthetic rows before rounding: exact points on the base-neighbor segment.
    pub raw: Array2<f64>,
    /// `(base row, neighbor row, lambda)` per synthetic row.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Generates `target_n - minority.nrows()` synthetic rows.
///
/// Each row is `x + lambda * (x_nn - x)` with `x` a uniformly drawn minority
/// row, `x_nn` one of its `k` nearest minority neighbors and
/// `lambda ~ U(0, 1)`. Distances are Euclidean after dividing each column by
/// `scales` (column sds by default; zero scales count as 1).
pub fn smote_upsample(
    minority: ArrayView2<f64>,
    columns: &[SmoteColumn],
    target_n: usize,
    k: usize,
    seed: u64,
    scales: Option<&[f64]>,
) -> Result<SmoteOutput, AugmentError> {
    let (n, d) = minority.dim();
    if columns.len() != d {
        return Err(AugmentError::DimensionMismatch {
            expected: d,
            found: columns.len(),
        });
    }
    if k == 0 || n < k + 1 {
        return Err(AugmentError::TooFewRows {
            needed: k + 1,
            found: n,
        });
    }
    if target_n < n {
        return Err(AugmentError::TargetBelowRows { target: target_n, rows: n });
    }
    let scales: Vec<f64> = match scales {
        Some(s) if s.len() == d => s.iter().map(|&v| if v > 0.0 { v } else { 1.0 }).collect(),
        Some(s) => {
            return Err(AugmentError::DimensionMismatch {
                expected: d,
                found: s.len(),
            })
        }
        None => column_sds(minority)
            .into_iter()
            .map(|v| if v > 0.0 { v } else { 1.0 })
            .collect(),
    };
    let in_distance: Vec<usize> = (0..d)
        .filter(|&j| columns[j] != SmoteColumn::Label)
        .collect();

    let neighbors = nearest_neighbors(minority, &in_distance, &scales, k);

    let m = target_n - n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Array2::zeros((m, d));
    let mut pairs = Vec::with_capacity(m);
    for s in 0..m {
        let base = rng.random_range(0..n);
        let nn = neighbors[base][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        for j in 0..d {
            let x = minority[[base, j]];
            raw[[s, j]] = x + lambda * (minority[[nn, j]] - x);
        }
        pairs.push((base, nn, lambda));
    }

    let mut rows = raw.clone();
    for mut row in rows.rows_mut() {
        snap_row(row.as_slice_mut().expect("standard layout"), columns);
    }
    Ok(SmoteOutput { rows, raw, pairs })
}

fn column_sds(x: ArrayView2<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// `k` nearest other rows of every row; ties go to the lower index.
fn nearest_neighbors(x: ArrayView2<f64>, cols: &[usize], scales: &[f64], k: usize) -> Vec<Vec<usize>> {
    let n = x.nrows();
    let scaled: Vec<Vec<f64>> = x
        .rows()
        .into_iter()
        .map(|r| cols.iter().map(|&j| r[j] / scales[j]).collect())
        .collect();
    (0..n)
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = (0..n)
                .filter(|&o| o != i)
                .map(|o| {
                    let d2 = scaled[i]
                        .iter()
                        .zip(&scaled[o])
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>();
                    (d2, o)
                })
                .collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dist.into_iter().take(k).map(|(_, o)| o).collect()
        })
        .collect()
}

/// Rounds binary and label columns; a one-hot block becomes the indicator of
/// its largest entry if that exceeds 0.5, else all zeros (the dropped level).
fn snap_row(row: &mut [f64], columns: &[SmoteColumn]) {
    for (v, c) in row.iter_mut().zip(columns) {
        if matches!(c, SmoteColumn::Binary | SmoteColumn::Label) {
            *v = if *v >= 0.5 { 1.0 } else { 0.0 };
        }
    }
    let mut blocks: Vec<usize> = columns
        .iter()
        .filter_map(|c| match c {
            SmoteColumn::OneHot { block } => Some(*block),
            _ => None,
        })
        .collect();
    blocks.sort_unstable();
    blocks.dedup();
    for b in blocks {
        let idx: Vec<usize> = (0..columns.len())
            .filter(|&j| columns[j] == SmoteColumn::OneHot { block: b })
            .collect();
        let best = idx
            .iter()
            .copied()
            .fold(None, |acc: Option<usize>, j| match acc {
                Some(a) if row[a] >= row[j] => Some(a),
                _ => Some(j),
            })
            .filter(|&j| row[j] > 0.5);
        for &j in &idx {
            row[j] = if Some(j) == best { 1.0 } else { 0.0 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_hot_snapping() {
        let cols = [
            SmoteColumn::OneHot { block: 0 },
            SmoteColumn::OneHot { block: 0 },
            SmoteColumn::Binary,
        ];
        let mut r = [0.3, 0.7, 0.5];
        snap_row(&mut r, &cols);
        assert_eq!(r, [0.0, 1.0, 1.0]);
        let mut r = [0.4, 0.4, 0.49];
        snap_row(&mut r, &cols);
        assert_eq!(r, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn preconditions() {
        let x = array![[0.0], [1.0]];
        let c = [SmoteColumn::Continuous];
        assert!(matches!(
            smote_upsample(x.view(), &c, 5, 2, 0, None),
            Err(AugmentError::TooFewRows { .. })
        ));
        assert!(matches!(
            smote_upsample(x.view(), &c, 1, 1, 0, None),
            Err(AugmentError::TargetBelowRows { .. })
        ));
        assert_eq!(smote_upsample(x.view(), &c, 2, 1, 0, None).unwrap().rows.nrows(), 0);
    }

    #[test]
    fn neighbors_ignore_labels() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [5.0, 0.0]];
        let nn = nearest_neighbors(x.view(), &[0], &[1.0, 1.0], 1);
        assert_eq!(nn, vec![vec![1], vec![0], vec![1]]);
    }
}
