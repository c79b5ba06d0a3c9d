//! Random forest of Gini-split classification trees.
//!
//! Seed-to-bootstrap mapping: tree `t` uses `ChaCha8Rng` seeded with
//! `mix_seed(seed, [t])`. It first draws `n` row indices uniformly with
//! replacement; row `i` enters the tree with multiplicity equal to the number
//! of times `i` was drawn. The same stream then draws the candidate feature
//! order at each node, visiting nodes depth-first, left child first.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::seed::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features examined per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_leaf: 1,
            bootstrap: true,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        fraction: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { fraction } => return fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub max_features: usize,
    pub seed: u64,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }
}

/// Bootstrap multiplicities of tree `tree`, per the mapping in the module docs.
pub fn bootstrap_counts(n: usize, seed: u64, tree: usize) -> Vec<u32> {
    let mut rng = tree_rng(seed, tree);
    draw_counts(n, &mut rng)
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, &[tree as u64]))
}

fn draw_counts(n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

fn check_inputs(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<(), ModelError> {
    if y.len() != x.nrows() {
        return Err(ModelError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(ModelError::TooFewRows {
            needed: 2,
            found: x.nrows(),
        });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(ModelError::InvalidLabels);
    }
    Ok(())
}

fn resolve_max_features(cfg: &ForestConfig, d: usize) -> usize {
    cfg.max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1))
}

pub fn fit_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    cfg: &ForestConfig,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    check_inputs(x, y)?;
    let n = x.nrows();
    let data = Dense::new(x, y);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let counts = if cfg.bootstrap {
                draw_counts(n, &mut rng)
            } else {
                vec![1; n]
            };
            grow(&data, &counts, cfg, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_features: x.ncols(),
        max_features: resolve_max_features(cfg, x.ncols()),
        seed,
    })
}

/// Fits with caller-supplied per-tree multiplicities instead of drawing them.
///
/// The feature-order stream of tree `t` is the one `fit_forest` would use
/// after drawing its bootstrap, so `counts[t] == bootstrap_counts(n, seed, t)`
/// reproduces `fit_forest` exactly.
pub fn fit_forest_with_counts(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    cfg: &ForestConfig,
    seed: u64,
    counts: &[Vec<u32>],
) -> Result<ForestModel, ModelError> {
    check_inputs(x, y)?;
    let n = x.nrows();
    if let Some(bad) = counts.iter().find(|c| c.len() != n) {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    let data = Dense::new(x, y);
    let trees = counts
        .par_iter()
        .enumerate()
        .map(|(t, c)| {
            let mut rng = tree_rng(seed, t);
            if cfg.bootstrap {
                draw_counts(n, &mut rng);
            }
            grow(&data, c, cfg, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_features: x.ncols(),
        max_features: resolve_max_features(cfg, x.ncols()),
        seed,
    })
}

/// Mean of the trees' leaf class-1 fractions.
pub fn forest_predict_proba(model: &ForestModel, x: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
    if x.ncols() != model.n_features {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_features,
            found: x.ncols(),
        });
    }
    let k = model.trees.len().max(1) as f64;
    Ok(x
        .rows()
        .into_iter()
        .map(|row| {
            let row = row.to_vec();
            model.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / k
        })
        .collect())
}

struct Dense {
    x: Vec<f64>,
    y: Vec<bool>,
    d: usize,
}

impl Dense {
    fn new(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Self {
        Self {
            x: x.iter().copied().collect(),
            y: y.iter().map(|&v| v == 1.0).collect(),
            d: x.ncols(),
        }
    }

    fn at(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.d + feature]
    }
}

struct Best {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

fn gini_mass(w: f64, p: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let f = p / w;
    w * 2.0 * f * (1.0 - f)
}

fn grow(data: &Dense, counts: &[u32], cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> Tree {
    let rows: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    let mut nodes = Vec::new();
    let mtry = resolve_max_features(cfg, data.d);
    build(data, counts, rows, 0, cfg, mtry, rng, &mut nodes);
    Tree { nodes }
}

#[allow(clippy::too_many_arguments)]
fn build(
    data: &Dense,
    counts: &[u32],
    rows: Vec<usize>,
    depth: usize,
    cfg: &ForestConfig,
    mtry: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let (w, p) = rows.iter().fold((0.0, 0.0), |(w, p), &i| {
        let c = f64::from(counts[i]);
        (w + c, if data.y[i] { p + c } else { p })
    });
    let fraction = if w > 0.0 { p / w } else { 0.0 };
    nodes.push(Node::Leaf { fraction });

    let min_leaf = cfg.min_leaf.max(1) as f64;
    let pure = p == 0.0 || p == w;
    let depth_capped = cfg.max_depth.is_some_and(|m| depth >= m);
    if pure || depth_capped || w < 2.0 * min_leaf || data.d == 0 {
        return id;
    }

    let Some(best) = find_split(data, counts, &rows, mtry, min_leaf, rng) else {
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&i| data.at(i, best.feature) <= best.threshold);
    let left = build(data, counts, left_rows, depth + 1, cfg, mtry, rng, nodes);
    let right = build(data, counts, right_rows, depth + 1, cfg, mtry, rng, nodes);
    nodes[id] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
    id
}

/// Visits features in a random order until `mtry` non-constant ones have been
/// scanned, then returns the lowest-impurity split among them.
fn find_split(
    data: &Dense,
    counts: &[u32],
    rows: &[usize],
    mtry: usize,
    min_leaf: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Best> {
    let mut order: Vec<usize> = (0..data.d).collect();
    order.shuffle(rng);

    let mut best: Option<Best> = None;
    let mut scanned = 0;
    let mut vals: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
    for &f in &order {
        if scanned == mtry {
            break;
        }
        vals.clear();
        vals.extend(rows.iter().map(|&i| {
            let c = f64::from(counts[i]);
            (data.at(i, f), c, if data.y[i] { c } else { 0.0 })
        }));
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if vals.first().map(|v| v.0) == vals.last().map(|v| v.0) {
            continue;
        }
        scanned += 1;

        let (w_tot, p_tot) = vals.iter().fold((0.0, 0.0), |(w, p), v| (w + v.1, p + v.2));
        let (mut wl, mut pl) = (0.0, 0.0);
        for k in 0..vals.len() - 1 {
            wl += vals[k].1;
            pl += vals[k].2;
            if vals[k].0 == vals[k + 1].0 {
                continue;
            }
            let wr = w_tot - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let impurity = gini_mass(wl, pl) + gini_mass(wr, p_tot - pl);
            let threshold = vals[k].0 + (vals[k + 1].0 - vals[k].0) / 2.0;
            let better = match &best {
                None => true,
                Some(b) => {
                    impurity < b.impurity
                        || (impurity == b.impurity
                            && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                }
            };
            if better {
                best = Some(Best {
                    impurity,
                    feature: f,
                    threshold,
                });
            }
        }
    }
    best
}
