use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::table::Table;
use super::DataError;

/// Default cap on whole-sample redraws when selecting prompt examples.
pub const DEFAULT_MAX_REDRAWS: usize = 1000;

/// Group labels and sizes for one training sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleParams {
    pub majority: String,
    pub minority: String,
    pub n_maj: usize,
    pub n_min: usize,
    pub k_prompt: usize,
}

impl SampleParams {
    pub fn new(majority: &str, minority: &str, n_maj: usize, n_min: usize, k_prompt: usize) -> Self {
        Self {
            majority: majority.to_string(),
            minority: minority.to_string(),
            n_maj,
            n_min,
            k_prompt,
        }
    }
}

/// One experiment's partition of the table into training rows, prompt
/// examples and holdout.
///
/// All four index sets are disjoint and together cover every table row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSample {
    pub majority: String,
    pub minority: String,
    pub majority_rows: Vec<usize>,
    pub minority_rows: Vec<usize>,
    pub prompt_example_rows: Vec<usize>,
    /// Ascending row indices.
    pub holdout_rows: Vec<usize>,
    pub seed: u64,
}

impl GroupSample {
    /// Replaces the prompt examples and recomputes the holdout as the complement.
    pub fn with_prompt_examples(&self, table: &Table, prompt_rows: Vec<usize>) -> GroupSample {
        let mut used = vec![false; table.len()];
        for &i in self.majority_rows.iter().chain(&self.minority_rows).chain(&prompt_rows) {
            used[i] = true;
        }
        GroupSample {
            prompt_example_rows: prompt_rows,
            holdout_rows: (0..table.len()).filter(|&i| !used[i]).collect(),
            ..self.clone()
        }
    }

    /// Holdout rows belonging to `group`.
    pub fn holdout_in_group(&self, table: &Table, group: usize) -> Vec<usize> {
        self.holdout_rows
            .iter()
            .copied()
            .filter(|&i| table.group_of(i) == group)
            .collect()
    }

    /// Rows not used for training, in ascending order.
    pub fn non_training_rows(&self, table: &Table) -> Vec<usize> {
        let mut used = vec![false; table.len()];
        for &i in self.majority_rows.iter().chain(&self.minority_rows) {
            used[i] = true;
        }
        (0..table.len()).filter(|&i| !used[i]).collect()
    }
}

/// Draws majority, minority and prompt-example rows uniformly without
/// replacement; everything else becomes holdout.
///
/// Prompt examples come from the minority group and are disjoint from the
/// minority training rows, so the minority must supply `n_min + k_prompt` rows.
pub fn sample_groups(
    table: &Table,
    params: &SampleParams,
    seed: u64,
) -> Result<GroupSample, DataError> {
    let schema = table.schema();
    let maj = schema.require_group(&params.majority)?;
    let min = schema.require_group(&params.minority)?;
    if maj == min {
        return Err(DataError::InvalidTable(
            "majority and minority must be different groups".into(),
        ));
    }
    let maj_pool = table.rows_in_group(maj);
    let min_pool = table.rows_in_group(min);
    if maj_pool.len() < params.n_maj {
        return Err(DataError::InsufficientGroup {
            group: params.majority.clone(),
            available: maj_pool.len(),
            required: params.n_maj,
        });
    }
    let min_needed = params.n_min + params.k_prompt;
    if min_pool.len() < min_needed {
        return Err(DataError::InsufficientGroup {
            group: params.minority.clone(),
            available: min_pool.len(),
            required: min_needed,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let majority_rows: Vec<usize> = index::sample(&mut rng, maj_pool.len(), params.n_maj)
        .into_iter()
        .map(|i| maj_pool[i])
        .collect();
    let drawn: Vec<usize> = index::sample(&mut rng, min_pool.len(), min_needed)
        .into_iter()
        .map(|i| min_pool[i])
        .collect();
    let (minority_rows, prompt_rows) = drawn.split_at(params.n_min);

    let partial = GroupSample {
        majority: params.majority.clone(),
        minority: params.minority.clone(),
        majority_rows,
        minority_rows: minority_rows.to_vec(),
        prompt_example_rows: Vec::new(),
        holdout_rows: Vec::new(),
        seed,
    };
    Ok(partial.with_prompt_examples(table, prompt_rows.to_vec()))
}

/// Draws `k` rows from `pool` such that every listed outcome has at least one
/// positive, redrawing the whole sample up to `max_redraws` times.
pub fn select_prompt_examples(
    table: &Table,
    pool: &[usize],
    outcomes: &[usize],
    k: usize,
    seed: u64,
    max_redraws: usize,
) -> Result<Vec<usize>, DataError> {
    if k > pool.len() {
        return Err(DataError::InsufficientGroup {
            group: "prompt example pool".into(),
            available: pool.len(),
            required: k,
        });
    }
    let schema = table.schema();
    for &o in outcomes {
        let positives = table.positives(pool, o);
        if positives == 0 || k == 0 {
            return Err(DataError::ConstraintInfeasible {
                outcome: schema.outcomes[o].clone(),
                reason: format!("{positives} positives among {} candidate rows", pool.len()),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..=max_redraws {
        let draw: Vec<usize> = index::sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        if outcomes.iter().all(|&o| table.positives(&draw, o) > 0) {
            return Ok(draw);
        }
    }
    let outcome = outcomes
        .iter()
        .map(|&o| schema.outcomes[o].clone())
        .collect::<Vec<_>>()
        .join(", ");
    Err(DataError::ConstraintInfeasible {
        outcome,
        reason: format!("no valid draw after {max_redraws} redraws"),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;
    use std::sync::Arc;

    use super::*;
    use crate::data::{FeatureSpec, Record, Schema};

    /// `sizes[g]` rows per group; outcome 0 positive on every `pos_every[g]`-th row.
    fn table(sizes: &[usize], pos_every: &[usize]) -> Table {
        let labels: Vec<String> = (0..sizes.len()).map(|g| format!("g{g}")).collect();
        let schema = Schema::new(
            vec![FeatureSpec::numeric("x", None)],
            "group",
            labels,
            vec!["y".into(), "z".into()],
        )
        .unwrap();
        let mut records = Vec::new();
        let mut groups = Vec::new();
        for (g, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                let pos = pos_every[g] > 0 && i % pos_every[g] == 0;
                records.push(Record {
                    features: vec![i as f64],
                    outcomes: vec![pos, i % 2 == 0],
                });
                groups.push(g);
            }
        }
        Table::new(Arc::new(schema), records, groups).unwrap()
    }

    #[test]
    fn paper_sizes_partition() {
        let t = table(&[5000, 800], &[7, 7]);
        let s = sample_groups(&t, &SampleParams::new("g0", "g1", 1000, 100, 20), 11).unwrap();
        assert_eq!(s.majority_rows.len(), 1000);
        assert_eq!(s.minority_rows.len(), 100);
        assert_eq!(s.prompt_example_rows.len(), 20);
        assert_eq!(s.holdout_rows.len(), 4680);

        let mut all = HashSet::new();
        for &i in s
            .majority_rows
            .iter()
            .chain(&s.minority_rows)
            .chain(&s.prompt_example_rows)
            .chain(&s.holdout_rows)
        {
            assert!(all.insert(i), "row {i} appears twice");
        }
        assert_eq!(all.len(), t.len());
        assert!(s.majority_rows.iter().all(|&i| t.group_of(i) == 0));
        assert!(s
            .minority_rows
            .iter()
            .chain(&s.prompt_example_rows)
            .all(|&i| t.group_of(i) == 1));
    }

    #[test]
    fn deterministic_under_seed() {
        let t = table(&[300, 200], &[5, 5]);
        let p = SampleParams::new("g0", "g1", 100, 50, 20);
        assert_eq!(sample_groups(&t, &p, 3).unwrap(), sample_groups(&t, &p, 3).unwrap());
        assert_ne!(sample_groups(&t, &p, 3).unwrap(), sample_groups(&t, &p, 4).unwrap());
    }

    #[test]
    fn sensitivity_sizes() {
        let t = table(&[2000, 300], &[5, 5]);
        for n_min in [50, 100, 200] {
            let s = sample_groups(&t, &SampleParams::new("g0", "g1", 1000, n_min, 20), 1).unwrap();
            assert_eq!(s.minority_rows.len(), n_min);
        }
    }

    #[test]
    fn insufficient_minority() {
        let t = table(&[2000, 90], &[5, 5]);
        match sample_groups(&t, &SampleParams::new("g0", "g1", 1000, 100, 0), 1) {
            Err(DataError::InsufficientGroup {
                group,
                available,
                required,
            }) => {
                assert_eq!(group, "g1");
                assert_eq!((available, required), (90, 100));
            }
            other => panic!("unexpected {other:?}"),
        }
        // prompt examples count toward the minority requirement
        let t = table(&[2000, 210], &[5, 5]);
        assert!(sample_groups(&t, &SampleParams::new("g0", "g1", 1000, 200, 20), 1).is_err());
    }

    #[test]
    fn prompt_examples_first_draw_kept() {
        let t = table(&[10, 40], &[1, 1]);
        let pool = t.rows_in_group(1);
        let a = select_prompt_examples(&t, &pool, &[0, 1], 20, 5, 0).unwrap();
        assert_eq!(a.len(), 20);
        let direct: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            index::sample(&mut rng, pool.len(), 20)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        };
        assert_eq!(a, direct);
    }

    #[test]
    fn rare_outcome_always_covered() {
        // 3 positives among 111 rows
        let t = table(&[10, 111], &[0, 37]);
        let pool = t.rows_in_group(1);
        assert_eq!(t.positives(&pool, 0), 3);
        for seed in 0..1000 {
            let rows = select_prompt_examples(&t, &pool, &[0, 1], 20, seed, DEFAULT_MAX_REDRAWS)
                .unwrap();
            assert_eq!(rows.len(), 20);
            assert!(t.positives(&rows, 0) >= 1);
            assert!(t.positives(&rows, 1) >= 1);
        }
    }

    #[test]
    fn zero_positive_outcome_is_infeasible() {
        let t = table(&[10, 111], &[0, 0]);
        let pool = t.rows_in_group(1);
        assert!(matches!(
            select_prompt_examples(&t, &pool, &[0], 20, 1, 10),
            Err(DataError::ConstraintInfeasible { .. })
        ));
    }
}
