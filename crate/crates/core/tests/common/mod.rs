#![allow(dead_code)]

pub mod oracles;

use synthaug::data::{
    FeatureDistribution, FeatureSpec, FixtureSpec, GroupFixture, OutcomeModel, PairCorrelation,
    Record, Schema,
};

pub const OUTCOMES: [&str; 2] = ["y1", "y2"];

/// Three numeric features, one binary and one three-level categorical; two outcomes.
pub fn schema(labels: &[&str]) -> Schema {
    Schema::new(
        vec![
            FeatureSpec::numeric("x1", Some([-8.0, 8.0])),
            FeatureSpec::numeric("x2", Some([-8.0, 8.0])),
            FeatureSpec::numeric("x3", None),
            FeatureSpec::binary("flag"),
            FeatureSpec::categorical("site", ["north", "south", "east"]),
        ],
        "group",
        labels.iter().map(|s| s.to_string()).collect(),
        OUTCOMES.iter().map(|s| s.to_string()).collect(),
    )
    .expect("valid schema")
}

fn features(shift: f64) -> Vec<FeatureDistribution> {
    vec![
        FeatureDistribution::Normal { mean: shift, sd: 1.0 },
        FeatureDistribution::Normal { mean: -shift, sd: 1.0 },
        FeatureDistribution::Normal { mean: 10.0, sd: 2.0 },
        FeatureDistribution::Bernoulli { p: 0.4 },
        FeatureDistribution::Categorical { probs: vec![0.5, 0.3, 0.2] },
    ]
}

fn outcome(coefficients: [f64; 6], prevalence: f64) -> OutcomeModel {
    OutcomeModel {
        coefficients: coefficients.to_vec(),
        intercept: None,
        prevalence: Some(prevalence),
    }
}

/// The first label is the majority. Minority groups depend on `x2` where the
/// majority depends on `x1`, so pooled models transfer poorly.
pub fn designed_spec(groups: &[(&str, usize)]) -> FixtureSpec {
    let labels: Vec<&str> = groups.iter().map(|g| g.0).collect();
    let groups = groups
        .iter()
        .enumerate()
        .map(|(i, &(label, size))| {
            let (f, o) = if i == 0 {
                (
                    features(0.0),
                    vec![
                        outcome([1.6, 0.0, 0.2, 0.4, 0.3, -0.3], 0.25),
                        outcome([0.0, 0.2, 0.5, -0.5, 0.8, 0.0], 0.15),
                    ],
                )
            } else {
                (
                    features(0.3),
                    vec![
                        outcome([0.0, 1.6, 0.2, 0.4, 0.3, -0.3], 0.25),
                        outcome([1.2, 0.0, 0.5, -0.5, 0.0, 0.8], 0.15),
                    ],
                )
            };
            GroupFixture {
                label: label.to_string(),
                size,
                features: f,
                correlations: vec![PairCorrelation {
                    a: "x1".into(),
                    b: "x3".into(),
                    rho: 0.3,
                }],
                outcomes: o,
            }
        })
        .collect();
    FixtureSpec {
        schema: schema(&labels),
        groups,
    }
}

/// Majority and minority feature distributions far apart on every numeric feature.
pub fn separable_spec(majority: usize, minority: usize) -> FixtureSpec {
    let mut spec = designed_spec(&[("A", majority), ("B", minority)]);
    spec.groups[1].features[0] = FeatureDistribution::Normal { mean: 6.0, sd: 0.5 };
    spec.groups[1].features[1] = FeatureDistribution::Normal { mean: 6.0, sd: 0.5 };
    spec.groups[0].features[0] = FeatureDistribution::Normal { mean: -6.0, sd: 0.5 };
    spec.groups[0].features[1] = FeatureDistribution::Normal { mean: -6.0, sd: 0.5 };
    spec
}

pub fn record(features: &[f64], outcomes: &[bool]) -> Record {
    Record {
        features: features.to_vec(),
        outcomes: outcomes.to_vec(),
    }
}

/// Appends outcome `name` with one model per group, in group order.
pub fn add_outcome(spec: &mut FixtureSpec, name: &str, models: Vec<OutcomeModel>) {
    spec.schema.outcomes.push(name.to_string());
    for (g, m) in spec.groups.iter_mut().zip(models) {
        g.outcomes.push(m);
    }
}

/// An outcome that is essentially never positive.
pub fn never() -> OutcomeModel {
    OutcomeModel {
        coefficients: vec![0.0; 6],
        intercept: Some(-60.0),
        prevalence: None,
    }
}

pub fn prevalent(p: f64) -> OutcomeModel {
    outcome([0.5, 0.5, 0.0, 0.0, 0.0, 0.0], p)
}
