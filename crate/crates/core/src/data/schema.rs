use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Binary,
    Categorical,
}

/// One predictor column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Inclusive `[min, max]` range for numeric features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, bounds: Option<[f64; 2]>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            bounds,
            categories: Vec::new(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Binary,
            bounds: None,
            categories: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            bounds: None,
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    /// Index of `value` among the categories of a categorical feature.
    pub fn category_index(&self, value: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == value)
    }
}

/// Column layout of a dataset: predictors, the group column and binary outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub group_column: String,
    pub group_labels: Vec<String>,
    pub outcomes: Vec<String>,
}

impl Schema {
    pub fn new(
        features: Vec<FeatureSpec>,
        group_column: impl Into<String>,
        group_labels: Vec<String>,
        outcomes: Vec<String>,
    ) -> Result<Self, DataError> {
        let schema = Self {
            features,
            group_column: group_column.into(),
            group_labels,
            outcomes,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let invalid = |msg: String| Err(DataError::InvalidSchema(msg));
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return invalid("feature with empty name".into());
            }
            if !seen.insert(f.name.as_str()) {
                return invalid(format!("duplicate feature name {:?}", f.name));
            }
            match f.kind {
                FeatureKind::Numeric => {
                    if let Some([lo, hi]) = f.bounds {
                        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                            return invalid(format!("feature {:?} has invalid bounds", f.name));
                        }
                    }
                }
                FeatureKind::Categorical => {
                    if f.categories.len() < 2 {
                        return invalid(format!(
                            "categorical feature {:?} needs at least two categories",
                            f.name
                        ));
                    }
                    let distinct: HashSet<_> = f.categories.iter().collect();
                    if distinct.len() != f.categories.len() {
                        return invalid(format!("feature {:?} repeats a category", f.name));
                    }
                }
                FeatureKind::Binary => {}
            }
        }
        if self.group_column.is_empty() {
            return invalid("empty group column name".into());
        }
        if seen.contains(self.group_column.as_str()) {
            return invalid("group column is also listed as a feature".into());
        }
        if self.group_labels.is_empty() {
            return invalid("no group labels".into());
        }
        let labels: HashSet<_> = self.group_labels.iter().collect();
        if labels.len() != self.group_labels.len() {
            return invalid("duplicate group label".into());
        }
        if self.outcomes.is_empty() {
            return invalid("at least one outcome is required".into());
        }
        for o in &self.outcomes {
            if o.is_empty() {
                return invalid("outcome with empty name".into());
            }
            if seen.contains(o.as_str()) || *o == self.group_column {
                return invalid(format!("outcome {o:?} collides with another column"));
            }
        }
        let outcomes: HashSet<_> = self.outcomes.iter().collect();
        if outcomes.len() != self.outcomes.len() {
            return invalid("duplicate outcome name".into());
        }
        Ok(())
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn outcome_index(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == name)
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.group_labels.iter().position(|g| g == label)
    }

    pub fn require_group(&self, label: &str) -> Result<usize, DataError> {
        self.group_index(label)
            .ok_or_else(|| DataError::UnknownLabel(label.to_string()))
    }

    pub fn require_outcome(&self, name: &str) -> Result<usize, DataError> {
        self.outcome_index(name)
            .ok_or_else(|| DataError::UnknownOutcome(name.to_string()))
    }

    /// Feature names followed by outcome names; the key set of serialized examples.
    pub fn record_columns(&self) -> impl Iterator<Item = &str> {
        self.features
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.outcomes.iter().map(String::as_str))
    }
}
