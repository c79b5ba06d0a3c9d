use ndarray::Array2;

use super::schema::{FeatureKind, Schema};
use super::table::Record;

/// Kind of an encoded model column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// Member of the dummy block for categorical feature `feature`.
    OneHot { feature: usize },
}

/// Maps schema-ordered feature values to model columns.
///
/// Numeric and binary features take one column each; a categorical feature
/// with `c` categories becomes `c - 1` dummies with the first category dropped.
#[derive(Debug, Clone)]
pub struct Encoder {
    kinds: Vec<ColumnKind>,
    names: Vec<String>,
    /// First encoded column of each schema feature.
    offsets: Vec<usize>,
}

impl Encoder {
    pub fn new(schema: &Schema) -> Self {
        let mut kinds = Vec::new();
        let mut names = Vec::new();
        let mut offsets = Vec::with_capacity(schema.features.len());
        for (fi, f) in schema.features.iter().enumerate() {
            offsets.push(kinds.len());
            match f.kind {
                FeatureKind::Numeric => {
                    kinds.push(ColumnKind::Continuous);
                    names.push(f.name.clone());
                }
                FeatureKind::Binary => {
                    kinds.push(ColumnKind::Binary);
                    names.push(f.name.clone());
                }
                FeatureKind::Categorical => {
                    for cat in &f.categories[1..] {
                        kinds.push(ColumnKind::OneHot { feature: fi });
                        names.push(format!("{}={}", f.name, cat));
                    }
                }
            }
        }
        Self {
            kinds,
            names,
            offsets,
        }
    }

    pub fn width(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn encode_into(&self, schema: &Schema, features: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width());
        for (fi, f) in schema.features.iter().enumerate() {
            let at = self.offsets[fi];
            match f.kind {
                FeatureKind::Numeric | FeatureKind::Binary => out[at] = features[fi],
                FeatureKind::Categorical => {
                    let n = f.categories.len() - 1;
                    out[at..at + n].iter_mut().for_each(|v| *v = 0.0);
                    let idx = features[fi] as usize;
                    if idx > 0 {
                        out[at + idx - 1] = 1.0;
                    }
                }
            }
        }
    }

    pub fn encode(&self, schema: &Schema, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(schema, features, &mut out);
        out
    }

    /// Encodes records into a row-major matrix.
    pub fn encode_records<'a>(
        &self,
        schema: &Schema,
        records: impl IntoIterator<Item = &'a Record>,
    ) -> Array2<f64> {
        let rows: Vec<&Record> = records.into_iter().collect();
        let mut m = Array2::zeros((rows.len(), self.width()));
        for (r, rec) in rows.iter().enumerate() {
            let mut row = m.row_mut(r);
            let slice = row.as_slice_mut().expect("standard layout");
            self.encode_into(schema, &rec.features, slice);
        }
        m
    }

    /// Inverse of [`Encoder::encode`] for valid encodings.
    pub fn decode(&self, schema: &Schema, encoded: &[f64]) -> Vec<f64> {
        schema
            .features
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let at = self.offsets[fi];
                match f.kind {
                    FeatureKind::Numeric | FeatureKind::Binary => encoded[at],
                    FeatureKind::Categorical => {
                        let n = f.categories.len() - 1;
                        encoded[at..at + n]
                            .iter()
                            .position(|&v| v == 1.0)
                            .map_or(0.0, |p| (p + 1) as f64)
                    }
                }
            })
            .collect()
    }
}
