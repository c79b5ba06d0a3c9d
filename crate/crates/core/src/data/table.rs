use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::schema::{FeatureKind, FeatureSpec, Schema};
use super::DataError;

/// Feature and outcome values of one row, without group membership.
///
/// Features follow schema order. Binary features hold 0.0/1.0 and categorical
/// features hold the category index.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub features: Vec<f64>,
    pub outcomes: Vec<bool>,
}

/// Immutable, schema-validated dataset.
#[derive(Debug, Clone)]
pub struct Table {
    schema: Arc<Schema>,
    records: Vec<Record>,
    groups: Vec<usize>,
}

impl Table {
    /// Builds a table, validating every row against the schema.
    pub fn new(
        schema: Arc<Schema>,
        records: Vec<Record>,
        groups: Vec<usize>,
    ) -> Result<Self, DataError> {
        if records.len() != groups.len() {
            return Err(DataError::InvalidTable(format!(
                "{} records but {} group labels",
                records.len(),
                groups.len()
            )));
        }
        for (i, (rec, &g)) in records.iter().zip(&groups).enumerate() {
            check_record(&schema, rec).map_err(|e| e.at_row(i + 1))?;
            if g >= schema.group_labels.len() {
                return Err(DataError::InvalidTable(format!(
                    "row {}: group index {g} out of range",
                    i + 1
                )));
            }
        }
        Ok(Self {
            schema,
            records,
            groups,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &Record {
        &self.records[i]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn group_label(&self, i: usize) -> &str {
        &self.schema.group_labels[self.groups[i]]
    }

    /// Row indices belonging to `group`, in table order.
    pub fn rows_in_group(&self, group: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == group).collect()
    }

    pub fn group_count(&self, group: usize) -> usize {
        self.groups.iter().filter(|&&g| g == group).count()
    }

    /// Number of positive outcomes among `rows`.
    pub fn positives(&self, rows: &[usize], outcome: usize) -> usize {
        rows.iter()
            .filter(|&&i| self.records[i].outcomes[outcome])
            .count()
    }

    /// Writes the table as CSV: features, group column, outcomes.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = self
            .schema
            .features
            .iter()
            .map(|f| f.name.as_str())
            .chain(std::iter::once(self.schema.group_column.as_str()))
            .chain(self.schema.outcomes.iter().map(String::as_str))
            .collect();
        w.write_record(&header)?;
        for (rec, &g) in self.records.iter().zip(&self.groups) {
            let mut fields = format_features(&self.schema, &rec.features);
            fields.push(self.schema.group_labels[g].clone());
            fields.extend(rec.outcomes.iter().map(|&o| if o { "1" } else { "0" }.to_string()));
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub(crate) fn format_features(schema: &Schema, values: &[f64]) -> Vec<String> {
    schema
        .features
        .iter()
        .zip(values)
        .map(|(f, &v)| match f.kind {
            FeatureKind::Categorical => f.categories[v as usize].clone(),
            FeatureKind::Binary => format!("{}", v as u8),
            FeatureKind::Numeric => format!("{v}"),
        })
        .collect()
}

/// Validates a feature value against its spec.
pub(crate) fn check_value(spec: &FeatureSpec, value: f64) -> Result<(), DataError> {
    match spec.kind {
        FeatureKind::Numeric => {
            if !value.is_finite() {
                return Err(DataError::parse(0, &spec.name, "non-finite value"));
            }
            if let Some([lo, hi]) = spec.bounds {
                if value < lo || value > hi {
                    return Err(DataError::BoundsViolation {
                        row: 0,
                        column: spec.name.clone(),
                        value,
                    });
                }
            }
        }
        FeatureKind::Binary => {
            if value != 0.0 && value != 1.0 {
                return Err(DataError::parse(0, &spec.name, "binary value must be 0 or 1"));
            }
        }
        FeatureKind::Categorical => {
            if value.fract() != 0.0 || value < 0.0 || value as usize >= spec.categories.len() {
                return Err(DataError::parse(0, &spec.name, "category index out of range"));
            }
        }
    }
    Ok(())
}

pub(crate) fn check_record(schema: &Schema, rec: &Record) -> Result<(), DataError> {
    if rec.features.len() != schema.features.len() || rec.outcomes.len() != schema.outcomes.len()
    {
        return Err(DataError::InvalidTable(format!(
            "record has {} features / {} outcomes, schema expects {} / {}",
            rec.features.len(),
            rec.outcomes.len(),
            schema.features.len(),
            schema.outcomes.len()
        )));
    }
    for (spec, &v) in schema.features.iter().zip(&rec.features) {
        check_value(spec, v)?;
    }
    Ok(())
}

enum Column {
    Feature(usize),
    Group,
    Outcome(usize),
}

/// Reads a CSV dataset and validates every row against `schema`.
///
/// Row numbers in errors count data rows from 1, excluding the header.
pub fn read_table<R: Read>(reader: R, schema: Arc<Schema>) -> Result<Table, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    let mut expected: HashMap<&str, Column> = HashMap::new();
    for (i, f) in schema.features.iter().enumerate() {
        expected.insert(f.name.as_str(), Column::Feature(i));
    }
    expected.insert(schema.group_column.as_str(), Column::Group);
    for (i, o) in schema.outcomes.iter().enumerate() {
        expected.insert(o.as_str(), Column::Outcome(i));
    }

    let mut layout = Vec::with_capacity(headers.len());
    let mut seen = std::collections::HashSet::new();
    for h in headers.iter() {
        let Some(col) = expected.get(h) else {
            return Err(DataError::SchemaMismatch(format!("unexpected column {h:?}")));
        };
        if !seen.insert(h.to_string()) {
            return Err(DataError::SchemaMismatch(format!("duplicate column {h:?}")));
        }
        layout.push(match col {
            Column::Feature(i) => Column::Feature(*i),
            Column::Group => Column::Group,
            Column::Outcome(i) => Column::Outcome(*i),
        });
    }
    for name in expected.keys() {
        if !seen.contains(*name) {
            return Err(DataError::SchemaMismatch(format!("missing column {name:?}")));
        }
    }

    let mut records = Vec::new();
    let mut groups = Vec::new();
    for (idx, result) in rdr.records().enumerate() {
        let row = idx + 1;
        let raw = result?;
        if raw.len() != layout.len() {
            return Err(DataError::parse(
                row,
                "",
                &format!("expected {} fields, found {}", layout.len(), raw.len()),
            ));
        }
        let mut features = vec![0.0; schema.features.len()];
        let mut outcomes = vec![false; schema.outcomes.len()];
        let mut group = 0;
        for (cell, col) in raw.iter().zip(&layout) {
            match *col {
                Column::Feature(i) => {
                    let spec = &schema.features[i];
                    features[i] = parse_feature(spec, cell).map_err(|e| e.at_row(row))?;
                }
                Column::Group => {
                    group = schema.group_index(cell).ok_or_else(|| {
                        DataError::parse(row, &schema.group_column, &format!("unknown group {cell:?}"))
                    })?;
                }
                Column::Outcome(i) => {
                    outcomes[i] = parse_binary(cell)
                        .ok_or_else(|| {
                            DataError::parse(row, &schema.outcomes[i], &format!("{cell:?} is not 0/1"))
                        })?
                        == 1.0;
                }
            }
        }
        records.push(Record { features, outcomes });
        groups.push(group);
    }
    Ok(Table {
        schema,
        records,
        groups,
    })
}

/// Loads a CSV file; see [`read_table`].
pub fn load_table(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Table, DataError> {
    let file = std::fs::File::open(path.as_ref())?;
    read_table(std::io::BufReader::new(file), schema)
}

fn parse_binary(cell: &str) -> Option<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v == 0.0 || v == 1.0 => Some(v),
        _ => None,
    }
}

fn parse_feature(spec: &FeatureSpec, cell: &str) -> Result<f64, DataError> {
    if cell.is_empty() {
        return Err(DataError::parse(0, &spec.name, "missing value"));
    }
    let value = match spec.kind {
        FeatureKind::Numeric => cell
            .parse::<f64>()
            .map_err(|_| DataError::parse(0, &spec.name, &format!("cannot parse {cell:?} as a number")))?,
        FeatureKind::Binary => parse_binary(cell)
            .ok_or_else(|| DataError::parse(0, &spec.name, &format!("{cell:?} is not 0/1")))?,
        FeatureKind::Categorical => spec
            .category_index(cell)
            .ok_or_else(|| DataError::parse(0, &spec.name, &format!("unknown category {cell:?}")))?
            as f64,
    };
    check_value(spec, value)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec![
                    FeatureSpec::numeric("Age", Some([0.0, 120.0])),
                    FeatureSpec::binary("Sex (Male)"),
                    FeatureSpec::categorical("Smoker", ["never", "current"]),
                ],
                "race",
                vec!["White".into(), "Asian".into()],
                vec!["CHD".into()],
            )
            .unwrap(),
        )
    }

    fn csv_with_rows(n: usize) -> String {
        let mut s = String::from("Age,Sex (Male),Smoker,race,CHD\n");
        for i in 0..n {
            let group = if i % 3 == 0 { "Asian" } else { "White" };
            let smoker = if i % 2 == 0 { "never" } else { "current" };
            s.push_str(&format!("{},{},{smoker},{group},{}\n", 20 + i, i % 2, (i % 5 == 0) as u8));
        }
        s
    }

    #[test]
    fn ingests_valid_rows_in_order() {
        let t = read_table(csv_with_rows(50).as_bytes(), schema()).unwrap();
        assert_eq!(t.len(), 50);
        assert_eq!(t.record(7).features, vec![27.0, 1.0, 1.0]);
        assert_eq!(t.group_label(0), "Asian");
        assert_eq!(t.group_label(1), "White");
        assert!(t.record(5).outcomes[0]);
    }

    #[test]
    fn column_order_is_free() {
        let text = "race,CHD,Smoker,Sex (Male),Age\nAsian,1,current,0,33.5\n";
        let t = read_table(text.as_bytes(), schema()).unwrap();
        assert_eq!(t.record(0).features, vec![33.5, 0.0, 1.0]);
    }

    #[test]
    fn missing_group_column() {
        let text = "Age,Sex (Male),Smoker,CHD\n30,1,never,0\n";
        let err = read_table(text.as_bytes(), schema()).unwrap_err();
        assert!(matches!(err, DataError::SchemaMismatch(ref m) if m.contains("race")), "{err}");
    }

    #[test]
    fn extra_column() {
        let text = "Age,Sex (Male),Smoker,race,CHD,BMI\n30,1,never,White,0,22\n";
        assert!(matches!(
            read_table(text.as_bytes(), schema()),
            Err(DataError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let mut text = csv_with_rows(10);
        text = text
            .lines()
            .enumerate()
            .map(|(i, l)| if i == 7 { l.replacen("26", "abc", 1) } else { l.to_string() })
            .collect::<Vec<_>>()
            .join("\n");
        match read_table(text.as_bytes(), schema()).unwrap_err() {
            DataError::ParseError { row, column, .. } => {
                assert_eq!(row, 7);
                assert_eq!(column, "Age");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bounds_and_missing_values() {
        let text = "Age,Sex (Male),Smoker,race,CHD\n130,1,never,White,0\n";
        assert!(matches!(
            read_table(text.as_bytes(), schema()),
            Err(DataError::BoundsViolation { row: 1, .. })
        ));
        let text = "Age,Sex (Male),Smoker,race,CHD\n30,,never,White,0\n";
        assert!(matches!(
            read_table(text.as_bytes(), schema()),
            Err(DataError::ParseError { row: 1, .. })
        ));
        let text = "Age,Sex (Male),Smoker,race,CHD\n30,2,never,White,0\n";
        assert!(read_table(text.as_bytes(), schema()).is_err());
        let text = "Age,Sex (Male),Smoker,race,CHD\n30,1,sometimes,White,0\n";
        assert!(read_table(text.as_bytes(), schema()).is_err());
    }

    #[test]
    fn csv_write_read_round_trip() {
        let t = read_table(csv_with_rows(20).as_bytes(), schema()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_table(buf.as_slice(), schema()).unwrap();
        assert_eq!(back.records(), t.records());
        assert_eq!(back.groups(), t.groups());
    }
}
