use serde_json::Value;

use super::GenError;
use crate::data::{FeatureKind, Record, Schema};

/// Fraction of a numeric feature's declared span tolerated outside its bounds.
pub const RANGE_SLACK: f64 = 0.2;

/// Parses a dict-of-lists response into exactly `n_expected` records.
///
/// Keys must equal the schema's feature and outcome names. Numeric values
/// further than 20% of the declared span outside the bounds are rejected.
pub fn parse_batch(text: &str, schema: &Schema, n_expected: usize) -> Result<Vec<Record>, GenError> {
    parse_columns(text, schema, Some(n_expected), true)
}

/// Column-oriented JSON parser shared by prompt validation, the mock backend
/// and response validation. With `n_expected = None` all arrays must share
/// one non-zero length.
pub fn parse_columns(
    text: &str,
    schema: &Schema,
    n_expected: Option<usize>,
    enforce_range: bool,
) -> Result<Vec<Record>, GenError> {
    let malformed = |m: String| GenError::MalformedResponse(m);
    let value: Value = serde_json::from_str(text.trim())
        .map_err(|e| malformed(format!("not valid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(malformed("top-level value is not an object".into()));
    };
    let expected: Vec<&str> = schema.record_columns().collect();
    for key in map.keys() {
        if !expected.contains(&key.as_str()) {
            return Err(malformed(format!("unexpected key {key:?}")));
        }
    }
    let mut columns = Vec::with_capacity(expected.len());
    for key in &expected {
        match map.get(*key) {
            None => return Err(malformed(format!("missing key {key:?}"))),
            Some(Value::Array(a)) => columns.push(a),
            Some(_) => return Err(malformed(format!("key {key:?} does not map to an array"))),
        }
    }
    let n = match n_expected {
        Some(n) => n,
        None => columns[0].len(),
    };
    if n == 0 {
        return Err(malformed("no rows".into()));
    }
    for (key, col) in expected.iter().zip(&columns) {
        if col.len() != n {
            return Err(malformed(format!(
                "key {key:?} has {} values, expected {n}",
                col.len()
            )));
        }
    }

    let mut records: Vec<Record> = (0..n)
        .map(|_| Record {
            features: vec![0.0; schema.features.len()],
            outcomes: vec![false; schema.outcomes.len()],
        })
        .collect();
    for (fi, f) in schema.features.iter().enumerate() {
        for (i, v) in columns[fi].iter().enumerate() {
            let bad = || malformed(format!("key {:?}, index {i}: unexpected value {v}", f.name));
            records[i].features[fi] = match f.kind {
                FeatureKind::Numeric => {
                    let x = v.as_f64().filter(|x| x.is_finite()).ok_or_else(bad)?;
                    if enforce_range {
                        if let Some([lo, hi]) = f.bounds {
                            let slack = RANGE_SLACK * (hi - lo);
                            if x < lo - slack || x > hi + slack {
                                return Err(GenError::RangeViolation {
                                    key: f.name.clone(),
                                    index: i,
                                    value: x,
                                });
                            }
                        }
                    }
                    x
                }
                FeatureKind::Binary => binary(v).ok_or_else(bad)?,
                FeatureKind::Categorical => v
                    .as_str()
                    .and_then(|s| f.category_index(s))
                    .ok_or_else(bad)? as f64,
            };
        }
    }
    let offset = schema.features.len();
    for (oi, name) in schema.outcomes.iter().enumerate() {
        for (i, v) in columns[offset + oi].iter().enumerate() {
            records[i].outcomes[oi] = binary(v).ok_or_else(|| {
                malformed(format!("key {name:?}, index {i}: unexpected value {v}"))
            })? == 1.0;
        }
    }
    Ok(records)
}

fn binary(v: &Value) -> Option<f64> {
    match v {
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        _ => v.as_f64().filter(|x| *x == 0.0 || *x == 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;

    fn schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("Age", Some([0.0, 100.0])),
                FeatureSpec::binary("Sex (Male)"),
                FeatureSpec::categorical("Smoker", ["no", "yes"]),
            ],
            "race",
            vec!["A".into()],
            vec!["CHD".into(), "CVD".into()],
        )
        .unwrap()
    }

    fn body(n: usize) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("Age".into(), (0..n).map(|i| Value::from(20 + i)).collect());
        m.insert("Sex (Male)".into(), (0..n).map(|i| Value::from(i % 2)).collect());
        m.insert("Smoker".into(), (0..n).map(|_| Value::from("yes")).collect());
        m.insert("CHD".into(), (0..n).map(|i| Value::from(u8::from(i == 3))).collect());
        m.insert("CVD".into(), (0..n).map(|_| Value::from(0)).collect());
        m
    }

    fn text(m: &serde_json::Map<String, Value>) -> String {
        Value::Object(m.clone()).to_string()
    }

    #[test]
    fn happy_path() {
        let rows = parse_batch(&text(&body(10)), &schema(), 10).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[3].features, vec![23.0, 1.0, 1.0]);
        assert_eq!(rows[3].outcomes, vec![true, false]);
    }

    #[test]
    fn missing_outcome_key() {
        let mut m = body(10);
        m.remove("CVD");
        match parse_batch(&text(&m), &schema(), 10) {
            Err(GenError::MalformedResponse(msg)) => assert!(msg.contains("CVD"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_array() {
        let mut m = body(10);
        m.insert("Age".into(), (0..9).map(Value::from).collect());
        match parse_batch(&text(&m), &schema(), 10) {
            Err(GenError::MalformedResponse(msg)) => assert!(msg.contains("Age"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extra_key_and_bad_types() {
        let mut m = body(4);
        m.insert("race".into(), (0..4).map(|_| Value::from("A")).collect());
        assert!(matches!(
            parse_batch(&text(&m), &schema(), 4),
            Err(GenError::MalformedResponse(_))
        ));
        let mut m = body(4);
        m.insert("Smoker".into(), (0..4).map(|_| Value::from("sometimes")).collect());
        assert!(parse_batch(&text(&m), &schema(), 4).is_err());
        let mut m = body(4);
        m.insert("CHD".into(), (0..4).map(|_| Value::from(2)).collect());
        assert!(parse_batch(&text(&m), &schema(), 4).is_err());
        assert!(parse_batch("[1, 2]", &schema(), 4).is_err());
        assert!(parse_batch("{\"Age\": [1,", &schema(), 4).is_err());
    }

    #[test]
    fn range_policy() {
        let mut m = body(3);
        m.insert("Age".into(), vec![Value::from(-20), Value::from(120), Value::from(50)].into());
        assert_eq!(parse_batch(&text(&m), &schema(), 3).unwrap()[1].features[0], 120.0);
        m.insert("Age".into(), vec![Value::from(-20.5), Value::from(120), Value::from(50)].into());
        match parse_batch(&text(&m), &schema(), 3) {
            Err(GenError::RangeViolation { key, index, .. }) => {
                assert_eq!((key.as_str(), index), ("Age", 0))
            }
            other => panic!("{other:?}"),
        }
        // range is only enforced for responses
        assert!(parse_columns(&text(&m), &schema(), None, false).is_ok());
    }
}
