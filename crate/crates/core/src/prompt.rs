//! The four-section generation prompt: role, context, examples, instructions.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{FeatureKind, Record, Schema};
use crate::genclient::parse_columns;

pub const ROLE_TEXT: &str = "You are a synthetic data generator. Your goal is to produce data which \
mirrors the given examples in causal structure and feature and label distributions but also \
produce as diverse samples as possible. I will give you real examples first.";

pub const INSTRUCTIONS_TEXT: &str = "DO NOT COPY THE EXAMPLES but generate realistic but new and \
diverse samples which have the correct labels conditioned on the features. Use the same JSON \
format as above.";

/// Default dataset context for emergency-department admission data.
pub const HOSPITAL_CONTEXT: &str = "hospital admissions and readmission";
/// Default dataset context for cardiovascular cohort data.
pub const HEART_CONTEXT: &str = "heart disease risk factors and outcomes";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("no example rows to serialize")]
    EmptyExamples,
    #[error("invalid prompt: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    /// Names the target group and uses that group's rows as examples.
    GroupTailored(String),
    Generic,
}

impl PromptVariant {
    pub fn group_label(&self) -> Option<&str> {
        match self {
            PromptVariant::GroupTailored(label) => Some(label),
            PromptVariant::Generic => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub role_text: String,
    pub context_text: String,
    pub examples_json: String,
    pub instructions_text: String,
    pub variant: PromptVariant,
    pub n_generate: usize,
}

impl PromptSpec {
    /// Checks the section and example-format invariants against `schema`.
    pub fn validate(&self, schema: &Schema) -> Result<(), PromptError> {
        for (name, text) in [
            ("role", &self.role_text),
            ("context", &self.context_text),
            ("examples", &self.examples_json),
            ("instructions", &self.instructions_text),
        ] {
            if text.trim().is_empty() {
                return Err(PromptError::Invalid(format!("empty {name} section")));
            }
        }
        parse_columns(&self.examples_json, schema, None, false)
            .map_err(|e| PromptError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Sections in order, separated by one blank line.
    pub fn render(&self) -> String {
        [
            self.role_text.as_str(),
            &self.context_text,
            &self.examples_json,
            &self.instructions_text,
        ]
        .join("\n\n")
    }

    /// Hex SHA-256 of the rendered prompt.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.render().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Builds the prompt for `examples`; the group clause appears only in the
/// tailored variant.
pub fn build_prompt(
    schema: &Schema,
    examples: &[Record],
    dataset_context: &str,
    variant: PromptVariant,
    n_generate: usize,
) -> Result<PromptSpec, PromptError> {
    let examples_json = serialize_examples(examples, schema)?;
    let target = match &variant {
        PromptVariant::GroupTailored(label) => format!(
            "{n_generate} realistic but diverse samples specifically for {label} patients."
        ),
        PromptVariant::Generic => format!("{n_generate} realistic but diverse samples."),
    };
    Ok(PromptSpec {
        role_text: ROLE_TEXT.to_string(),
        context_text: format!("Leverage your medical knowledge about {dataset_context} to generate {target}"),
        examples_json,
        instructions_text: INSTRUCTIONS_TEXT.to_string(),
        variant,
        n_generate,
    })
}

pub fn render(prompt: &PromptSpec) -> String {
    prompt.render()
}

/// Serializes rows as a JSON object mapping each feature and outcome name to
/// its column of values, in schema order.
pub fn serialize_examples(rows: &[Record], schema: &Schema) -> Result<String, PromptError> {
    if rows.is_empty() {
        return Err(PromptError::EmptyExamples);
    }
    let mut entries = Vec::with_capacity(schema.features.len() + schema.outcomes.len());
    for (fi, f) in schema.features.iter().enumerate() {
        let values: Vec<String> = rows
            .iter()
            .map(|r| {
                let v = r.features[fi];
                match f.kind {
                    FeatureKind::Categorical => json_string(&f.categories[v as usize]),
                    FeatureKind::Binary => format!("{}", v as u8),
                    FeatureKind::Numeric => format_number(v),
                }
            })
            .collect();
        entries.push(format!("{}: [{}]", json_string(&f.name), values.join(", ")));
    }
    for (oi, name) in schema.outcomes.iter().enumerate() {
        let values: Vec<&str> = rows
            .iter()
            .map(|r| if r.outcomes[oi] { "1" } else { "0" })
            .collect();
        entries.push(format!("{}: [{}]", json_string(name), values.join(", ")));
    }
    Ok(format!("{{{}}}", entries.join(", ")))
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Integers print without a decimal point; everything else is rounded to six
/// significant digits.
pub fn format_number(v: f64) -> String {
    let rounded = if v == 0.0 || v.fract() == 0.0 {
        v
    } else {
        format!("{v:.5e}").parse::<f64>().expect("formatted float parses")
    };
    if rounded.fract() == 0.0 && rounded.abs() < 1e15 {
        format!("{}", rounded as i64)
    } else {
        format!("{rounded}")
    }
}
