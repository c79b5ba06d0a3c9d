use synthaug::data::{FeatureSpec, Record, Schema};
use synthaug::prompt::{build_prompt, PromptVariant, HEART_CONTEXT};

const TAILORED: &str = include_str!("fixtures/prompts/tailored.txt");
const GENERIC: &str = include_str!("fixtures/prompts/generic.txt");

fn schema() -> Schema {
    Schema::new(
        vec![
            FeatureSpec::numeric("Age", Some([0.0, 120.0])),
            FeatureSpec::binary("Sex (Male)"),
            FeatureSpec::categorical("Smoker", ["never", "current", "former"]),
            FeatureSpec::numeric("SBP", None),
        ],
        "race",
        vec!["White".into(), "Asian".into()],
        vec!["CVD".into(), "Death".into()],
    )
    .unwrap()
}

fn examples() -> Vec<Record> {
    [
        ([54.0, 1.0, 0.0, 128.25], [false, false]),
        ([61.5, 0.0, 1.0, 141.0], [true, false]),
        ([47.0, 1.0, 2.0, 119.333_333_3], [false, true]),
    ]
    .into_iter()
    .map(|(f, o)| Record {
        features: f.to_vec(),
        outcomes: o.to_vec(),
    })
    .collect()
}

#[test]
fn tailored_prompt_matches_golden() {
    let p = build_prompt(&schema(), &examples(), HEART_CONTEXT, PromptVariant::GroupTailored("Asian".into()), 10)
        .unwrap();
    p.validate(&schema()).unwrap();
    assert_eq!(p.render(), TAILORED);
    assert!(TAILORED.contains("specifically for Asian patients"));
}

#[test]
fn generic_prompt_matches_golden() {
    let p = build_prompt(&schema(), &examples(), HEART_CONTEXT, PromptVariant::Generic, 10).unwrap();
    assert_eq!(p.render(), GENERIC);
    assert!(!GENERIC.contains("specifically for"));
}

#[test]
fn goldens_carry_required_phrases() {
    for text in [TAILORED, GENERIC] {
        for phrase in [
            "You are a synthetic data generator.",
            "DO NOT COPY THE EXAMPLES",
            "Use the same JSON format as above",
        ] {
            assert!(text.contains(phrase), "missing {phrase:?}");
        }
        assert_eq!(text.split("\n\n").count(), 4);
    }
}

#[test]
fn hash_tracks_content() {
    let s = schema();
    let a = build_prompt(&s, &examples(), HEART_CONTEXT, PromptVariant::Generic, 10).unwrap();
    let b = build_prompt(&s, &examples(), HEART_CONTEXT, PromptVariant::Generic, 10).unwrap();
    let c = build_prompt(&s, &examples(), HEART_CONTEXT, PromptVariant::Generic, 11).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
    assert_ne!(a.content_hash(), c.content_hash());
    assert_eq!(a.content_hash().len(), 64);
}
