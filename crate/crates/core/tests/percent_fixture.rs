//! The percent vectors shared with client code must agree with
//! `format_percent`. Set `SPLAIN_BLESS=1` to regenerate the file.

use std::path::PathBuf;

use serde_json::{json, Value};
use splain_core::template::format_percent;

const INPUTS: &[f64] = &[
    0.53, 0.484, 0.70905, 0.7166, 0.7015, 0.0, 1.0, 0.5, 0.123456, 0.99995, 0.00005, 0.00004, 0.1, 0.333333, 0.666666,
    0.125, 0.0125, 0.999949, 0.25, 0.75,
];

fn path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/percent_vectors.json")
}

fn expected() -> Value {
    let vectors: Vec<Value> = INPUTS
        .iter()
        .map(|&x| json!({ "value": x, "text": format_percent(x).unwrap() }))
        .collect();
    json!({ "vectors": vectors })
}

#[test]
fn shared_vectors_match_formatter() {
    if std::env::var_os("SPLAIN_BLESS").is_some() {
        let text = serde_json::to_string_pretty(&expected()).unwrap();
        std::fs::write(path(), text + "\n").unwrap();
    }
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(path()).unwrap()).unwrap();
    for v in on_disk["vectors"].as_array().unwrap() {
        let x = v["value"].as_f64().unwrap();
        assert_eq!(format_percent(x).unwrap(), v["text"].as_str().unwrap(), "{x}");
    }
    assert_eq!(on_disk, expected());
}
