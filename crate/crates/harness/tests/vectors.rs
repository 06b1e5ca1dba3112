use safekeeper_harness::vectors;

/// The exported file is what the browser demo tests against, so it must
/// match what this build produces.
#[test]
fn exported_file_is_current() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../test-vectors/safekeeper-vectors.json"
    );
    let on_disk: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let fresh = serde_json::to_value(vectors::generate()).unwrap();
    assert_eq!(
        on_disk, fresh,
        "regenerate with `harness vectors --out test-vectors/safekeeper-vectors.json`"
    );
}
