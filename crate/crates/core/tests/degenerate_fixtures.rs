use std::path::Path;

use serde::Deserialize;
use styloshift::generate::detect_degenerate;

#[derive(Deserialize)]
struct Labels {
    item: Vec<Item>,
}

#[derive(Deserialize)]
struct Item {
    file: String,
    language: String,
    expected: String,
}

#[test]
fn labelled_fixtures() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/degenerate");
    let labels: Labels = toml::from_str(&std::fs::read_to_string(dir.join("labels.toml")).unwrap()).unwrap();
    assert_eq!(labels.item.len(), 30);
    let mut wrong = Vec::new();
    for item in &labels.item {
        let text = std::fs::read_to_string(dir.join(&item.file)).unwrap();
        let v = detect_degenerate(&text, &item.language);
        let got = v.reason.map(|r| r.as_str()).unwrap_or("ok");
        assert_eq!(v.degenerate, v.reason.is_some());
        if got != item.expected {
            wrong.push(format!("{}: expected {}, got {got}", item.file, item.expected));
        }
    }
    assert!(wrong.is_empty(), "{wrong:#?}");
}
