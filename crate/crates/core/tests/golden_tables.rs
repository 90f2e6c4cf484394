use std::path::PathBuf;

use flowtab::model::{parse_model, Axis};
use flowtab::sweep::{emit_table, run_sweep, OutputFormat, SweepSpec};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("FLOWTAB_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, want, "{name} differs from the golden file");
}

fn toy_sweep() -> SweepSpec {
    let model = parse_model(include_str!("../../../models/toy_twopoint.json")).unwrap();
    SweepSpec {
        thresholds: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0],
        probabilities: vec![1.0, 0.5, 0.25, 0.125],
        seeds: vec![1, 2],
        flow_count: 100_000,
        ..SweepSpec::new(model, Axis::Length)
    }
}

#[test]
fn toy_markdown_table() {
    let r = run_sweep(&toy_sweep()).unwrap();
    check("toy_length.md", &emit_table(&r, OutputFormat::Markdown));
}

#[test]
fn toy_csv_table() {
    let r = run_sweep(&toy_sweep()).unwrap();
    check("toy_length.csv", &emit_table(&r, OutputFormat::Csv));
}
