//! Fuzz seed corpora replayed through the same parsers the fuzz targets drive.

use std::fs;
use std::path::PathBuf;

use ordrobust::data::{load_csv_reader, PreprocessSpec};
use ordrobust::diagnostics::SummaryTable;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn preprocess_seeds_parse_and_round_trip() {
    for (name, bytes) in seeds("preprocess_spec") {
        let spec = PreprocessSpec::from_json(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = serde_json::to_string(&spec).unwrap();
        assert_eq!(PreprocessSpec::from_json(&again).unwrap(), spec, "{name}");
    }
}

#[test]
fn load_csv_seeds() {
    for (name, bytes) in seeds("load_csv") {
        let split = bytes.iter().position(|&b| b == b'\n').unwrap();
        let spec = PreprocessSpec::from_json(std::str::from_utf8(&bytes[..split]).unwrap()).unwrap();
        let res = load_csv_reader(&bytes[split + 1..], &spec);
        match name.as_str() {
            "missing.txt" => assert!(res.is_err()),
            _ => {
                let ds = res.unwrap_or_else(|e| panic!("{name}: {e}"));
                assert!(ds.n() > 0 && ds.p() > 0);
            }
        }
    }
}

#[test]
fn summary_seeds() {
    for (name, bytes) in seeds("summary_csv") {
        let table = SummaryTable::read_csv(&bytes[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let est = table.point_estimate();
        match name.as_str() {
            "unordered.csv" => assert!(est.is_err()),
            _ => assert!(est.is_ok(), "{name}"),
        }
    }
}
