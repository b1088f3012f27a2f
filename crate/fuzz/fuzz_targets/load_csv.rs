#![no_main]

use libfuzzer_sys::fuzz_target;
use ordrobust::data::{load_csv_reader, PreprocessSpec};

// first line: preprocessing spec as JSON; the rest: the table
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let Ok(spec) = PreprocessSpec::from_json(&String::from_utf8_lossy(&data[..split])) else {
        return;
    };
    let body = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(ds) = load_csv_reader(body, &spec) {
        assert!(ds.y().iter().all(|&y| (1..=ds.n_categories()).contains(&y)));
        assert_eq!(ds.x().len(), ds.n() * ds.p());
    }
});
