#![no_main]

use libfuzzer_sys::fuzz_target;
use ordrobust::data::PreprocessSpec;

fuzz_target!(|data: &[u8]| {
    let input = String::from_utf8_lossy(data);
    if let Ok(spec) = PreprocessSpec::from_json(&input) {
        let again = serde_json::to_string(&spec).unwrap();
        assert_eq!(PreprocessSpec::from_json(&again).unwrap(), spec);
    }
});
