#![no_main]

use libfuzzer_sys::fuzz_target;
use ordrobust::diagnostics::SummaryTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = SummaryTable::read_csv(data) {
        let mut out = Vec::new();
        table.write_csv(&mut out).unwrap();
        let _ = table.point_estimate();
    }
});
