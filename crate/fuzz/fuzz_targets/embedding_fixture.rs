#![no_main]

use libfuzzer_sys::fuzz_target;
use percept_core::embedding::parse_fixture_str;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = parse_fixture_str(text) {
            for e in table.values() {
                let norm: f64 = e.values().iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-6);
            }
        }
    }
});
