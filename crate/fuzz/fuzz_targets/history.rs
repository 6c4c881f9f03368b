//! History files may be truncated by a crash mid-append.

#![no_main]

use libfuzzer_sys::fuzz_target;
use percept_core::store::{parse_history_str, report_to_line};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let history = parse_history_str(&text);
    for report in &history.records {
        let line = report_to_line(report).unwrap();
        let back = parse_history_str(&format!("{line}\n"));
        assert_eq!(back.records.len(), 1);
    }
});
