//! Remote encoder responses come off the network.

#![no_main]

use libfuzzer_sys::fuzz_target;
use percept_core::embedding::parse_embed_response;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let count = data[0] as usize % 8;
    let dim = 1 + data[1] as usize % 16;
    if let Ok(body) = std::str::from_utf8(&data[2..]) {
        if let Ok(rows) = parse_embed_response(body, count, dim) {
            assert_eq!(rows.len(), count);
            assert!(rows.iter().all(|e| e.dim() == dim));
        }
    }
});
