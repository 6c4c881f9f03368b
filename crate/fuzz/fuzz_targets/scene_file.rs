//! Scene-description files are user supplied; parsing must reject, never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use percept_core::embedding::TokenHashProvider;
use percept_core::store::{encode_scene, parse_scene_str};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(frames) = parse_scene_str(text) {
        // Anything the parser accepts must also encode.
        let provider = TokenHashProvider::new(8, 0).unwrap();
        let _ = encode_scene(&frames, &provider);
    }
});
