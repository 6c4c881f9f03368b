#![no_main]

use libfuzzer_sys::fuzz_target;
use percept_core::store::parse_store_str;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(store) = parse_store_str(text) {
        let json = store.to_json();
        let again = parse_store_str(&json).expect("re-serialized store must load");
        assert_eq!(again.to_json(), json);
    }
});
