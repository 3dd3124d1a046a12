#![no_main]

use libfuzzer_sys::fuzz_target;
use planefield::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(layer) = parse_config(text) {
        // resolution validates ranges and must fail cleanly rather than panic
        let _ = layer.resolve();
    }
});
