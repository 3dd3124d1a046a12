#![no_main]

use libfuzzer_sys::fuzz_target;
use planefield::io::{format_intrinsics, parse_intrinsics};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(k) = parse_intrinsics(text) {
        let again = parse_intrinsics(&format_intrinsics(&k)).expect("formatted intrinsics must parse");
        assert_eq!(k, again);
    }
});
