#![no_main]

use libfuzzer_sys::fuzz_target;
use planefield::io::{format_labels, parse_labels};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(labels) = parse_labels(text) {
        assert!(labels.iter().all(|&l| l >= -1));
        assert_eq!(parse_labels(&format_labels(&labels)).unwrap(), labels);
    }
});
