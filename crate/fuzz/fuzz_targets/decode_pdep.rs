#![no_main]

use libfuzzer_sys::fuzz_target;
use planefield::io::{decode_pdep, encode_pdep};

fuzz_target!(|data: &[u8]| {
    for channels in 1..=3 {
        if let Ok(img) = decode_pdep(data, channels) {
            let bytes = encode_pdep(img.height, img.width, img.channels, &img.data).unwrap();
            assert_eq!(bytes, data);
        }
    }
});
