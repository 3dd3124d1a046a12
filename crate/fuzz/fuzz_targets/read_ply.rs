#![no_main]

use libfuzzer_sys::fuzz_target;
use planefield::io::{read_ply, write_ply};

fuzz_target!(|data: &[u8]| {
    let Ok(mesh) = read_ply(data) else { return };
    // writing stores normals and embeddings as f32, so compare after one cycle
    let Ok(bytes) = write_ply(&mesh) else { return };
    let once = read_ply(&bytes).expect("written mesh must parse");
    let again = read_ply(&write_ply(&once).expect("re-read mesh must write")).unwrap();
    assert_eq!(once, again);
});
