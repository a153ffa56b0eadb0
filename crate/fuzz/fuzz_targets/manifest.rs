#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use tagbench_core::datasets::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // A small vocabulary keeps interesting inputs short.
    for n_tags in [3, tagbench_core::N_TAGS] {
        if let Ok(m) = parse_manifest(text, n_tags, "fuzz", Path::new("base")) {
            let again = parse_manifest(&m.to_tsv(), n_tags, "fuzz", Path::new("base")).expect("written manifest parses");
            assert_eq!(again, m);
        }
    }
});
