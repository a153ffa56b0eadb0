#![no_main]

use libfuzzer_sys::fuzz_target;
use tagbench_core::deform::parse_deformation;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_deformation(spec) {
        assert_eq!(parse_deformation(&d.to_string()).expect("canonical spec parses"), d);
    }
});
