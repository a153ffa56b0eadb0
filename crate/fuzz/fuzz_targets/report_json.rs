#![no_main]

use libfuzzer_sys::fuzz_target;
use tagbench_core::report::EvalReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = EvalReport::from_json(text) {
        let _ = r.validate();
        let _ = r.to_tsv();
        assert_eq!(EvalReport::from_json(&r.to_json()).expect("written report parses"), r);
    }
});
