#![no_main]

use libfuzzer_sys::fuzz_target;
use tagbench_cli::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_json(text) {
        let _ = c.resolve_model();
        let _ = c.train.validate();
        assert_eq!(RunConfig::from_json(&c.to_json()).expect("written config parses"), c);
    }
});
