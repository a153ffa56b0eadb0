#![no_main]

use libfuzzer_sys::fuzz_target;
use tagbench_autodiff::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(arrays) = decode(data) {
        // Compared as bytes: NaN payloads must survive, and NaN != NaN.
        let bytes = encode(&arrays).expect("decoded arrays encode");
        let again = decode(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(encode(&again).expect("encodes"), bytes);
    }
});
