#![no_main]

use libfuzzer_sys::fuzz_target;
use tagbench_core::audio::{encode_wav_pcm16, parse_wav};

fuzz_target!(|data: &[u8]| {
    if let Ok(clip) = parse_wav(data, "fuzz") {
        assert!(clip.samples().iter().all(|s| s.is_finite() && s.abs() <= 1.0));
        // Anything we accept must survive our own writer.
        let again = parse_wav(&encode_wav_pcm16(&clip), "fuzz").expect("re-encoded WAV parses");
        assert_eq!(again.len(), clip.len());
        assert_eq!(again.sample_rate(), clip.sample_rate());
    }
});
