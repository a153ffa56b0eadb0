//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets make, so the seeds stay valid without a nightly toolchain.

use std::path::{Path, PathBuf};

use tagbench_autodiff::checkpoint::{decode, encode};
use tagbench_cli::config::RunConfig;
use tagbench_core::audio::{encode_wav_pcm16, parse_wav};
use tagbench_core::datasets::parse_manifest;
use tagbench_core::deform::parse_deformation;
use tagbench_core::report::EvalReport;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn wav_seeds_parse_and_reencode() {
    for (path, bytes) in seeds("wav") {
        if path.file_name().unwrap().to_string_lossy().starts_with("reject_") {
            assert!(parse_wav(&bytes, "seed").is_err(), "{}", path.display());
            continue;
        }
        let clip = parse_wav(&bytes, "seed").unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = parse_wav(&encode_wav_pcm16(&clip), "seed").unwrap();
        assert_eq!((again.len(), again.sample_rate()), (clip.len(), clip.sample_rate()));
    }
}

#[test]
fn manifest_seeds_round_trip() {
    for (path, bytes) in seeds("manifest") {
        let n_tags = text(&bytes).lines().next().unwrap().split('\t').count() - 3;
        let m = parse_manifest(text(&bytes), n_tags, "seed", Path::new("base"))
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_manifest(&m.to_tsv(), n_tags, "seed", Path::new("base")).unwrap(), m);
    }
}

#[test]
fn deform_spec_seeds_are_canonical() {
    for (_, bytes) in seeds("deform_spec") {
        let d = parse_deformation(text(&bytes)).unwrap();
        assert_eq!(parse_deformation(&d.to_string()).unwrap(), d);
    }
}

#[test]
fn checkpoint_seeds_round_trip_bytewise() {
    for (path, bytes) in seeds("checkpoint") {
        let arrays = decode(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(encode(&arrays).unwrap(), bytes);
    }
}

#[test]
fn report_seeds_validate_and_round_trip() {
    for (_, bytes) in seeds("report_json") {
        let r = EvalReport::from_json(text(&bytes)).unwrap();
        r.validate().unwrap();
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }
}

#[test]
fn config_seeds_round_trip() {
    for (_, bytes) in seeds("config_json") {
        let c = RunConfig::from_json(text(&bytes)).unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
