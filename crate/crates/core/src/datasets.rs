//! Dataset manifests, published split conventions and the synthetic
//! desk-scale corpus.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, resample, write_wav, AudioClip};
use crate::error::{Error, Result};
use crate::{N_TAGS, SAMPLE_RATE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidConfig(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub clip_id: String,
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: PathBuf,
    pub split: Split,
    pub tags: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub dataset_id: String,
    pub tag_vocab: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

const FIXED_COLUMNS: [&str; 3] = ["clip_id", "path", "split"];

impl Manifest {
    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn get(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    /// Loads an entry's audio at the model rate.
    pub fn load_audio(&self, entry: &ManifestEntry) -> Result<AudioClip> {
        let mut clip = load_wav(&self.resolve(entry))?;
        clip.source_id = entry.clip_id.clone();
        if clip.sample_rate() != SAMPLE_RATE {
            clip = resample(&clip, SAMPLE_RATE)?;
        }
        Ok(clip)
    }

    /// Errors with [`Error::EmptySplit`] unless all three splits have clips.
    pub fn require_training_ready(&self) -> Result<()> {
        for s in Split::ALL {
            if self.count(s) == 0 {
                return Err(Error::EmptySplit(s.to_string()));
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = FIXED_COLUMNS.join("\t");
        for t in &self.tag_vocab {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}", e.clip_id, e.path.display(), e.split));
            for &b in &e.tags {
                out.push_str(if b { "\t1" } else { "\t0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Parses manifest TSV text. `n_tags` is the required vocabulary size.
pub fn parse_manifest(text: &str, n_tags: usize, dataset_id: &str, base_dir: &Path) -> Result<Manifest> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or(Error::MalformedRow {
        line: 1,
        reason: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 3 || cols[..3] != FIXED_COLUMNS {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "header must start with clip_id, path, split".into(),
        });
    }
    if cols.len() - 3 != n_tags {
        return Err(Error::BadTagArity {
            line: 1,
            expected: n_tags,
            found: cols.len() - 3,
        });
    }
    let tag_vocab: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split('\t').collect();
        if f.len() < 3 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("{} columns", f.len()),
            });
        }
        if f.len() - 3 != n_tags {
            return Err(Error::BadTagArity {
                line,
                expected: n_tags,
                found: f.len() - 3,
            });
        }
        let bad = |reason: String| Error::MalformedRow { line, reason };
        if f[0].is_empty() || f[1].is_empty() {
            return Err(bad("empty clip_id or path".into()));
        }
        let split = f[2].parse::<Split>().map_err(|_| bad(format!("unknown split {:?}", f[2])))?;
        let tags = f[3..]
            .iter()
            .map(|v| match *v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(bad(format!("tag value {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if !seen.insert(f[0].to_string()) {
            return Err(Error::DuplicateClipId(f[0].to_string()));
        }
        entries.push(ManifestEntry {
            clip_id: f[0].to_string(),
            path: PathBuf::from(f[1]),
            split,
            tags,
        });
    }
    Ok(Manifest {
        dataset_id: dataset_id.to_string(),
        tag_vocab,
        entries,
        base_dir: base_dir.to_path_buf(),
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, N_TAGS, &id, &base)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest.to_tsv())?;
    Ok(())
}

// ---------------------------------------------------------------- split conventions

/// MagnaTagATune folder (hex `0`..`f`) to split: the first twelve train,
/// the thirteenth validates, the last three test.
pub fn mtat_split(folder: usize) -> Result<Split> {
    match folder {
        0..=11 => Ok(Split::Train),
        12 => Ok(Split::Valid),
        13..=15 => Ok(Split::Test),
        _ => Err(Error::OutOfRange(format!("MTAT folder {folder}"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitConvention {
    Mtat,
    Msd,
    Jamendo,
}

impl SplitConvention {
    /// Published (train, valid, test) counts where known.
    pub fn split_counts(&self) -> Option<[usize; 3]> {
        match self {
            SplitConvention::Msd => Some([201_680, 11_774, 28_435]),
            _ => None,
        }
    }

    pub fn total(&self) -> usize {
        match self {
            SplitConvention::Mtat => 25_877,
            SplitConvention::Msd => 201_680 + 11_774 + 28_435,
            SplitConvention::Jamendo => 55_701,
        }
    }
}

impl std::str::FromStr for SplitConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mtat" => Ok(SplitConvention::Mtat),
            "msd" => Ok(SplitConvention::Msd),
            "jamendo" => Ok(SplitConvention::Jamendo),
            _ => Err(Error::InvalidConfig(format!("unknown split convention {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCountReport {
    pub convention: SplitConvention,
    pub counts: [usize; 3],
    pub warnings: Vec<String>,
}

impl SplitCountReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Compares a manifest's split sizes with a published convention.
/// Mismatches are warnings: alternative splits of the same data exist.
pub fn validate_split_counts(manifest: &Manifest, convention: SplitConvention) -> SplitCountReport {
    let counts = Split::ALL.map(|s| manifest.count(s));
    let mut warnings = Vec::new();
    if let Some(expected) = convention.split_counts() {
        for (i, s) in Split::ALL.iter().enumerate() {
            if counts[i] != expected[i] {
                warnings.push(format!("{s}: {} clips, expected {}", counts[i], expected[i]));
            }
        }
    }
    let total: usize = counts.iter().sum();
    if total != convention.total() {
        warnings.push(format!("total: {total} clips, expected {}", convention.total()));
    }
    SplitCountReport {
        convention,
        counts,
        warnings,
    }
}

// ---------------------------------------------------------------- synthetic corpus

/// Signal components of the synthetic corpus; each doubles as a tag.
pub const SYNTH_TAGS: [&str; 8] = [
    "sine_110",
    "sine_440",
    "sine_880",
    "sine_1760",
    "sine_3520",
    "tremolo",
    "noise_bursts",
    "chirp",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_clips: usize,
    pub clip_seconds: f64,
    pub seed: u64,
    /// Active components, a subset of [`SYNTH_TAGS`].
    pub tags: Vec<String>,
    /// Probability that each component is present in a clip.
    pub presence: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_clips: 100,
            clip_seconds: 4.0,
            seed: 0,
            tags: SYNTH_TAGS.iter().map(|s| s.to_string()).collect(),
            presence: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips < 3 {
            return Err(Error::InvalidConfig("n_clips must be at least 3".into()));
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds <= 600.0) {
            return Err(Error::InvalidConfig(format!("clip_seconds {}", self.clip_seconds)));
        }
        if !(0.0..=1.0).contains(&self.presence) {
            return Err(Error::InvalidConfig(format!("presence {}", self.presence)));
        }
        if self.tags.is_empty() || self.tags.len() > SYNTH_TAGS.len() {
            return Err(Error::InvalidConfig("between 1 and 8 tags required".into()));
        }
        let mut seen = HashSet::new();
        for t in &self.tags {
            if !SYNTH_TAGS.contains(&t.as_str()) || !seen.insert(t) {
                return Err(Error::InvalidConfig(format!("tag rule {t:?}")));
            }
        }
        Ok(())
    }

    /// 70/15/15 split sizes.
    pub fn split_sizes(&self) -> [usize; 3] {
        let valid = self.n_clips * 15 / 100;
        let test = self.n_clips * 15 / 100;
        [self.n_clips - valid - test, valid, test]
    }

    pub fn split_of(&self, index: usize) -> Split {
        let [train, valid, _] = self.split_sizes();
        if index < train {
            Split::Train
        } else if index < train + valid {
            Split::Valid
        } else {
            Split::Test
        }
    }

    pub fn vocab(&self) -> Vec<String> {
        let mut v = self.tags.clone();
        for i in v.len()..N_TAGS {
            v.push(format!("unused_{i:02}"));
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticClip {
    pub clip: AudioClip,
    pub tags: Vec<bool>,
    pub split: Split,
}

fn render_component(name: &str, x: &mut [f64], rng: &mut ChaCha8Rng) {
    let sr = SAMPLE_RATE as f64;
    let tau = std::f64::consts::TAU;
    match name {
        "tremolo" => {
            let (amp, phase) = (rng.random_range(0.10..0.18), rng.random_range(0.0..tau));
            for (n, v) in x.iter_mut().enumerate() {
                let t = n as f64 / sr;
                *v += amp * (0.5 + 0.5 * (tau * 6.0 * t).sin()) * (tau * 660.0 * t + phase).sin();
            }
        }
        "noise_bursts" => {
            let amp = rng.random_range(0.08..0.14);
            let period = (0.5 * sr) as usize;
            let burst = (0.1 * sr) as usize;
            let offset = rng.random_range(0..period);
            for (n, v) in x.iter_mut().enumerate() {
                if (n + offset) % period < burst {
                    let g: f64 = StandardNormal.sample(rng);
                    *v += amp * g;
                }
            }
        }
        "chirp" => {
            // 300 Hz → 2500 Hz linear sweep repeating once per second
            let amp = rng.random_range(0.10..0.16);
            let (f0, f1) = (300.0, 2500.0);
            let mut phase = rng.random_range(0.0..tau);
            for (n, v) in x.iter_mut().enumerate() {
                let t = (n as f64 / sr).fract();
                phase += tau * (f0 + (f1 - f0) * t) / sr;
                *v += amp * phase.sin();
            }
        }
        sine => {
            let freq: f64 = sine.trim_start_matches("sine_").parse().expect("validated tag name");
            let (amp, phase) = (rng.random_range(0.08..0.16), rng.random_range(0.0..tau));
            for (n, v) in x.iter_mut().enumerate() {
                *v += amp * (tau * freq * n as f64 / sr + phase).sin();
            }
        }
    }
}

/// Generates clip `index`: each active component is present independently,
/// and its tag bit is set exactly when it is.
pub fn synthesize_clip(spec: &SyntheticSpec, index: usize) -> Result<SyntheticClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let len = ((spec.clip_seconds * SAMPLE_RATE as f64).round() as usize).max(1);
    let mut x = vec![0.0f64; len];
    let mut tags = vec![false; N_TAGS];
    for (t, name) in spec.tags.iter().enumerate() {
        if rng.random_bool(spec.presence) {
            tags[t] = true;
            render_component(name, &mut x, &mut rng);
        }
    }
    for v in x.iter_mut() {
        let g: f64 = StandardNormal.sample(&mut rng);
        *v += 0.002 * g;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.95 { 0.95 / peak } else { 1.0 };
    let samples = x.iter().map(|v| (v * scale) as f32).collect();
    Ok(SyntheticClip {
        clip: AudioClip::new(samples, SAMPLE_RATE, format!("synth_{index:04}"))?,
        tags,
        split: spec.split_of(index),
    })
}

/// Writes `audio/synth_NNNN.wav` files and `manifest.tsv` under `out_dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let mut entries = Vec::with_capacity(spec.n_clips);
    for i in 0..spec.n_clips {
        let s = synthesize_clip(spec, i)?;
        let rel = PathBuf::from("audio").join(format!("{}.wav", s.clip.source_id));
        write_wav(&s.clip, &out_dir.join(&rel))?;
        entries.push(ManifestEntry {
            clip_id: s.clip.source_id.clone(),
            path: rel,
            split: s.split,
            tags: s.tags,
        });
    }
    let manifest = Manifest {
        dataset_id: "synthetic".into(),
        tag_vocab: spec.vocab(),
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    save_manifest(&manifest, &out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
