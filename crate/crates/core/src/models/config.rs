use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dsp::{n_frames, HOP, N_FFT};
use crate::error::{Error, Result};
use crate::{N_TAGS, SAMPLE_RATE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Fcn,
    Musicnn,
    SampleLevel,
    SampleLevelSe,
    Crnn,
    SelfAttention,
    HarmonicCnn,
    ShortChunk,
    ShortChunkRes,
}

impl Arch {
    pub const ALL: [Arch; 9] = [
        Arch::Fcn,
        Arch::Musicnn,
        Arch::SampleLevel,
        Arch::SampleLevelSe,
        Arch::Crnn,
        Arch::SelfAttention,
        Arch::HarmonicCnn,
        Arch::ShortChunk,
        Arch::ShortChunkRes,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Fcn => "fcn",
            Arch::Musicnn => "musicnn",
            Arch::SampleLevel => "sample_level",
            Arch::SampleLevelSe => "sample_level_se",
            Arch::Crnn => "crnn",
            Arch::SelfAttention => "self_attention",
            Arch::HarmonicCnn => "harmonic_cnn",
            Arch::ShortChunk => "short_chunk",
            Arch::ShortChunkRes => "short_chunk_res",
        }
    }

    /// Input length in samples at 16 kHz.
    pub fn input_length(&self) -> usize {
        match self {
            Arch::Fcn | Arch::Crnn => 465_600,
            Arch::Musicnn => 48_000,
            Arch::SampleLevel | Arch::SampleLevelSe | Arch::ShortChunk | Arch::ShortChunkRes => 59_049,
            Arch::SelfAttention => 240_000,
            Arch::HarmonicCnn => 80_000,
        }
    }

    /// Mel bands (harmonic bands for the harmonic CNN); zero for raw audio.
    pub fn default_bands(&self) -> usize {
        match self {
            Arch::Fcn | Arch::Musicnn | Arch::Crnn => 96,
            Arch::SampleLevel | Arch::SampleLevelSe => 0,
            _ => 128,
        }
    }

    /// Song-level models see a whole clip (up to their receptive field);
    /// the rest train on random chunks.
    pub fn song_level(&self) -> bool {
        matches!(self, Arch::Fcn | Arch::Crnn)
    }

    pub fn input_kind(&self) -> InputKind {
        match self {
            Arch::SampleLevel | Arch::SampleLevelSe => InputKind::Waveform,
            Arch::HarmonicCnn => InputKind::PowerSpectrogram,
            _ => InputKind::MelSpectrogram,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown arch {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// `[N, samples]`
    Waveform,
    /// `[N, n_mels, frames]`, natural-log mel energies
    MelSpectrogram,
    /// `[N, n_fft/2 + 1, frames]`, linear power
    PowerSpectrogram,
}

/// Architecture plus hyperparameters. Field meaning depends on the arch:
/// `widths` is the convolutional stack (for musicnn, the mid-end), `hidden`
/// the dense/recurrent width, `n_layers` the GRU or transformer depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub n_mels: usize,
    pub input_length: usize,
    pub n_tags: usize,
    pub widths: Vec<usize>,
    pub hidden: usize,
    /// Musicnn front end: filters per vertical branch (temporal branches
    /// get half).
    pub front_width: usize,
    pub heads: usize,
    pub n_layers: usize,
    pub n_harmonics: usize,
    pub dropout: f32,
}

const SHORT_CHUNK_WIDTHS: [usize; 7] = [64, 128, 128, 128, 256, 256, 512];

impl ModelConfig {
    /// Full-size configuration.
    pub fn new(arch: Arch) -> Self {
        let base = ModelConfig {
            arch,
            n_mels: arch.default_bands(),
            input_length: arch.input_length(),
            n_tags: N_TAGS,
            widths: vec![],
            hidden: 0,
            front_width: 0,
            heads: 0,
            n_layers: 0,
            n_harmonics: 0,
            dropout: 0.5,
        };
        match arch {
            Arch::Fcn => ModelConfig { widths: vec![64, 128, 128, 128], ..base },
            Arch::Musicnn => ModelConfig {
                widths: vec![64, 64, 64],
                hidden: 200,
                front_width: 32,
                ..base
            },
            Arch::SampleLevel | Arch::SampleLevelSe => ModelConfig {
                widths: vec![64, 64, 64, 128, 128, 128, 256, 256, 256, 512],
                ..base
            },
            Arch::Crnn => ModelConfig {
                widths: vec![64, 128, 128, 128],
                hidden: 128,
                n_layers: 2,
                ..base
            },
            Arch::SelfAttention => ModelConfig {
                widths: vec![128, 256],
                heads: 8,
                n_layers: 2,
                ..base
            },
            Arch::HarmonicCnn => ModelConfig {
                widths: SHORT_CHUNK_WIDTHS.to_vec(),
                hidden: 512,
                n_harmonics: 6,
                ..base
            },
            Arch::ShortChunk | Arch::ShortChunkRes => ModelConfig {
                widths: SHORT_CHUNK_WIDTHS.to_vec(),
                hidden: 512,
                ..base
            },
        }
    }

    /// The "(128)" variants of fcn, musicnn and crnn.
    pub fn with_mels(mut self, n_mels: usize) -> Self {
        self.n_mels = n_mels;
        self
    }

    /// Narrow configuration for desk-scale training: same topology and
    /// input length, far fewer channels.
    pub fn reduced(arch: Arch) -> Self {
        let full = ModelConfig::new(arch);
        match arch {
            Arch::Fcn | Arch::Crnn => ModelConfig {
                widths: vec![16, 32, 32, 32],
                hidden: if arch == Arch::Crnn { 32 } else { 0 },
                ..full
            },
            Arch::Musicnn => ModelConfig {
                widths: vec![32, 32, 32],
                hidden: 64,
                front_width: 16,
                ..full
            },
            Arch::SampleLevel | Arch::SampleLevelSe => ModelConfig {
                widths: vec![16, 16, 16, 32, 32, 32, 64, 64, 64, 64],
                ..full
            },
            Arch::SelfAttention => ModelConfig {
                widths: vec![16, 32],
                heads: 4,
                ..full
            },
            Arch::HarmonicCnn | Arch::ShortChunk | Arch::ShortChunkRes => ModelConfig {
                widths: vec![16, 16, 32, 32, 32, 32, 64],
                hidden: 64,
                ..full
            },
        }
    }

    /// `fcn`, or `fcn_128` for a non-default band count.
    pub fn model_id(&self) -> String {
        if self.n_mels == self.arch.default_bands() {
            self.arch.as_str().to_string()
        } else {
            format!("{}_{}", self.arch, self.n_mels)
        }
    }

    pub fn frames(&self) -> usize {
        n_frames(self.input_length, HOP)
    }

    /// Per-example input shape at the configured length.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.arch.input_kind() {
            InputKind::Waveform => vec![self.input_length],
            InputKind::MelSpectrogram => vec![self.n_mels, self.frames()],
            InputKind::PowerSpectrogram => vec![N_FFT / 2 + 1, self.frames()],
        }
    }

    /// Musicnn vertical filter heights: 0.4 and 0.7 of the band count.
    pub fn musicnn_heights(&self) -> [usize; 2] {
        [self.n_mels * 2 / 5, self.n_mels * 7 / 10]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.arch)));
        if self.n_tags == 0 || self.input_length == 0 {
            return bad("n_tags and input_length must be positive".into());
        }
        if self.widths.contains(&0) {
            return bad("zero channel width".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {}", self.dropout));
        }
        let need_layers = match self.arch {
            Arch::Fcn | Arch::Crnn => Some(4),
            Arch::Musicnn => Some(3),
            Arch::SampleLevel | Arch::SampleLevelSe => Some(10),
            Arch::HarmonicCnn | Arch::ShortChunk | Arch::ShortChunkRes => Some(7),
            Arch::SelfAttention => None,
        };
        if let Some(n) = need_layers {
            if self.widths.len() != n {
                return bad(format!("{} widths, expected {n}", self.widths.len()));
            }
        } else if self.widths.is_empty() {
            return bad("empty conv stack".into());
        }
        if self.arch.input_kind() != InputKind::Waveform && self.n_mels == 0 {
            return bad("band count must be positive".into());
        }
        match self.arch {
            Arch::Musicnn => {
                if self.front_width < 2 || self.hidden == 0 {
                    return bad("front_width >= 2 and hidden > 0 required".into());
                }
                if self.musicnn_heights()[0] == 0 {
                    return bad(format!("{} mel bands too few for vertical filters", self.n_mels));
                }
            }
            Arch::Crnn if self.hidden == 0 || self.n_layers == 0 => return bad("GRU size".into()),
            Arch::SelfAttention => {
                let d = *self.widths.last().unwrap();
                if self.heads == 0 || d % self.heads != 0 || self.n_layers == 0 {
                    return bad(format!("width {d} with {} heads", self.heads));
                }
            }
            Arch::HarmonicCnn if self.n_harmonics == 0 => return bad("n_harmonics".into()),
            Arch::HarmonicCnn | Arch::ShortChunk | Arch::ShortChunkRes if self.hidden == 0 => {
                return bad("dense width".into())
            }
            _ => {}
        }
        Ok(())
    }
}

/// Extent of input one output logit depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceptiveField {
    /// Mel (or harmonic) bands covered; `None` for waveform models.
    pub freq_bands: Option<usize>,
    pub time_seconds: f64,
    /// Span of the convolutional stack alone, before global pooling, in
    /// input units (frames or samples).
    pub conv_span: usize,
}

/// Every network ends in global pooling, so a logit sees the whole input
/// window; `conv_span` reports the local stack for comparison.
pub fn receptive_field(config: &ModelConfig) -> ReceptiveField {
    // (kernel, stride) pairs along time for each layer of the stack
    let layers: Vec<(usize, usize)> = match config.arch {
        Arch::Fcn => [4, 5, 8, 8].iter().flat_map(|&p| [(3, 1), (p, p)]).collect(),
        Arch::Crnn => [2, 3, 4, 4].iter().flat_map(|&p| [(3, 1), (p, p)]).collect(),
        Arch::Musicnn => vec![(165, 1), (7, 1), (7, 1), (7, 1)],
        Arch::SampleLevel | Arch::SampleLevelSe => {
            let mut v = vec![(3, 3)];
            v.extend((0..9).flat_map(|_| [(3, 1), (3, 3)]));
            v
        }
        Arch::SelfAttention => vec![(3, 2); config.widths.len()],
        Arch::HarmonicCnn | Arch::ShortChunk => (0..7).flat_map(|_| [(3, 1), (2, 2)]).collect(),
        Arch::ShortChunkRes => (0..7).flat_map(|_| [(3, 2), (3, 1)]).collect(),
    };
    let (mut span, mut jump) = (1usize, 1usize);
    for (k, s) in layers {
        span += (k - 1) * jump;
        jump *= s;
    }
    ReceptiveField {
        freq_bands: (config.arch.input_kind() != InputKind::Waveform).then_some(config.n_mels),
        time_seconds: config.input_length as f64 / SAMPLE_RATE as f64,
        conv_span: span,
    }
}
