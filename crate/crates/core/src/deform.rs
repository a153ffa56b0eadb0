//! Test-time input deformations: pitch shift, time stretch, dynamic range
//! compression and additive white noise.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{resample_ratio, AudioClip};
use crate::dsp::hann;
use crate::error::{Error, Result};

pub const PV_FFT: usize = 2048;
pub const PV_HOP: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressorPreset {
    pub name: String,
    pub threshold_db: f64,
    pub ratio: f64,
    pub knee_db: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub makeup_db: f64,
}

impl CompressorPreset {
    /// Placeholder values standing in for the broadcast "speech" profile.
    pub fn speech() -> Self {
        CompressorPreset {
            name: "speech".into(),
            threshold_db: -24.0,
            ratio: 4.0,
            knee_db: 6.0,
            attack_ms: 5.0,
            release_ms: 100.0,
            makeup_db: 0.0,
        }
    }

    /// Placeholder values standing in for the "music (standard)" profile.
    pub fn music_standard() -> Self {
        CompressorPreset {
            name: "music_standard".into(),
            threshold_db: -20.0,
            ratio: 2.5,
            knee_db: 6.0,
            attack_ms: 10.0,
            release_ms: 200.0,
            makeup_db: 0.0,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "speech" => Some(Self::speech()),
            "music_standard" | "music" => Some(Self::music_standard()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // Written so NaN fields fail too.
        let ok = self.ratio >= 1.0 && self.attack_ms > 0.0 && self.release_ms > 0.0 && self.knee_db >= 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!("compressor preset {}", self.name)));
        }
        Ok(())
    }

    /// Static gain curve: output level in dB for input level `x` dB.
    pub fn curve(&self, x: f64) -> f64 {
        let (t, r, w) = (self.threshold_db, self.ratio, self.knee_db);
        let over = x - t;
        if 2.0 * over < -w {
            x
        } else if 2.0 * over.abs() <= w && w > 0.0 {
            x + (1.0 / r - 1.0) * (over + w / 2.0).powi(2) / (2.0 * w)
        } else {
            t + over / r
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Deformation {
    None,
    PitchShift(i32),
    TimeStretch(f64),
    Drc(CompressorPreset),
    WhiteNoise(f64),
}

impl fmt::Display for Deformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deformation::None => write!(f, "none"),
            Deformation::PitchShift(n) => write!(f, "pitch:{n}"),
            Deformation::TimeStretch(g) => write!(f, "stretch:{}", format_rate(*g)),
            Deformation::Drc(p) => write!(f, "drc:{}", p.name),
            Deformation::WhiteNoise(a) => write!(f, "noise:{a}"),
        }
    }
}

fn format_rate(g: f64) -> String {
    let s = format!("{g:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl std::str::FromStr for Deformation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_deformation(s)
    }
}

/// Parses `none`, `pitch:<int>`, `stretch:<rate>`, `drc:<preset>` or
/// `noise:<alpha>`.
pub fn parse_deformation(spec: &str) -> Result<Deformation> {
    let bad = || Error::UnknownDeformation(spec.to_string());
    let spec_t = spec.trim();
    if spec_t == "none" {
        return Ok(Deformation::None);
    }
    let (kind, arg) = spec_t.split_once(':').ok_or_else(bad)?;
    match kind {
        "pitch" => {
            let n: i32 = arg.trim_start_matches('+').parse().map_err(|_| bad())?;
            if n.abs() > 48 {
                return Err(bad());
            }
            Ok(Deformation::PitchShift(n))
        }
        "stretch" => {
            let g: f64 = arg.parse().map_err(|_| bad())?;
            if !(g.is_finite() && (1.0 / 16.0..=16.0).contains(&g)) {
                return Err(bad());
            }
            Ok(Deformation::TimeStretch(g))
        }
        "drc" => CompressorPreset::by_name(arg).map(Deformation::Drc).ok_or_else(bad),
        "noise" => {
            let a: f64 = arg.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&a) {
                return Err(bad());
            }
            Ok(Deformation::WhiteNoise(a))
        }
        _ => Err(bad()),
    }
}

/// The eight evaluation settings, grouped by type: pitch, stretch, drc,
/// noise.
pub fn deformation_suite() -> Vec<Deformation> {
    let r = std::f64::consts::SQRT_2;
    vec![
        Deformation::PitchShift(-1),
        Deformation::PitchShift(1),
        Deformation::TimeStretch(1.0 / r),
        Deformation::TimeStretch(r),
        Deformation::Drc(CompressorPreset::music_standard()),
        Deformation::Drc(CompressorPreset::speech()),
        Deformation::WhiteNoise(0.1),
        Deformation::WhiteNoise(0.4),
    ]
}

/// `none` followed by [`deformation_suite`].
pub fn robustness_grid() -> Vec<Deformation> {
    let mut v = vec![Deformation::None];
    v.extend(deformation_suite());
    v
}

impl Deformation {
    /// Applies the deformation. `seed` only matters for noise, whose stream
    /// is derived from the seed and the clip id.
    pub fn apply(&self, clip: &AudioClip, seed: u64) -> Result<AudioClip> {
        match self {
            Deformation::None => Ok(clip.clone()),
            Deformation::PitchShift(n) => pitch_shift(clip, *n),
            Deformation::TimeStretch(g) => time_stretch(clip, *g),
            Deformation::Drc(p) => dynamic_range_compress(clip, p),
            Deformation::WhiteNoise(a) => add_white_noise(clip, *a, seed),
        }
    }
}

// ---------------------------------------------------------------- phase vocoder

fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    p - two_pi * (p / two_pi).round()
}

/// Analysis frames (center padded, reflect) as complex spectra.
fn analyze(x: &[f32], window: &[f32]) -> Vec<Vec<Complex<f64>>> {
    let n = x.len() as i64;
    let half = (PV_FFT / 2) as i64;
    let frames = 1 + x.len() / PV_HOP;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(PV_FFT);
    let reflect = |mut i: i64| -> usize {
        if n == 1 {
            return 0;
        }
        let period = 2 * (n - 1);
        i = i.rem_euclid(period);
        if i >= n {
            i = period - i;
        }
        i as usize
    };
    (0..frames)
        .map(|t| {
            let start = (t * PV_HOP) as i64 - half;
            let mut buf: Vec<Complex<f64>> = (0..PV_FFT)
                .map(|j| Complex::new((x[reflect(start + j as i64)] * window[j]) as f64, 0.0))
                .collect();
            fft.process(&mut buf);
            buf.truncate(PV_FFT / 2 + 1);
            buf
        })
        .collect()
}

/// Indices of local magnitude maxima.
fn peaks(mag: &[f64]) -> Vec<usize> {
    let n = mag.len();
    (0..n)
        .filter(|&k| {
            let left = if k > 0 { mag[k - 1] } else { f64::NEG_INFINITY };
            let right = if k + 1 < n { mag[k + 1] } else { f64::NEG_INFINITY };
            mag[k] > left && mag[k] >= right
        })
        .collect()
}

/// Phase-vocoder time-scale modification with identity phase locking.
/// Output length is `round(len / rate)`.
pub fn stretch_samples(x: &[f32], rate: f64) -> Vec<f32> {
    let out_len = ((x.len() as f64 / rate).round() as usize).max(1);
    if (rate - 1.0).abs() < 1e-12 {
        return x.to_vec();
    }
    let window = hann(PV_FFT);
    let frames = analyze(x, &window);
    let n_bins = PV_FFT / 2 + 1;
    let n_out_frames = out_len / PV_HOP + 1;
    let omega: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 * PV_HOP as f64 / PV_FFT as f64)
        .collect();
    let zero = vec![Complex::new(0.0, 0.0); n_bins];
    let frame_at = |i: usize| if i < frames.len() { &frames[i] } else { &zero };

    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(PV_FFT);
    let padded_len = (n_out_frames - 1) * PV_HOP + PV_FFT;
    let mut acc = vec![0.0f64; padded_len];
    let mut norm = vec![0.0f64; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); PV_FFT];

    for j in 0..n_out_frames {
        let t = j as f64 * rate;
        let i = t.floor() as usize;
        let frac = t - i as f64;
        let (a, b) = (frame_at(i), frame_at(i + 1));
        let mag: Vec<f64> = (0..n_bins).map(|k| (1.0 - frac) * a[k].norm() + frac * b[k].norm()).collect();

        if j > 0 {
            // Advance peak phases by their measured instantaneous frequency,
            // then lock each neighbouring bin to its peak.
            let pk = peaks(&mag);
            let prev_i = ((j - 1) as f64 * rate).floor() as usize;
            let (pa, pb) = (frame_at(prev_i), frame_at(prev_i + 1));
            let mut advanced = phase.clone();
            for k in 0..n_bins {
                let dphi = wrap_phase(pb[k].arg() - pa[k].arg() - omega[k]) + omega[k];
                advanced[k] = phase[k] + dphi;
            }
            if pk.is_empty() {
                phase = advanced;
            } else {
                let mut next = vec![0.0; n_bins];
                let mut region_start = 0;
                for (pi, &p) in pk.iter().enumerate() {
                    let region_end = if pi + 1 < pk.len() { (p + pk[pi + 1]) / 2 + 1 } else { n_bins };
                    for k in region_start..region_end {
                        next[k] = advanced[p] + a[k].arg() - a[p].arg();
                    }
                    region_start = region_end;
                }
                phase = next;
            }
        }

        for k in 0..n_bins {
            buf[k] = Complex::from_polar(mag[k], phase[k]);
        }
        for k in 1..PV_FFT / 2 {
            buf[PV_FFT - k] = buf[k].conj();
        }
        buf[0].im = 0.0;
        buf[PV_FFT / 2].im = 0.0;
        ifft.process(&mut buf);
        let off = j * PV_HOP;
        for n in 0..PV_FFT {
            let w = window[n] as f64;
            acc[off + n] += buf[n].re / PV_FFT as f64 * w;
            norm[off + n] += w * w;
        }
    }
    let half = PV_FFT / 2;
    (0..out_len)
        .map(|n| {
            let idx = n + half;
            if idx < padded_len && norm[idx] > 1e-8 { (acc[idx] / norm[idx]) as f32 } else { 0.0 }
        })
        .collect()
}

/// Time stretch by `rate` (> 1 is faster and shorter), pitch preserved.
pub fn time_stretch(clip: &AudioClip, rate: f64) -> Result<AudioClip> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidConfig(format!("stretch rate {rate}")));
    }
    clip.with_samples(stretch_samples(clip.samples(), rate))
}

/// Shift by `semitones`, keeping length: stretch by `2^(-n/12)` then
/// resample back to the original number of samples.
pub fn pitch_shift(clip: &AudioClip, semitones: i32) -> Result<AudioClip> {
    if semitones == 0 {
        return Ok(clip.clone());
    }
    let rate = 2f64.powf(-semitones as f64 / 12.0);
    let stretched = stretch_samples(clip.samples(), rate);
    let ratio = clip.len() as f64 / stretched.len() as f64;
    clip.with_samples(resample_ratio(&stretched, ratio, clip.len()))
}

// ---------------------------------------------------------------- compressor

/// Feed-forward compressor: peak envelope with attack/release smoothing,
/// soft-knee static curve, makeup gain.
pub fn dynamic_range_compress(clip: &AudioClip, preset: &CompressorPreset) -> Result<AudioClip> {
    preset.validate()?;
    let sr = clip.sample_rate() as f64;
    let a_att = (-1.0 / (preset.attack_ms * 1e-3 * sr)).exp();
    let a_rel = (-1.0 / (preset.release_ms * 1e-3 * sr)).exp();
    let x = clip.samples();
    let follow = |env: f64, v: f32| {
        let level = (v as f64).abs();
        let a = if level > env { a_att } else { a_rel };
        a * env + (1.0 - a) * level
    };
    // Clips are excerpts, so the detector is pre-rolled over the opening
    // release window instead of starting from silence.
    let warm = ((preset.release_ms * 1e-3 * sr) as usize).min(x.len());
    let mut env = x[..warm].iter().fold(0.0, |e, &v| follow(e, v));
    let out = x
        .iter()
        .map(|&v| {
            env = follow(env, v);
            let x_db = 20.0 * env.max(1e-10).log10();
            let gain_db = preset.curve(x_db) - x_db + preset.makeup_db;
            (v as f64 * 10f64.powf(gain_db / 20.0)) as f32
        })
        .collect();
    clip.with_samples(out)
}

// ---------------------------------------------------------------- noise

/// FNV-1a hash of a clip id, used to derive per-clip noise streams.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// `(1 − α)·x + α·noise`, with Gaussian noise rescaled to the clip's RMS,
/// then clipped to `[-1, 1]`.
pub fn add_white_noise(clip: &AudioClip, alpha: f64, seed: u64) -> Result<AudioClip> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("noise mix weight {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(clip.clone());
    }
    let x = clip.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&clip.source_id));
    let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rms = |v: &mut dyn Iterator<Item = f64>| {
        let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
        (s / n as f64).sqrt()
    };
    let sig_rms = rms(&mut x.iter().map(|&v| v as f64));
    let noise_rms = rms(&mut noise.iter().copied());
    let k = if noise_rms > 0.0 { sig_rms / noise_rms } else { 0.0 };
    let out = x
        .iter()
        .zip(&noise)
        .map(|(&v, &n)| ((1.0 - alpha) * v as f64 + alpha * k * n) as f32)
        .collect();
    clip.with_samples(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_roundtrip() {
        for s in ["none", "pitch:-1", "pitch:1", "stretch:1.4142", "stretch:0.7071", "drc:speech", "drc:music_standard", "noise:0.4"] {
            assert_eq!(parse_deformation(s).unwrap().to_string(), s);
        }
        assert_eq!(parse_deformation("pitch:+1").unwrap(), Deformation::PitchShift(1));
        for bad in ["", "pitch", "pitch:x", "stretch:-1", "stretch:0", "drc:loud", "noise:1.5", "echo:1"] {
            assert!(matches!(parse_deformation(bad), Err(Error::UnknownDeformation(_))), "{bad}");
        }
    }

    #[test]
    fn suite_contents() {
        let s = deformation_suite();
        assert_eq!(s.len(), 8);
        assert!(s.contains(&Deformation::PitchShift(-1)) && s.contains(&Deformation::PitchShift(1)));
        assert!(s.contains(&Deformation::WhiteNoise(0.1)) && s.contains(&Deformation::WhiteNoise(0.4)));
        assert_eq!(robustness_grid()[0], Deformation::None);
        assert_eq!(robustness_grid().len(), 9);
    }

    #[test]
    fn soft_knee_curve_is_continuous() {
        let p = CompressorPreset::speech();
        for edge in [p.threshold_db - p.knee_db / 2.0, p.threshold_db + p.knee_db / 2.0] {
            let (a, b) = (p.curve(edge - 1e-9), p.curve(edge + 1e-9));
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(p.curve(-60.0), -60.0);
        assert!((p.curve(0.0) - (-24.0 + 24.0 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn noise_zero_alpha_is_identity() {
        let c = AudioClip::new(vec![0.1, 0.2, -0.3], 16000, "a").unwrap();
        assert_eq!(add_white_noise(&c, 0.0, 5).unwrap(), c);
    }

    #[test]
    fn stretch_length_rule() {
        assert_eq!(stretch_samples(&vec![0.0; 16000], std::f64::consts::SQRT_2).len(), 11314);
        assert_eq!(stretch_samples(&vec![0.0; 16000], 1.0 / std::f64::consts::SQRT_2).len(), 22627);
    }
}
