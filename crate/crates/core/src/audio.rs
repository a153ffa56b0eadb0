//! Mono audio buffers, WAV I/O, band-limited resampling and chunking.

use std::path::Path;

use crate::error::{Error, Result};

/// Mono samples in `[-1, 1]` with their rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    /// Builds a clip, clipping samples into `[-1, 1]`. Rejects empty or
    /// non-finite buffers and a zero rate.
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidAudio("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAudio("non-finite sample".into()));
        }
        let samples = samples.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        Ok(AudioClip {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same id and rate, new samples.
    pub fn with_samples(&self, samples: Vec<f32>) -> Result<Self> {
        AudioClip::new(samples, self.sample_rate, self.source_id.clone())
    }
}

// ---------------------------------------------------------------- WAV

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_wav(&bytes, &id)
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a RIFF/WAVE byte buffer: 16-bit PCM or 32-bit float, one or two
/// channels. Stereo is averaged to mono.
pub fn parse_wav(bytes: &[u8], source_id: &str) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::MalformedWav("short fmt chunk".into()));
                }
                let mut tag = le_u16(body, 0);
                let channels = le_u16(body, 2);
                let rate = le_u32(body, 4);
                let bits = le_u16(body, 14);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(Error::MalformedWav("short extensible fmt chunk".into()));
                    }
                    tag = le_u16(body, 24);
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are padded to even length.
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let (tag, channels, rate, bits) = fmt.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    if rate == 0 {
        return Err(Error::MalformedWav("zero sample rate".into()));
    }
    let frame_values: Vec<f32> = match (tag, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        (t, b) => return Err(Error::UnsupportedEncoding(format!("format tag {t}, {b} bits"))),
    };
    let ch = channels as usize;
    let samples: Vec<f32> = frame_values
        .chunks_exact(ch)
        .map(|f| if ch == 1 { f[0] } else { (f[0] + f[1]) * 0.5 })
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::MalformedWav("non-finite float sample".into()));
    }
    AudioClip::new(samples, rate, source_id)
}

/// Encodes a clip as 16-bit mono PCM.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let n = clip.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.saturating_mul(2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &v in &clip.samples {
        let q = (v as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    std::fs::write(path, encode_wav_pcm16(clip))?;
    Ok(())
}

// ---------------------------------------------------------------- resampling

const ZERO_CROSSINGS: f64 = 64.0;
const KAISER_BETA: f64 = 8.6;
/// Above this many phases the kernel is evaluated per output sample
/// instead of tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

struct SincKernel {
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl SincKernel {
    /// Weight of an input sample at signed distance `x` (input samples).
    fn weight(&self, x: f64) -> f64 {
        let r = x / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        let arg = std::f64::consts::PI * self.cutoff * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        self.cutoff * sinc * window
    }
}

/// Output length for a rate change: `round(len · target / source)`.
pub fn resampled_len(len: usize, source: u32, target: u32) -> usize {
    let num = len as u128 * target as u128;
    ((2 * num + source as u128) / (2 * source as u128)) as usize
}

/// Polyphase windowed-sinc rate conversion (Kaiser β = 8.6, 64 zero
/// crossings per side). Equal rates return the clip unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::InvalidAudio("target rate must be positive".into()));
    }
    let src = clip.sample_rate;
    if src == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(src as u64, target_rate as u64);
    let (up, down) = (target_rate as u64 / g, src as u64 / g);
    let kernel = SincKernel {
        cutoff: (up as f64 / down as f64).min(1.0),
        half_width: ZERO_CROSSINGS / (up as f64 / down as f64).min(1.0),
        i0_beta: bessel_i0(KAISER_BETA),
    };
    let reach = kernel.half_width.ceil() as i64;
    let taps = (2 * reach) as usize;
    let x = clip.samples();
    let n_in = x.len() as i64;
    let out_len = resampled_len(x.len(), src, target_rate).max(1);

    // phase p covers input offsets base - reach + 1 ..= base + reach
    let table: Option<Vec<f32>> = (up <= MAX_TABLE_PHASES).then(|| {
        let mut t = Vec::with_capacity(up as usize * taps);
        for p in 0..up {
            let frac = p as f64 / up as f64;
            for j in 0..taps as i64 {
                let offset = j - reach + 1;
                t.push(kernel.weight(offset as f64 - frac) as f32);
            }
        }
        t
    });

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let num = n * down;
        let base = (num / up) as i64;
        let phase = num % up;
        let mut acc = 0.0f64;
        for j in 0..taps as i64 {
            let idx = base + j - reach + 1;
            if idx < 0 || idx >= n_in {
                continue;
            }
            let w = match &table {
                Some(t) => t[phase as usize * taps + j as usize] as f64,
                None => kernel.weight((j - reach + 1) as f64 - phase as f64 / up as f64),
            };
            acc += w * x[idx as usize] as f64;
        }
        out.push(acc as f32);
    }
    AudioClip::new(out, target_rate, clip.source_id.clone())
}

/// Kernel samples per input-sample unit in the interpolated table used for
/// arbitrary (non-rational) ratios.
const TABLE_DENSITY: usize = 512;

/// Windowed-sinc interpolation of `x` by an arbitrary factor
/// `ratio = output rate / input rate`, producing exactly `out_len` samples.
/// The kernel is tabulated densely and linearly interpolated.
pub fn resample_ratio(x: &[f32], ratio: f64, out_len: usize) -> Vec<f32> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resampling ratio must be positive");
    let cutoff = ratio.min(1.0);
    let kernel = SincKernel {
        cutoff,
        half_width: ZERO_CROSSINGS / cutoff,
        i0_beta: bessel_i0(KAISER_BETA),
    };
    let table_len = (kernel.half_width * TABLE_DENSITY as f64).ceil() as usize + 2;
    let table: Vec<f64> = (0..table_len).map(|i| kernel.weight(i as f64 / TABLE_DENSITY as f64)).collect();
    let lookup = |d: f64| {
        let pos = d.abs() * TABLE_DENSITY as f64;
        let i = pos as usize;
        if i + 1 >= table_len {
            return 0.0;
        }
        let f = pos - i as f64;
        table[i] * (1.0 - f) + table[i + 1] * f
    };
    let reach = kernel.half_width.ceil() as i64;
    let n_in = x.len() as i64;
    (0..out_len)
        .map(|n| {
            let p = n as f64 / ratio;
            let base = p.floor() as i64;
            let mut acc = 0.0f64;
            for idx in (base - reach + 1).max(0)..=(base + reach).min(n_in - 1) {
                acc += lookup(idx as f64 - p) * x[idx as usize] as f64;
            }
            acc as f32
        })
        .collect()
}

/// Samples `[start, start + length)`, zero-padded past the end of the clip.
pub fn slice_chunk(clip: &AudioClip, start: usize, length: usize) -> Result<AudioClip> {
    if length == 0 {
        return Err(Error::InvalidAudio("chunk length must be positive".into()));
    }
    let mut out = vec![0.0; length];
    let x = clip.samples();
    if start < x.len() {
        let n = (x.len() - start).min(length);
        out[..n].copy_from_slice(&x[start..start + n]);
    }
    clip.with_samples(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(tag: u16, channels: u16, bits: u16, rate: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + payload.len() as u32).to_le_bytes());
        b.extend_from_slice(b"WAVE");
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&tag.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        let block = channels * bits / 8;
        b.extend_from_slice(&(rate * block as u32).to_le_bytes());
        b.extend_from_slice(&block.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let clip = parse_wav(&wav_bytes(1, 1, 16, 16000, &vec![0u8; 32000]), "s").unwrap();
        assert_eq!(clip.len(), 16000);
        assert!(clip.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn opposite_stereo_channels_cancel() {
        let mut payload = Vec::new();
        for _ in 0..10 {
            payload.extend_from_slice(&0.5f32.to_le_bytes());
            payload.extend_from_slice(&(-0.5f32).to_le_bytes());
        }
        let clip = parse_wav(&wav_bytes(3, 2, 32, 8000, &payload), "st").unwrap();
        assert_eq!(clip.len(), 10);
        assert!(clip.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn most_negative_pcm_is_minus_one() {
        let clip = parse_wav(&wav_bytes(1, 1, 16, 16000, &(-32768i16).to_le_bytes()), "m").unwrap();
        assert_eq!(clip.samples()[0], -32768.0 / 32768.0);
    }

    #[test]
    fn rejects_other_encodings() {
        assert!(matches!(
            parse_wav(&wav_bytes(1, 1, 24, 16000, &[0; 6]), "x"),
            Err(Error::UnsupportedEncoding(_))
        ));
        assert!(matches!(
            parse_wav(&wav_bytes(1, 3, 16, 16000, &[0; 6]), "x"),
            Err(Error::UnsupportedEncoding(_))
        ));
        assert!(parse_wav(b"RIFF\0\0\0\0WAVE", "x").is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_wav(Path::new("/definitely/not/here.wav")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn same_rate_is_identity() {
        let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 16000, "a").unwrap();
        assert_eq!(resample(&clip, 16000).unwrap(), clip);
    }

    #[test]
    fn cd_rate_second_becomes_16000_samples() {
        let clip = AudioClip::new(vec![0.0; 44100], 44100, "a").unwrap();
        let out = resample(&clip, 16000).unwrap();
        assert_eq!(out.len(), 16000);
        assert_eq!(out.sample_rate(), 16000);
    }

    #[test]
    fn slicing_pads_and_indexes() {
        let ramp: Vec<f32> = (0..200).map(|i| i as f32 / 1000.0).collect();
        let clip = AudioClip::new(ramp.clone(), 16000, "r").unwrap();
        assert_eq!(slice_chunk(&clip, 0, 200).unwrap(), clip);
        let s = slice_chunk(&clip, 100, 50).unwrap();
        assert_eq!(s.samples(), &ramp[100..150]);
        let long = slice_chunk(&clip, 0, 400).unwrap();
        assert_eq!(&long.samples()[..200], &ramp[..]);
        assert!(long.samples()[200..].iter().all(|&v| v == 0.0));
        assert_eq!(slice_chunk(&clip, 500, 3).unwrap().samples(), &[0.0; 3]);
    }

    #[test]
    fn constructor_clips_and_validates() {
        let c = AudioClip::new(vec![2.0, -3.0], 1, "c").unwrap();
        assert_eq!(c.samples(), &[1.0, -1.0]);
        assert!(AudioClip::new(vec![], 1, "c").is_err());
        assert!(AudioClip::new(vec![0.0], 0, "c").is_err());
        assert!(AudioClip::new(vec![f32::NAN], 1, "c").is_err());
    }

    #[test]
    fn bessel_matches_known_value() {
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
    }
}
