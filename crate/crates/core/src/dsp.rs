//! Spectral front ends: STFT, Slaney mel filterbank, log-mel
//! spectrograms and the harmonically stacked filterbank.

use std::io::Write;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use tagbench_autodiff::{Tensor, ops};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

pub const N_FFT: usize = 512;
pub const HOP: usize = 256;
/// Power is clamped here before the logarithm.
pub const POWER_FLOOR: f32 = 1e-10;

/// Frame count under center padding.
pub fn n_frames(num_samples: usize, hop: usize) -> usize {
    1 + num_samples / hop
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as f32)
        .collect()
}

/// Maps an out-of-range index into `0..n` by mirror reflection about the
/// end samples (the edge sample is not repeated).
fn reflect_index(mut i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    i = i.rem_euclid(period);
    if i >= n as i64 {
        i = period - i;
    }
    i as usize
}

/// Complex STFT, stored bin-major: `re[k * n_frames + t]`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub n_bins: usize,
    pub n_frames: usize,
    pub re: Vec<f32>,
    pub im: Vec<f32>,
}

impl Spectrum {
    pub fn power(&self) -> Vec<f32> {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).collect()
    }

    pub fn magnitude(&self, bin: usize, frame: usize) -> f32 {
        let j = bin * self.n_frames + frame;
        self.re[j].hypot(self.im[j])
    }
}

/// Hann-windowed STFT with reflect center padding; frame `t` is centered on
/// sample `t·hop`.
pub fn stft(samples: &[f32], n_fft: usize, hop: usize) -> Spectrum {
    let n_bins = n_fft / 2 + 1;
    let frames = n_frames(samples.len(), hop);
    let window = hann(n_fft);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(n_fft);
    let mut re = vec![0.0; n_bins * frames];
    let mut im = vec![0.0; n_bins * frames];
    let mut buf = vec![Complex::new(0.0f32, 0.0); n_fft];
    let half = (n_fft / 2) as i64;
    let n = samples.len();
    for t in 0..frames {
        let start = (t * hop) as i64 - half;
        for (j, slot) in buf.iter_mut().enumerate() {
            let idx = start + j as i64;
            let v = if idx >= 0 && (idx as usize) < n {
                samples[idx as usize]
            } else {
                samples[reflect_index(idx, n)]
            };
            *slot = Complex::new(v * window[j], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            re[k * frames + t] = buf[k].re;
            im[k * frames + t] = buf[k].im;
        }
    }
    Spectrum { n_bins, n_frames: frames, re, im }
}

// ---------------------------------------------------------------- mel scale

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(f: f64) -> f64 {
    if f < MIN_LOG_HZ {
        f / F_SP
    } else {
        MIN_LOG_MEL + (f / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(m: f64) -> f64 {
    if m < MIN_LOG_MEL {
        m * F_SP
    } else {
        MIN_LOG_HZ * ((m - MIN_LOG_MEL) * log_step()).exp()
    }
}

/// Slope of the inverse mel map, Hz per mel, at frequency `f`.
pub fn hz_per_mel(f: f64) -> f64 {
    if f < MIN_LOG_HZ { F_SP } else { f * log_step() }
}

/// `n + 2` frequencies equally spaced in mel from 0 Hz to Nyquist.
fn mel_points(n: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n + 2).map(|i| mel_to_hz(top * i as f64 / (n + 1) as f64)).collect()
}

fn bin_freqs(n_fft: usize, sample_rate: u32) -> Vec<f64> {
    (0..=n_fft / 2).map(|k| k as f64 * sample_rate as f64 / n_fft as f64).collect()
}

/// Dense `[rows × bins]` non-negative weights with each row's support.
#[derive(Clone, Debug)]
pub struct FilterbankMatrix {
    pub n_rows: usize,
    pub n_bins: usize,
    pub weights: Vec<f32>,
    support: Vec<(usize, usize)>,
}

impl FilterbankMatrix {
    fn from_dense(n_rows: usize, n_bins: usize, weights: Vec<f32>) -> Self {
        let support = weights
            .chunks(n_bins)
            .map(|row| {
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).map_or(0, |l| l + 1);
                (first, last.max(first))
            })
            .collect();
        FilterbankMatrix { n_rows, n_bins, weights, support }
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.weights[r * self.n_bins..(r + 1) * self.n_bins]
    }

    /// Half-open bin range holding the row's positive weights.
    pub fn support(&self, r: usize) -> (usize, usize) {
        self.support[r]
    }

    /// `W · power` for a bin-major `[bins × frames]` matrix.
    pub fn apply(&self, power: &[f32], frames: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; self.n_rows * frames];
        for r in 0..self.n_rows {
            let (lo, hi) = self.support[r];
            let dst = &mut out[r * frames..(r + 1) * frames];
            for k in lo..hi {
                let w = self.weights[r * self.n_bins + k];
                let src = &power[k * frames..(k + 1) * frames];
                dst.iter_mut().zip(src).for_each(|(d, &p)| *d += w * p);
            }
        }
        out
    }
}

/// Triangular Slaney-normalized mel filters: centers equally spaced in mel
/// from 0 Hz to Nyquist, each triangle scaled by `2 / (f_hi - f_lo)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<FilterbankMatrix> {
    let max = n_fft / 2;
    if n_mels == 0 || n_mels > max {
        return Err(Error::InvalidBandCount { n_mels, max });
    }
    let pts = mel_points(n_mels, sample_rate);
    let freqs = bin_freqs(n_fft, sample_rate);
    let n_bins = freqs.len();
    let mut w = vec![0.0f32; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, c, hi) = (pts[m], pts[m + 1], pts[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in freqs.iter().enumerate() {
            let rise = (f - lo) / (c - lo);
            let fall = (hi - f) / (hi - c);
            let v = rise.min(fall).max(0.0);
            w[m * n_bins + k] = (v * norm) as f32;
        }
    }
    let fb = FilterbankMatrix::from_dense(n_mels, n_bins, w);
    if (0..n_mels).any(|r| fb.row(r).iter().all(|&v| v == 0.0)) {
        return Err(Error::InvalidBandCount { n_mels, max });
    }
    Ok(fb)
}

/// Natural-log mel spectrogram, band-major `[n_mels × n_frames]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub n_mels: usize,
    pub n_frames: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

fn require_rate(clip: &AudioClip) -> Result<()> {
    if clip.sample_rate() != SAMPLE_RATE {
        return Err(Error::WrongSampleRate {
            expected: SAMPLE_RATE,
            found: clip.sample_rate(),
        });
    }
    Ok(())
}

/// `ln(max(W · |STFT|², floor))` with the 512-point, hop-256 analysis.
pub fn mel_spectrogram(clip: &AudioClip, n_mels: usize) -> Result<MelSpectrogram> {
    require_rate(clip)?;
    let fb = mel_filterbank(n_mels, N_FFT, SAMPLE_RATE)?;
    Ok(mel_with(&fb, clip.samples()))
}

/// Log-mel with a prebuilt filterbank; the caller guarantees the rate.
pub fn mel_with(fb: &FilterbankMatrix, samples: &[f32]) -> MelSpectrogram {
    let spec = stft(samples, N_FFT, HOP);
    let mut values = fb.apply(&spec.power(), spec.n_frames);
    values.iter_mut().for_each(|v| *v = v.max(POWER_FLOOR).ln());
    MelSpectrogram {
        values,
        n_mels: fb.n_rows,
        n_frames: spec.n_frames,
        hop: HOP,
        sample_rate: SAMPLE_RATE,
    }
}

/// Power spectrogram `[bins × frames]` at the standard analysis settings.
pub fn power_spectrogram(samples: &[f32]) -> (Vec<f32>, usize) {
    let spec = stft(samples, N_FFT, HOP);
    (spec.power(), spec.n_frames)
}

// ---------------------------------------------------------------- harmonic stacking

/// Band centers and bandwidth rule for the harmonic filterbank. The
/// triangle of harmonic `h` (1-based) in band `b` is centered at `h·f_b`
/// with half-width `alpha · Δmel · dHz/dmel(h·f_b)`.
#[derive(Clone, Debug)]
pub struct HarmonicBank {
    pub n_bands: usize,
    pub n_harmonics: usize,
    pub center_freqs: Vec<f64>,
    delta_mel: f64,
    bin_freqs: Vec<f64>,
    nyquist: f64,
}

impl HarmonicBank {
    pub fn new(n_bands: usize, n_harmonics: usize, n_fft: usize, sample_rate: u32) -> Result<Self> {
        if n_bands == 0 || n_harmonics == 0 {
            return Err(Error::InvalidBandCount { n_mels: n_bands, max: n_fft / 2 });
        }
        let pts = mel_points(n_bands, sample_rate);
        let nyquist = sample_rate as f64 / 2.0;
        Ok(HarmonicBank {
            n_bands,
            n_harmonics,
            center_freqs: pts[1..=n_bands].to_vec(),
            delta_mel: hz_to_mel(nyquist) / (n_bands + 1) as f64,
            bin_freqs: bin_freqs(n_fft, sample_rate),
            nyquist,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.bin_freqs.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_bands * self.n_harmonics
    }

    /// Center of row `r = h·n_bands + b` (h zero-based).
    pub fn row_center(&self, r: usize) -> f64 {
        let (h, b) = (r / self.n_bands, r % self.n_bands);
        (h + 1) as f64 * self.center_freqs[b]
    }

    fn half_width(&self, center: f64, alpha: f64) -> f64 {
        alpha * self.delta_mel * hz_per_mel(center)
    }

    /// Per-row sparse weights and their derivative with respect to alpha:
    /// `(row, bin, w, dw/dα)`.
    fn entries(&self, alpha: f64) -> Vec<(usize, usize, f32, f32)> {
        let mut out = Vec::new();
        if alpha <= 0.0 {
            return out;
        }
        for r in 0..self.n_rows() {
            let c = self.row_center(r);
            if c > self.nyquist {
                continue;
            }
            let hw = self.half_width(c, alpha);
            for (k, &f) in self.bin_freqs.iter().enumerate() {
                let d = (f - c).abs();
                if d < hw {
                    let w = 1.0 - d / hw;
                    let dw = d / (alpha * hw);
                    out.push((r, k, w as f32, dw as f32));
                }
            }
        }
        out
    }

    /// Dense weights `[rows × bins]` for a given alpha.
    pub fn matrix(&self, alpha: f32) -> FilterbankMatrix {
        let mut w = vec![0.0f32; self.n_rows() * self.n_bins()];
        for (r, k, v, _) in self.entries(alpha as f64) {
            w[r * self.n_bins() + k] = v;
        }
        FilterbankMatrix::from_dense(self.n_rows(), self.n_bins(), w)
    }
}

/// Differentiable harmonic filtering of a power spectrogram
/// `power [N, bins, T]` into `[N, harmonics, bands, T]`; `alpha` is a
/// one-element tensor scaling every bandwidth.
pub fn harmonic_filter(power: &Tensor, alpha: &Tensor, bank: &HarmonicBank) -> Result<Tensor> {
    let ps = power.shape().to_vec();
    if ps.len() != 3 || ps[1] != bank.n_bins() || alpha.numel() != 1 {
        return Err(tagbench_autodiff::Error::ShapeMismatch {
            op: "harmonic_filter",
            detail: format!("power {ps:?}, alpha {:?}, {} bins expected", alpha.shape(), bank.n_bins()),
        }
        .into());
    }
    let (n, bins, t) = (ps[0], ps[1], ps[2]);
    let rows = bank.n_rows();
    let entries = bank.entries(alpha.item() as f64);
    let p = power.to_vec();
    let mut out = vec![0.0f32; n * rows * t];
    for b in 0..n {
        for &(r, k, w, _) in &entries {
            let src = &p[(b * bins + k) * t..(b * bins + k + 1) * t];
            let dst = &mut out[(b * rows + r) * t..(b * rows + r + 1) * t];
            dst.iter_mut().zip(src).for_each(|(d, &v)| *d += w * v);
        }
    }
    let (pc, ac) = (power.clone(), alpha.clone());
    Ok(Tensor::from_op(
        "harmonic_filter",
        vec![n, bank.n_harmonics, bank.n_bands, t],
        out,
        vec![power.clone(), alpha.clone()],
        Box::new(move |g| {
            let gp = pc.requires_grad().then(|| {
                let mut gp = vec![0.0f32; n * bins * t];
                for b in 0..n {
                    for &(r, k, w, _) in &entries {
                        let src = &g[(b * rows + r) * t..(b * rows + r + 1) * t];
                        let dst = &mut gp[(b * bins + k) * t..(b * bins + k + 1) * t];
                        dst.iter_mut().zip(src).for_each(|(d, &v)| *d += w * v);
                    }
                }
                gp
            });
            let ga = ac.requires_grad().then(|| {
                let mut acc = 0.0f64;
                for b in 0..n {
                    for &(r, k, _, dw) in &entries {
                        let pv = &p[(b * bins + k) * t..(b * bins + k + 1) * t];
                        let gv = &g[(b * rows + r) * t..(b * rows + r + 1) * t];
                        let dot: f64 = pv.iter().zip(gv).map(|(&x, &y)| x as f64 * y as f64).sum();
                        acc += dw as f64 * dot;
                    }
                }
                vec![acc as f32]
            });
            vec![gp, ga]
        }),
    ))
}

/// Log-compressed harmonic stack `[n_harmonics × n_bands × n_frames]`.
#[derive(Clone, Debug)]
pub struct HarmonicTensor {
    pub values: Vec<f32>,
    pub n_harmonics: usize,
    pub n_bands: usize,
    pub n_frames: usize,
    pub center_freqs: Vec<f64>,
    pub bandwidth_alpha: f32,
}

impl HarmonicTensor {
    pub fn at(&self, h: usize, b: usize, t: usize) -> f32 {
        self.values[(h * self.n_bands + b) * self.n_frames + t]
    }
}

pub fn harmonic_representation(
    clip: &AudioClip,
    n_bands: usize,
    n_harmonics: usize,
    alpha: f32,
) -> Result<HarmonicTensor> {
    require_rate(clip)?;
    let bank = HarmonicBank::new(n_bands, n_harmonics, N_FFT, SAMPLE_RATE)?;
    let (power, frames) = power_spectrogram(clip.samples());
    let p = Tensor::new(&[1, bank.n_bins(), frames], power)?;
    let a = Tensor::scalar(alpha);
    let y = ops::log_clamp(&harmonic_filter(&p, &a, &bank)?, POWER_FLOOR);
    Ok(HarmonicTensor {
        values: y.to_vec(),
        n_harmonics,
        n_bands,
        n_frames: frames,
        center_freqs: bank.center_freqs.clone(),
        bandwidth_alpha: alpha,
    })
}

/// Writes a row-major matrix as tab-separated text, one row per line.
pub fn write_matrix_tsv(mut w: impl Write, values: &[f32], rows: usize, cols: usize) -> Result<()> {
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join("\t"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_counts() {
        assert_eq!(n_frames(16_000, HOP), 63);
        assert_eq!(n_frames(48_000, HOP), 188);
        assert_eq!(n_frames(465_600, HOP), 1819);
        assert_eq!(n_frames(80_000, HOP), 313);
        assert_eq!(n_frames(59_049, HOP), 231);
    }

    #[test]
    fn zero_signal_has_zero_spectrum() {
        let s = stft(&[0.0; 1000], N_FFT, HOP);
        assert!(s.re.iter().chain(&s.im).all(|&v| v == 0.0));
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(-7, 3), 1);
    }

    #[test]
    fn mel_scale_roundtrip() {
        for f in [0.0, 300.0, 999.0, 1000.0, 4321.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn filterbank_shapes() {
        assert_eq!(mel_filterbank(96, 512, 16000).unwrap().weights.len(), 96 * 257);
        assert_eq!(mel_filterbank(128, 512, 16000).unwrap().n_rows, 128);
        assert!(matches!(mel_filterbank(300, 512, 16000), Err(Error::InvalidBandCount { .. })));
    }

    #[test]
    fn silence_hits_log_floor() {
        let clip = AudioClip::new(vec![0.0; 4000], 16000, "z").unwrap();
        let m = mel_spectrogram(&clip, 96).unwrap();
        assert!(m.values.iter().all(|&v| v == POWER_FLOOR.ln()));
        let wrong = AudioClip::new(vec![0.0; 4000], 22050, "z").unwrap();
        assert!(matches!(mel_spectrogram(&wrong, 96), Err(Error::WrongSampleRate { .. })));
    }

    #[test]
    fn harmonic_rows_above_nyquist_are_empty() {
        let bank = HarmonicBank::new(128, 6, N_FFT, SAMPLE_RATE).unwrap();
        let m = bank.matrix(1.0);
        for r in 0..bank.n_rows() {
            let empty = m.row(r).iter().all(|&v| v == 0.0);
            if bank.row_center(r) > 8000.0 {
                assert!(empty, "row {r}");
            }
        }
    }

    #[test]
    fn tsv_dump() {
        let mut buf = Vec::new();
        write_matrix_tsv(&mut buf, &[1.0, 2.5, -3.0, 4.0], 2, 2).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1\t2.5\n-3\t4\n");
    }
}
