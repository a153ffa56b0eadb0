//! Slow, obviously-correct reference computations for tests.
//!
//! The numeric oracles share no code with the production crates; the
//! gradient-check catalog drives the autodiff engine through its public API.

pub mod grad;

/// Central finite-difference gradient of `f` at `x`.
///
/// Each coordinate is perturbed by `±h` (in f32 storage, since that is what
/// the function consumes); the difference quotient uses the perturbation that
/// was actually representable.
pub fn finite_diff_grad(f: &mut dyn FnMut(&[f32]) -> f64, x: &[f32], h: f32) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = x[i];
        let up = x0 + h;
        let dn = x0 - h;
        probe[i] = up;
        let fu = f(&probe);
        probe[i] = dn;
        let fd = f(&probe);
        probe[i] = x0;
        out.push((fu - fd) / (up as f64 - dn as f64));
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

/// Mann-Whitney statistic by explicit enumeration of positive/negative pairs.
pub fn roc_auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision from first principles: for every distinct score
/// threshold, from highest to lowest, take the set of examples scoring at or
/// above it and add `(R − R_prev) · P`.
pub fn average_precision_prefix(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let selected: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = selected.iter().filter(|&&i| labels[i]).count() as f64;
        let recall = tp / n_pos;
        let precision = tp / selected.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Magnitude of the length-N DFT of `x` at integer bin `k`, summed directly.
pub fn dft_magnitude(x: &[f32], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (t, &v) in x.iter().enumerate() {
        let ph = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / n;
        re += v as f64 * ph.cos();
        im += v as f64 * ph.sin();
    }
    (re * re + im * im).sqrt()
}

/// Bin in `lo..=hi` with the largest direct-DFT magnitude.
pub fn dft_peak_bin(x: &[f32], lo: usize, hi: usize) -> usize {
    (lo..=hi)
        .map(|k| (k, dft_magnitude(x, k)))
        .fold((lo, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

/// Frequency in Hz of bin `k` for an `n`-point transform.
pub fn bin_hz(k: usize, n: usize, sample_rate: u32) -> f64 {
    k as f64 * sample_rate as f64 / n as f64
}

pub fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

pub fn sine(freq: f64, sample_rate: u32, len: usize, amp: f32) -> Vec<f32> {
    (0..len)
        .map(|t| amp * (2.0 * std::f64::consts::PI * freq * t as f64 / sample_rate as f64).sin() as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_example() {
        let s = [0.1, 0.4, 0.35, 0.8];
        let l = [false, false, true, true];
        assert!((roc_auc_pairwise(&s, &l) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn prefix_examples() {
        let ap = average_precision_prefix(&[0.9, 0.8, 0.7], &[true, false, true]);
        assert!((ap - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);
        let ap = average_precision_prefix(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]);
        assert!((ap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fd_of_square() {
        let g = finite_diff_grad(&mut |x| (x[0] as f64).powi(2), &[3.0], 1e-2);
        assert!((g[0] - 6.0).abs() < 1e-4);
    }

    #[test]
    fn dft_finds_bin() {
        let x = sine(1000.0, 16000, 512, 1.0);
        assert_eq!(dft_peak_bin(&x, 1, 255), 32);
    }
}
