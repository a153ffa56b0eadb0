use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Running statistics of a batch-norm layer. The tensors are updated in
/// place during training-mode forward passes.
#[derive(Clone, Debug)]
pub struct BatchNormStats {
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f32,
    pub eps: f32,
}

/// Per-channel normalization of `x [N, C, ...]`.
///
/// Training mode normalizes with the batch statistics (biased variance over
/// batch and spatial positions) and folds them into the running estimates
/// with `momentum`; evaluation mode uses the running estimates.
pub fn batch_norm(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: &BatchNormStats,
    training: bool,
) -> Result<Tensor> {
    let xs = x.shape();
    if xs.len() < 2 {
        return shape_err("batch_norm", format!("expected [N, C, ...], got {xs:?}"));
    }
    let (n, c) = (xs[0], xs[1]);
    let s: usize = xs[2..].iter().product();
    for t in [gamma, beta, &stats.running_mean, &stats.running_var] {
        if t.shape() != [c] {
            return shape_err("batch_norm", format!("per-channel tensor {:?} for {c} channels", t.shape()));
        }
    }
    let m = n * s;
    let xd = x.to_vec();
    let (mean, var): (Vec<f64>, Vec<f64>) = if training {
        let mut mean = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for (i, row) in xd.chunks(s).enumerate() {
            mean[i % c] += row.iter().map(|&v| v as f64).sum::<f64>();
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        for (i, row) in xd.chunks(s).enumerate() {
            let mu = mean[i % c];
            sq[i % c] += row.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>();
        }
        let var: Vec<f64> = sq.iter().map(|v| v / m as f64).collect();
        let mom = stats.momentum as f64;
        let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
        let mut rm = stats.running_mean.data_mut();
        let mut rv = stats.running_var.data_mut();
        for ch in 0..c {
            rm[ch] = ((1.0 - mom) * rm[ch] as f64 + mom * mean[ch]) as f32;
            rv[ch] = ((1.0 - mom) * rv[ch] as f64 + mom * var[ch] * unbias) as f32;
        }
        (mean, var)
    } else {
        (
            stats.running_mean.data().iter().map(|&v| v as f64).collect(),
            stats.running_var.data().iter().map(|&v| v as f64).collect(),
        )
    };
    let eps = stats.eps as f64;
    let inv: Vec<f32> = var.iter().map(|v| (1.0 / (v + eps).sqrt()) as f32).collect();
    let mean: Vec<f32> = mean.into_iter().map(|v| v as f32).collect();
    let (gd, bd) = (gamma.to_vec(), beta.to_vec());
    let mut xhat = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    for (i, ((row, xh), o)) in xd.chunks(s).zip(xhat.chunks_mut(s)).zip(out.chunks_mut(s)).enumerate() {
        let ch = i % c;
        for ((&v, h), y) in row.iter().zip(xh.iter_mut()).zip(o.iter_mut()) {
            *h = (v - mean[ch]) * inv[ch];
            *y = gd[ch] * *h + bd[ch];
        }
    }
    let (xc, gc, bc) = (x.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        "batch_norm",
        xs.to_vec(),
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let mut sum_g = vec![0.0f64; c];
            let mut sum_gx = vec![0.0f64; c];
            for (i, (gr, xh)) in g.chunks(s).zip(xhat.chunks(s)).enumerate() {
                let ch = i % c;
                for (&gv, &h) in gr.iter().zip(xh) {
                    sum_g[ch] += gv as f64;
                    sum_gx[ch] += gv as f64 * h as f64;
                }
            }
            let gx = xc.requires_grad().then(|| {
                let mut gx = vec![0.0; g.len()];
                for (i, ((gr, xh), dst)) in g.chunks(s).zip(xhat.chunks(s)).zip(gx.chunks_mut(s)).enumerate() {
                    let ch = i % c;
                    let k = gd[ch] * inv[ch];
                    if training {
                        let mg = (sum_g[ch] / m as f64) as f32;
                        let mgx = (sum_gx[ch] / m as f64) as f32;
                        for ((d, &gv), &h) in dst.iter_mut().zip(gr).zip(xh) {
                            *d = k * (gv - mg - h * mgx);
                        }
                    } else {
                        for (d, &gv) in dst.iter_mut().zip(gr) {
                            *d = k * gv;
                        }
                    }
                }
                gx
            });
            let gg = gc.requires_grad().then(|| sum_gx.iter().map(|&v| v as f32).collect());
            let gb = bc.requires_grad().then(|| sum_g.iter().map(|&v| v as f32).collect());
            vec![gx, gg, gb]
        }),
    ))
}

/// Normalization over the last axis with affine `gamma`/`beta` of length D.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let d = *x.shape().last().unwrap();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return shape_err("layer_norm", format!("affine {:?} for width {d}", gamma.shape()));
    }
    let xd = x.to_vec();
    let (gd, bd) = (gamma.to_vec(), beta.to_vec());
    let rows = xd.len() / d;
    let mut xhat = vec![0.0; xd.len()];
    let mut inv = vec![0.0f32; rows];
    let mut out = vec![0.0; xd.len()];
    for r in 0..rows {
        let row = &xd[r * d..(r + 1) * d];
        let mu = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / d as f64;
        let iv = (1.0 / (var + eps as f64).sqrt()) as f32;
        inv[r] = iv;
        for j in 0..d {
            let h = (row[j] - mu as f32) * iv;
            xhat[r * d + j] = h;
            out[r * d + j] = gd[j] * h + bd[j];
        }
    }
    let (xc, gc, bc) = (x.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        "layer_norm",
        x.shape().to_vec(),
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let mut gg = vec![0.0f64; d];
            let mut gb = vec![0.0f64; d];
            let mut gx = vec![0.0; g.len()];
            for r in 0..rows {
                let gr = &g[r * d..(r + 1) * d];
                let xh = &xhat[r * d..(r + 1) * d];
                let mut s1 = 0.0f64;
                let mut s2 = 0.0f64;
                for j in 0..d {
                    gg[j] += gr[j] as f64 * xh[j] as f64;
                    gb[j] += gr[j] as f64;
                    let dh = (gr[j] * gd[j]) as f64;
                    s1 += dh;
                    s2 += dh * xh[j] as f64;
                }
                let (m1, m2) = ((s1 / d as f64) as f32, (s2 / d as f64) as f32);
                for j in 0..d {
                    gx[r * d + j] = inv[r] * (gr[j] * gd[j] - m1 - xh[j] * m2);
                }
            }
            vec![
                xc.requires_grad().then_some(gx),
                gc.requires_grad().then(|| gg.into_iter().map(|v| v as f32).collect()),
                bc.requires_grad().then(|| gb.into_iter().map(|v| v as f32).collect()),
            ]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(c: usize) -> BatchNormStats {
        BatchNormStats {
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::full(&[c], 1.0),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let (n, c, s) = (4, 3, 5);
        let data: Vec<f32> = (0..n * c * s).map(|i| ((i * 7919) % 101) as f32 * 0.37 - 4.0).collect();
        let x = Tensor::new(&[n, c, s], data).unwrap();
        let y = batch_norm(&x, &Tensor::full(&[c], 1.0), &Tensor::zeros(&[c]), &stats(c), true)
            .unwrap()
            .to_vec();
        for ch in 0..c {
            let vals: Vec<f64> = (0..n).flat_map(|b| (0..s).map(move |j| (b, j))).map(|(b, j)| y[(b * c + ch) * s + j] as f64).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn running_stats_move_with_momentum() {
        let x = Tensor::new(&[2, 1, 1], vec![1.0, 3.0]).unwrap();
        let st = stats(1);
        batch_norm(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &st, true).unwrap();
        assert!((st.running_mean.item() - 0.2).abs() < 1e-6);
        // unbiased variance of {1, 3} is 2
        assert!((st.running_var.item() - (0.9 + 0.2)).abs() < 1e-6);
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let x = Tensor::new(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        let st = stats(1);
        let y = batch_norm(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &st, false).unwrap();
        let k = 1.0 / (1.0f32 + 1e-5).sqrt();
        assert_eq!(y.to_vec(), vec![k, 3.0 * k]);
        assert_eq!(st.running_mean.item(), 0.0);
    }
}
