use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let out: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(|g| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let out: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        "sub",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(|g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let out: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        "mul",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = ac.requires_grad().then(|| {
                g.iter().zip(bc.data().iter()).map(|(g, b)| g * b).collect()
            });
            let gb = bc.requires_grad().then(|| {
                g.iter().zip(ac.data().iter()).map(|(g, a)| g * a).collect()
            });
            vec![ga, gb]
        }),
    ))
}

pub fn scale(x: &Tensor, s: f32) -> Tensor {
    let out = x.data().iter().map(|v| v * s).collect();
    Tensor::from_op(
        "scale",
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |g| vec![Some(g.iter().map(|v| v * s).collect())]),
    )
}

/// Elementwise map whose derivative is expressed through the output.
fn unary_by_output(
    name: &'static str,
    x: &Tensor,
    f: impl Fn(f32) -> f32,
    dfdy: impl Fn(f32) -> f32 + Send + Sync + 'static,
) -> Tensor {
    let out: Vec<f32> = x.data().iter().map(|&v| f(v)).collect();
    let y = out.clone();
    Tensor::from_op(
        name,
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |g| vec![Some(g.iter().zip(&y).map(|(g, &y)| g * dfdy(y)).collect())]),
    )
}

pub fn relu(x: &Tensor) -> Tensor {
    unary_by_output("relu", x, |v| v.max(0.0), |y| if y > 0.0 { 1.0 } else { 0.0 })
}

pub(crate) fn sigmoid_scalar(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    unary_by_output("sigmoid", x, sigmoid_scalar, |y| y * (1.0 - y))
}

pub fn tanh(x: &Tensor) -> Tensor {
    unary_by_output("tanh", x, f32::tanh, |y| 1.0 - y * y)
}

/// `ln(max(x, floor))`. The gradient is zero where the floor is active.
pub fn log_clamp(x: &Tensor, floor: f32) -> Tensor {
    let xd = x.to_vec();
    let out = xd.iter().map(|&v| v.max(floor).ln()).collect();
    Tensor::from_op(
        "log_clamp",
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            vec![Some(
                g.iter()
                    .zip(&xd)
                    .map(|(g, &v)| if v > floor { g / v } else { 0.0 })
                    .collect(),
            )]
        }),
    )
}

/// Inverted dropout: zeroes each element with probability `p` and scales the
/// survivors by `1 / (1 - p)`.
pub fn dropout(x: &Tensor, p: f32, rng: &mut impl Rng) -> Tensor {
    if p <= 0.0 {
        return x.clone();
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..x.numel())
        .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
        .collect();
    let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::from_op(
        "dropout",
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |g| vec![Some(g.iter().zip(&mask).map(|(g, m)| g * m).collect())]),
    )
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let d = *x.shape().last().unwrap();
    let mut out = x.to_vec();
    for row in out.chunks_mut(d) {
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut s = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v as f64;
        }
        let inv = (1.0 / s) as f32;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    let y = out.clone();
    Tensor::from_op(
        "softmax",
        x.shape().to_vec(),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; g.len()];
            for ((gr, yr), out) in g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)) {
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
                for ((o, &gv), &yv) in out.iter_mut().zip(gr).zip(yr) {
                    *o = yv * (gv - dot as f32);
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// Scales each channel of `x` (`[N, C, ...]`) by `gate` (`[N, C]`).
pub fn channel_scale(x: &Tensor, gate: &Tensor) -> Result<Tensor> {
    let xs = x.shape();
    if xs.len() < 2 || gate.shape() != &xs[..2] {
        return shape_err("channel_scale", format!("x {:?}, gate {:?}", xs, gate.shape()));
    }
    let inner: usize = xs[2..].iter().product();
    let (xd, gd) = (x.to_vec(), gate.to_vec());
    let out: Vec<f32> = xd
        .chunks(inner)
        .zip(&gd)
        .flat_map(|(row, &s)| row.iter().map(move |v| v * s))
        .collect();
    let (xc, gc) = (x.clone(), gate.clone());
    Ok(Tensor::from_op(
        "channel_scale",
        xs.to_vec(),
        out,
        vec![x.clone(), gate.clone()],
        Box::new(move |g| {
            let gx = xc.requires_grad().then(|| {
                g.chunks(inner)
                    .zip(&gd)
                    .flat_map(|(row, &s)| row.iter().map(move |v| v * s))
                    .collect()
            });
            let gg = gc.requires_grad().then(|| {
                g.chunks(inner)
                    .zip(xd.chunks(inner))
                    .map(|(gr, xr)| {
                        gr.iter().zip(xr).map(|(a, b)| (*a as f64) * (*b as f64)).sum::<f64>() as f32
                    })
                    .collect()
            });
            vec![gx, gg]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let y = sigmoid(&Tensor::scalar(0.0));
        assert_eq!(y.item(), 0.5);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        let y = sigmoid(&Tensor::new(&[2], vec![-1000.0, 1000.0]).unwrap());
        assert_eq!(y.to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, -5.0, 0.0, 50.0]).unwrap();
        let y = softmax(&x).to_vec();
        for row in y.chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_is_seed_deterministic() {
        let x = Tensor::full(&[64], 1.0);
        let a = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).to_vec();
        let b = dropout(&x, 0.5, &mut ChaCha8Rng::seed_from_u64(3)).to_vec();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn channel_scale_is_per_channel_product() {
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = Tensor::new(&[1, 2], vec![0.5, 2.0]).unwrap();
        assert_eq!(channel_scale(&x, &g).unwrap().to_vec(), vec![0.5, 1.0, 6.0, 8.0]);
    }

    #[test]
    fn add_rejects_mismatch() {
        let a = Tensor::zeros(&[2]);
        let b = Tensor::zeros(&[3]);
        assert!(add(&a, &b).is_err());
    }
}
