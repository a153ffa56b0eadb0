use crate::error::{shape_err, Result};
use crate::gemm::sgemm;
use crate::tensor::Tensor;

/// `[M, K] x [K, N] -> [M, N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 {
        return shape_err("matmul", "operands must be 2-D");
    }
    let a3 = [1, a.shape()[0], a.shape()[1]];
    let b3 = [1, b.shape()[0], b.shape()[1]];
    let out = bmm_impl(a, &a3, false, b, &b3, false)?;
    let (m, n) = (a.shape()[0], b.shape()[1]);
    Ok(relabel(out, vec![m, n]))
}

/// Batched product `op(a[i]) · op(b[i])` over a leading batch axis.
///
/// `a` is `[B, M, K]` (or `[B, K, M]` with `trans_a`), `b` is `[B, K, N]`
/// (or `[B, N, K]` with `trans_b`).
pub fn bmm(a: &Tensor, b: &Tensor, trans_a: bool, trans_b: bool) -> Result<Tensor> {
    if a.ndim() != 3 || b.ndim() != 3 {
        return shape_err("bmm", "operands must be 3-D");
    }
    let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
    bmm_impl(a, &sa, trans_a, b, &sb, trans_b)
}

fn relabel(t: Tensor, shape: Vec<usize>) -> Tensor {
    // Same storage layout, new shape; gradient passes straight through.
    let data = t.to_vec();
    Tensor::from_op("reshape", shape, data, vec![t], Box::new(|g| vec![Some(g.to_vec())]))
}

fn bmm_impl(
    a: &Tensor,
    sa: &[usize],
    trans_a: bool,
    b: &Tensor,
    sb: &[usize],
    trans_b: bool,
) -> Result<Tensor> {
    let batch = sa[0];
    if sb[0] != batch {
        return shape_err("bmm", format!("batch {} vs {}", sa[0], sb[0]));
    }
    let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
    let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
    if k != kb {
        return shape_err("bmm", format!("inner extents {k} vs {kb}"));
    }
    let (ad, bd) = (a.to_vec(), b.to_vec());
    let mut out = vec![0.0; batch * m * n];
    for i in 0..batch {
        sgemm(
            m,
            k,
            n,
            &ad[i * m * k..],
            trans_a,
            &bd[i * k * n..],
            trans_b,
            &mut out[i * m * n..],
            0.0,
        );
    }
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        "bmm",
        vec![batch, m, n],
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = ac.requires_grad().then(|| {
                let mut ga = vec![0.0; batch * m * k];
                for i in 0..batch {
                    let gi = &g[i * m * n..];
                    let bi = &bd[i * k * n..];
                    if trans_a {
                        // a stored [K, M]: dA = op(B) · dCᵀ
                        sgemm(k, n, m, bi, trans_b, gi, true, &mut ga[i * m * k..], 0.0);
                    } else {
                        // dA = dC · op(B)ᵀ
                        sgemm(m, n, k, gi, false, bi, !trans_b, &mut ga[i * m * k..], 0.0);
                    }
                }
                ga
            });
            let gb = bc.requires_grad().then(|| {
                let mut gb = vec![0.0; batch * k * n];
                for i in 0..batch {
                    let gi = &g[i * m * n..];
                    let ai = &ad[i * m * k..];
                    if trans_b {
                        // b stored [N, K]: dB = dCᵀ · op(A)
                        sgemm(n, m, k, gi, true, ai, trans_a, &mut gb[i * k * n..], 0.0);
                    } else {
                        // dB = op(A)ᵀ · dC
                        sgemm(k, m, n, ai, !trans_a, gi, false, &mut gb[i * k * n..], 0.0);
                    }
                }
                gb
            });
            vec![ga, gb]
        }),
    ))
}

/// Affine map over the last axis: `x [..., F] · wᵀ + b` with `w` shaped
/// `[M, F]` and `b` shaped `[M]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let xs = x.shape();
    let f = *xs.last().unwrap();
    if w.ndim() != 2 || w.shape()[1] != f {
        return shape_err("linear", format!("input {:?}, weight {:?}", xs, w.shape()));
    }
    let m = w.shape()[0];
    if let Some(b) = b {
        if b.shape() != [m] {
            return shape_err("linear", format!("bias {:?} for {m} outputs", b.shape()));
        }
    }
    let rows = x.numel() / f;
    let (xd, wd) = (x.to_vec(), w.to_vec());
    let mut out = vec![0.0; rows * m];
    sgemm(rows, f, m, &xd, false, &wd, true, &mut out, 0.0);
    if let Some(b) = b {
        let bd = b.data();
        for row in out.chunks_mut(m) {
            row.iter_mut().zip(bd.iter()).for_each(|(o, b)| *o += b);
        }
    }
    let mut shape = xs.to_vec();
    *shape.last_mut().unwrap() = m;
    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = b {
        parents.push(b.clone());
    }
    let (xc, wc) = (x.clone(), w.clone());
    let has_bias = b.is_some();
    Ok(Tensor::from_op(
        "linear",
        shape,
        out,
        parents,
        Box::new(move |g| {
            let gx = xc.requires_grad().then(|| {
                let mut gx = vec![0.0; rows * f];
                sgemm(rows, m, f, g, false, &wd, false, &mut gx, 0.0);
                gx
            });
            let gw = wc.requires_grad().then(|| {
                let mut gw = vec![0.0; m * f];
                sgemm(m, rows, f, g, true, &xd, false, &mut gw, 0.0);
                gw
            });
            let mut grads = vec![gx, gw];
            if has_bias {
                let mut gb = vec![0.0f64; m];
                for row in g.chunks(m) {
                    gb.iter_mut().zip(row).for_each(|(a, v)| *a += *v as f64);
                }
                grads.push(Some(gb.into_iter().map(|v| v as f32).collect()));
            }
            grads
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_is_identity() {
        let x = Tensor::new(&[1, 3], vec![1.0, -2.0, 3.5]).unwrap();
        let mut eye = vec![0.0; 9];
        (0..3).for_each(|i| eye[i * 3 + i] = 1.0);
        let w = Tensor::new(&[3, 3], eye).unwrap();
        let b = Tensor::zeros(&[3]);
        let y = linear(&x, &w, Some(&b)).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn matmul_small() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().to_vec(), vec![3.0, 7.0]);
    }

    #[test]
    fn bmm_inner_mismatch() {
        let a = Tensor::zeros(&[1, 2, 3]);
        let b = Tensor::zeros(&[1, 2, 3]);
        assert!(bmm(&a, &b, false, false).is_err());
        assert!(bmm(&a, &b, false, true).is_ok());
    }
}
