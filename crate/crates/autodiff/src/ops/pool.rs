use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Max pooling without padding over the last two axes of `[N, C, H, W]`.
/// Output extents use floor division; ties go to the lowest flat index.
pub fn max_pool2d(x: &Tensor, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor> {
    let xs = x.shape();
    if xs.len() != 4 {
        return shape_err("max_pool2d", format!("expected [N, C, H, W], got {xs:?}"));
    }
    pool_impl("max_pool2d", x, xs[0] * xs[1], xs[2], xs[3], kernel, stride, |ho, wo| {
        vec![xs[0], xs[1], ho, wo]
    })
}

/// Max pooling over the last axis of `[N, C, L]`.
pub fn max_pool1d(x: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    let xs = x.shape();
    if xs.len() != 3 {
        return shape_err("max_pool1d", format!("expected [N, C, L], got {xs:?}"));
    }
    pool_impl("max_pool1d", x, xs[0] * xs[1], 1, xs[2], (1, kernel), (1, stride), |_, wo| {
        vec![xs[0], xs[1], wo]
    })
}

#[allow(clippy::too_many_arguments)]
fn pool_impl(
    name: &'static str,
    x: &Tensor,
    planes: usize,
    h: usize,
    w: usize,
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    shape: impl Fn(usize, usize) -> Vec<usize>,
) -> Result<Tensor> {
    if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
        return shape_err(name, "kernel and stride must be positive");
    }
    if kh > h || kw > w {
        return shape_err(name, format!("kernel ({kh}, {kw}) exceeds extent ({h}, {w})"));
    }
    let ho = (h - kh) / sh + 1;
    let wo = (w - kw) / sw + 1;
    let xd = x.data();
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut argmax = Vec::with_capacity(planes * ho * wo);
    for pl in 0..planes {
        let base = pl * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = base + oy * sh * w + ox * sw;
                for i in 0..kh {
                    let row = base + (oy * sh + i) * w + ox * sw;
                    for (j, &v) in xd[row..row + kw].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_i = row + j;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_i as u32);
            }
        }
    }
    drop(xd);
    let n_in = x.numel();
    Ok(Tensor::from_op(
        name,
        shape(ho, wo),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; n_in];
            for (&i, &gv) in argmax.iter().zip(g) {
                gx[i as usize] += gv;
            }
            vec![Some(gx)]
        }),
    ))
}
