//! Convolution by im2col + GEMM, one batch element at a time.
//!
//! Weight gradients are accumulated over the batch in index order, so the
//! summation order is fixed for a given shape.

use crate::error::{shape_err, Result};
use crate::gemm::sgemm;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn p(&self) -> usize {
        self.ho * self.wo
    }
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }
    /// Output columns `ox` whose input column `ox*sw + kj - pw` is in range.
    fn col_range(&self, kj: usize) -> (usize, usize) {
        let lo = self.pw.saturating_sub(kj).div_ceil(self.sw);
        let hi_num = self.w - 1 + self.pw;
        let hi = if hi_num < kj { 0 } else { (hi_num - kj) / self.sw + 1 };
        (lo.min(self.wo), hi.min(self.wo))
    }
}

fn im2col(x: &[f32], g: &Geom, cols: &mut [f32]) {
    let p = g.p();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (lo, hi) = g.col_range(kj);
                for oy in 0..g.ho {
                    let out = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize || lo >= hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    if g.sw == 1 {
                        let start = lo + kj - g.pw;
                        out[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                            *o = src[ox * g.sw + kj - g.pw];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geom, dx: &mut [f32]) {
    let p = g.p();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                let (lo, hi) = g.col_range(kj);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.ho {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let s = &src[oy * g.wo..(oy + 1) * g.wo];
                    for ox in lo..hi {
                        dst[ox * g.sw + kj - g.pw] += s[ox];
                    }
                }
            }
        }
    }
}

fn conv_impl(
    name: &'static str,
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    g: Geom,
    out_shape: Vec<usize>,
) -> Tensor {
    let (k, p) = (g.k(), g.p());
    let (xd, wd) = (x.to_vec(), w.to_vec());
    let in_len = g.c * g.h * g.w;
    let mut out = vec![0.0; g.n * g.o * p];
    let mut cols = if g.pointwise() { Vec::new() } else { vec![0.0; k * p] };
    for n in 0..g.n {
        let xn = &xd[n * in_len..(n + 1) * in_len];
        let src: &[f32] = if g.pointwise() {
            xn
        } else {
            im2col(xn, &g, &mut cols);
            &cols
        };
        sgemm(g.o, k, p, &wd, false, src, false, &mut out[n * g.o * p..], 0.0);
    }
    if let Some(b) = b {
        let bd = b.data();
        for chunk in out.chunks_mut(p).enumerate() {
            let bias = bd[chunk.0 % g.o];
            chunk.1.iter_mut().for_each(|v| *v += bias);
        }
    }
    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = b {
        parents.push(b.clone());
    }
    let (xc, wc) = (x.clone(), w.clone());
    let has_bias = b.is_some();
    Tensor::from_op(
        name,
        out_shape,
        out,
        parents,
        Box::new(move |grad| {
            let need_x = xc.requires_grad();
            let need_w = wc.requires_grad();
            let mut gx = if need_x { vec![0.0; g.n * in_len] } else { Vec::new() };
            let mut gw = if need_w { vec![0.0; g.o * k] } else { Vec::new() };
            let mut cols = vec![0.0; k * p];
            let mut dcols = vec![0.0; k * p];
            for n in 0..g.n {
                let gn = &grad[n * g.o * p..(n + 1) * g.o * p];
                let xn = &xd[n * in_len..(n + 1) * in_len];
                if need_w {
                    let src: &[f32] = if g.pointwise() {
                        xn
                    } else {
                        im2col(xn, &g, &mut cols);
                        &cols
                    };
                    sgemm(g.o, p, k, gn, false, src, true, &mut gw, 1.0);
                }
                if need_x {
                    let dxn = &mut gx[n * in_len..(n + 1) * in_len];
                    if g.pointwise() {
                        sgemm(k, g.o, p, &wd, true, gn, false, dxn, 0.0);
                    } else {
                        sgemm(k, g.o, p, &wd, true, gn, false, &mut dcols, 0.0);
                        col2im(&dcols, &g, dxn);
                    }
                }
            }
            let mut grads = vec![need_x.then_some(gx), need_w.then_some(gw)];
            if has_bias {
                let mut gb = vec![0.0f64; g.o];
                for (i, chunk) in grad.chunks(p).enumerate() {
                    gb[i % g.o] += chunk.iter().map(|&v| v as f64).sum::<f64>();
                }
                grads.push(Some(gb.into_iter().map(|v| v as f32).collect()));
            }
            grads
        }),
    )
}

fn out_extent(op: &'static str, len: usize, pad: usize, k: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return shape_err(op, "stride must be positive");
    }
    if len + 2 * pad < k {
        return shape_err(op, format!("kernel {k} exceeds padded extent {}", len + 2 * pad));
    }
    Ok((len + 2 * pad - k) / stride + 1)
}

fn check_bias(op: &'static str, b: Option<&Tensor>, o: usize) -> Result<()> {
    match b {
        Some(b) if b.shape() != [o] => shape_err(op, format!("bias {:?} for {o} channels", b.shape())),
        _ => Ok(()),
    }
}

/// 2-D cross-correlation of `x [N, C, H, W]` with `w [O, C, kh, kw]`.
pub fn conv2d(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
        return shape_err("conv2d", format!("input {xs:?}, weight {ws:?}"));
    }
    check_bias("conv2d", b, ws[0])?;
    let ho = out_extent("conv2d", xs[2], padding.0, ws[2], stride.0)?;
    let wo = out_extent("conv2d", xs[3], padding.1, ws[3], stride.1)?;
    let g = Geom {
        n: xs[0],
        c: xs[1],
        h: xs[2],
        w: xs[3],
        o: ws[0],
        kh: ws[2],
        kw: ws[3],
        sh: stride.0,
        sw: stride.1,
        ph: padding.0,
        pw: padding.1,
        ho,
        wo,
    };
    Ok(conv_impl("conv2d", x, w, b, g, vec![g.n, g.o, ho, wo]))
}

/// 1-D cross-correlation of `x [N, C, L]` with `w [O, C, k]`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] {
        return shape_err("conv1d", format!("input {xs:?}, weight {ws:?}"));
    }
    check_bias("conv1d", b, ws[0])?;
    let lo = out_extent("conv1d", xs[2], padding, ws[2], stride)?;
    let g = Geom {
        n: xs[0],
        c: xs[1],
        h: 1,
        w: xs[2],
        o: ws[0],
        kh: 1,
        kw: ws[2],
        sh: 1,
        sw: stride,
        ph: 0,
        pw: padding,
        ho: 1,
        wo: lo,
    };
    Ok(conv_impl("conv1d", x, w, b, g, vec![g.n, g.o, lo]))
}
