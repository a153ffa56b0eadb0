use super::axis_split;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn sum(x: &Tensor) -> Tensor {
    let s: f64 = x.data().iter().map(|&v| v as f64).sum();
    let n = x.numel();
    Tensor::from_op("sum", vec![1], vec![s as f32], vec![x.clone()], Box::new(move |g| vec![Some(vec![g[0]; n])]))
}

pub fn mean(x: &Tensor) -> Tensor {
    let n = x.numel();
    let s: f64 = x.data().iter().map(|&v| v as f64).sum();
    Tensor::from_op(
        "mean",
        vec![1],
        vec![(s / n as f64) as f32],
        vec![x.clone()],
        Box::new(move |g| vec![Some(vec![g[0] / n as f32; n])]),
    )
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

/// Maximum along `axis`, which is removed. Ties go to the lowest index.
pub fn max_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.ndim() {
        return shape_err("max_axis", format!("axis {axis} of {:?}", x.shape()));
    }
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let xd = x.data();
    let mut out = vec![f32::NEG_INFINITY; outer * inner];
    let mut arg = vec![0u32; outer * inner];
    for o in 0..outer {
        for l in 0..len {
            let row = &xd[(o * len + l) * inner..(o * len + l + 1) * inner];
            for (i, &v) in row.iter().enumerate() {
                let slot = o * inner + i;
                if v > out[slot] || l == 0 {
                    out[slot] = v;
                    arg[slot] = ((o * len + l) * inner + i) as u32;
                }
            }
        }
    }
    drop(xd);
    let n = x.numel();
    Ok(Tensor::from_op(
        "max_axis",
        reduced_shape(x.shape(), axis),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; n];
            for (&i, &gv) in arg.iter().zip(g) {
                gx[i as usize] += gv;
            }
            vec![Some(gx)]
        }),
    ))
}

/// Arithmetic mean along `axis`, which is removed.
pub fn mean_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.ndim() {
        return shape_err("mean_axis", format!("axis {axis} of {:?}", x.shape()));
    }
    let (outer, len, inner) = axis_split(x.shape(), axis);
    let xd = x.data();
    let mut acc = vec![0.0f64; outer * inner];
    for o in 0..outer {
        for l in 0..len {
            let row = &xd[(o * len + l) * inner..(o * len + l + 1) * inner];
            for (a, &v) in acc[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                *a += v as f64;
            }
        }
    }
    drop(xd);
    let out = acc.into_iter().map(|v| (v / len as f64) as f32).collect();
    Ok(Tensor::from_op(
        "mean_axis",
        reduced_shape(x.shape(), axis),
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let scale = 1.0 / len as f32;
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for l in 0..len {
                    let dst = &mut gx[(o * len + l) * inner..(o * len + l + 1) * inner];
                    for (d, &gv) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                        *d = gv * scale;
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}
