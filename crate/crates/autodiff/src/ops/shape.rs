use super::axis_split;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if shape.iter().product::<usize>() != x.numel() || shape.contains(&0) {
        return shape_err("reshape", format!("{:?} -> {shape:?}", x.shape()));
    }
    Ok(Tensor::from_op(
        "reshape",
        shape.to_vec(),
        x.to_vec(),
        vec![x.clone()],
        Box::new(|g| vec![Some(g.to_vec())]),
    ))
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Source offset of every output element when axes are reordered by `perm`.
fn permute_index(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let n: usize = shape.iter().product();
    let mut idx = Vec::with_capacity(n);
    let mut counter = vec![0usize; out_shape.len()];
    for _ in 0..n {
        idx.push(counter.iter().zip(perm).map(|(c, &p)| c * src_strides[p]).sum());
        for d in (0..counter.len()).rev() {
            counter[d] += 1;
            if counter[d] < out_shape[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    idx
}

/// Reorders axes; output axis `i` is input axis `perm[i]`.
pub fn permute(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let mut seen = vec![false; x.ndim()];
    if perm.len() != x.ndim() || perm.iter().any(|&p| p >= x.ndim() || std::mem::replace(&mut seen[p], true)) {
        return shape_err("permute", format!("{perm:?} for {:?}", x.shape()));
    }
    let idx = permute_index(x.shape(), perm);
    let xd = x.data();
    let out = idx.iter().map(|&i| xd[i]).collect();
    drop(xd);
    let shape = perm.iter().map(|&p| x.shape()[p]).collect();
    Ok(Tensor::from_op(
        "permute",
        shape,
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; g.len()];
            for (&i, &gv) in idx.iter().zip(g) {
                gx[i] = gv;
            }
            vec![Some(gx)]
        }),
    ))
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat(xs: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| crate::Error::InvalidArgument("concat of nothing".into()))?;
    let nd = first.ndim();
    if axis >= nd {
        return shape_err("concat", format!("axis {axis} of {:?}", first.shape()));
    }
    for t in xs {
        let ok = t.ndim() == nd && (0..nd).all(|d| d == axis || t.shape()[d] == first.shape()[d]);
        if !ok {
            return shape_err("concat", format!("{:?} vs {:?}", first.shape(), t.shape()));
        }
    }
    let (outer, _, inner) = axis_split(first.shape(), axis);
    let lens: Vec<usize> = xs.iter().map(|t| t.shape()[axis]).collect();
    let total: usize = lens.iter().sum();
    let mut out = vec![0.0; outer * total * inner];
    let mut offset = 0;
    for (t, &len) in xs.iter().zip(&lens) {
        let d = t.data();
        for o in 0..outer {
            let dst = (o * total + offset) * inner;
            out[dst..dst + len * inner].copy_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
        }
        offset += len;
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_op(
        "concat",
        shape,
        out,
        xs.to_vec(),
        Box::new(move |g| {
            let mut offset = 0;
            lens.iter()
                .map(|&len| {
                    let mut gx = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        gx[o * len * inner..(o + 1) * len * inner].copy_from_slice(&g[src..src + len * inner]);
                    }
                    offset += len;
                    Some(gx)
                })
                .collect()
        }),
    ))
}

/// The sub-range `[start, start + len)` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.ndim() || len == 0 || start + len > x.shape()[axis] {
        return shape_err("narrow", format!("[{start}, {}) on axis {axis} of {:?}", start + len, x.shape()));
    }
    let (outer, full, inner) = axis_split(x.shape(), axis);
    let xd = x.data();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let s = (o * full + start) * inner;
        out.extend_from_slice(&xd[s..s + len * inner]);
    }
    drop(xd);
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_op(
        "narrow",
        shape,
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let mut gx = vec![0.0; outer * full * inner];
            for o in 0..outer {
                let s = (o * full + start) * inner;
                gx[s..s + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }),
    ))
}

/// Index `index` along `axis`, removing the axis.
pub fn select(x: &Tensor, axis: usize, index: usize) -> Result<Tensor> {
    let t = narrow(x, axis, index, 1)?;
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    if shape.is_empty() {
        shape.push(1);
    }
    reshape(&t, &shape)
}

/// Stacks equally shaped tensors along a new axis at `axis`.
pub fn stack(xs: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| crate::Error::InvalidArgument("stack of nothing".into()))?;
    if axis > first.ndim() {
        return shape_err("stack", format!("axis {axis} of {:?}", first.shape()));
    }
    let mut expanded = Vec::with_capacity(xs.len());
    for t in xs {
        if t.shape() != first.shape() {
            return shape_err("stack", format!("{:?} vs {:?}", first.shape(), t.shape()));
        }
        let mut s = t.shape().to_vec();
        s.insert(axis, 1);
        expanded.push(reshape(t, &s)?);
    }
    concat(&expanded, axis)
}
