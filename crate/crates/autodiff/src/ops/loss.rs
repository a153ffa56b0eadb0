use super::elementwise::sigmoid_scalar;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Mean binary cross-entropy between `logits` and 0/1 `targets`, in the
/// overflow-free form `max(z, 0) - z·t + ln(1 + e^{-|z|})`, accumulated in
/// f64.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.shape() != targets.shape() {
        return shape_err("bce_with_logits", format!("{:?} vs {:?}", logits.shape(), targets.shape()));
    }
    let (zd, td) = (logits.to_vec(), targets.to_vec());
    let k = zd.len();
    let total: f64 = zd
        .iter()
        .zip(&td)
        .map(|(&z, &t)| {
            let (z, t) = (z as f64, t as f64);
            z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
        })
        .sum();
    Ok(Tensor::from_op(
        "bce_with_logits",
        vec![1],
        vec![(total / k as f64) as f32],
        vec![logits.clone(), targets.clone()],
        Box::new(move |g| {
            let scale = g[0] / k as f32;
            let gz = zd.iter().zip(&td).map(|(&z, &t)| (sigmoid_scalar(z) - t) * scale).collect();
            vec![Some(gz), None]
        }),
    ))
}
