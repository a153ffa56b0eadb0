//! Parameterized layers and the named parameter store they register into.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Error, Result};
use crate::ops::{self, BatchNormStats};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Trainable, receives gradients.
    Weight,
    /// Non-trainable state such as running statistics.
    Buffer,
}

/// Ordered collection of uniquely named tensors belonging to one model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<(String, ParamKind, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor) -> Result<Tensor> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, kind, tensor.clone()));
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].2)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ParamKind, &Tensor)> {
        self.entries.iter().map(|(n, k, t)| (n.as_str(), *k, t))
    }

    /// Trainable tensors in registration order.
    pub fn weights(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.iter().filter(|(_, k, _)| *k == ParamKind::Weight).map(|(n, _, t)| (n, t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_trainable(&self) -> usize {
        self.weights().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&self) {
        self.entries.iter().for_each(|(_, _, t)| t.zero_grad());
    }
}

/// Scoped initializer: creates tensors under a dotted name prefix and
/// registers them in a [`ParamStore`].
pub struct Init<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Init {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn scope(&mut self, name: &str) -> Init<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        Init {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn weight(&mut self, name: &str, shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let t = Tensor::parameter(shape, data)?;
        let full = self.full_name(name);
        self.store.insert(full, ParamKind::Weight, t)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Tensor> {
        let n = shape.iter().product();
        let t = Tensor::new(shape, vec![value; n])?;
        let full = self.full_name(name);
        self.store.insert(full, ParamKind::Buffer, t)
    }

    /// Uniform in `±gain·sqrt(3 / fan_in)`; gain √2 suits ReLU stacks.
    pub fn kaiming_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, gain: f32) -> Result<Tensor> {
        let bound = gain * (3.0 / fan_in as f32).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.weight(name, shape, data)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f32) -> Result<Tensor> {
        let n = shape.iter().product();
        self.weight(name, shape, vec![value; n])
    }

    /// `blocks` stacked square orthogonal matrices of size `h`, shaped
    /// `[blocks·h, h]`.
    pub fn orthogonal_blocks(&mut self, name: &str, blocks: usize, h: usize) -> Result<Tensor> {
        let mut data = Vec::with_capacity(blocks * h * h);
        for _ in 0..blocks {
            let mut rows: Vec<Vec<f64>> = (0..h)
                .map(|_| (0..h).map(|_| self.rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            // Modified Gram-Schmidt over rows.
            for i in 0..h {
                for j in 0..i {
                    let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    let (head, tail) = rows.split_at_mut(i);
                    tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= dot * b);
                }
                let norm = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                rows[i].iter_mut().for_each(|v| *v /= norm);
            }
            data.extend(rows.into_iter().flatten().map(|v| v as f32));
        }
        self.weight(name, &[blocks * h, h], data)
    }
}

/// Per-forward-pass state: train/eval mode, the dropout generator, and an
/// optional shape trace.
pub struct Ctx {
    pub training: bool,
    rng: ChaCha8Rng,
    trace: Option<Vec<(String, Vec<usize>)>>,
}

impl Ctx {
    pub fn train(seed: u64) -> Self {
        Ctx {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
        }
    }

    pub fn eval() -> Self {
        Ctx {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn record(&mut self, stage: impl Into<String>, t: &Tensor) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push((stage.into(), t.shape().to_vec()));
        }
    }

    pub fn take_trace(&mut self) -> Vec<(String, Vec<usize>)> {
        self.trace.take().unwrap_or_default()
    }

    pub fn dropout(&mut self, x: &Tensor, p: f32) -> Tensor {
        if self.training {
            ops::dropout(x, p, &mut self.rng)
        } else {
            x.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(init: &mut Init, inputs: usize, outputs: usize, gain: f32) -> Result<Self> {
        Ok(Linear {
            weight: init.kaiming_uniform("weight", &[outputs, inputs], inputs, gain)?,
            bias: init.constant("bias", &[outputs], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::linear(x, &self.weight, Some(&self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2d {
    pub fn new(
        init: &mut Init,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        let fan_in = c_in * kernel.0 * kernel.1;
        Ok(Conv2d {
            weight: init.kaiming_uniform("weight", &[c_out, c_in, kernel.0, kernel.1], fan_in, 2f32.sqrt())?,
            bias: init.constant("bias", &[c_out], 0.0)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv2d(x, &self.weight, Some(&self.bias), self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    pub fn new(init: &mut Init, c_in: usize, c_out: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        Ok(Conv1d {
            weight: init.kaiming_uniform("weight", &[c_out, c_in, kernel], c_in * kernel, 2f32.sqrt())?,
            bias: init.constant("bias", &[c_out], 0.0)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::conv1d(x, &self.weight, Some(&self.bias), self.stride, self.padding)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub stats: BatchNormStats,
}

impl BatchNorm {
    pub fn new(init: &mut Init, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: init.constant("weight", &[channels], 1.0)?,
            beta: init.constant("bias", &[channels], 0.0)?,
            stats: BatchNormStats {
                running_mean: init.buffer("running_mean", &[channels], 0.0)?,
                running_var: init.buffer("running_var", &[channels], 1.0)?,
                momentum: 0.1,
                eps: 1e-5,
            },
        })
    }

    pub fn forward(&self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        ops::batch_norm(x, &self.gamma, &self.beta, &self.stats, ctx.training)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    pub fn new(init: &mut Init, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: init.constant("weight", &[width], 1.0)?,
            beta: init.constant("bias", &[width], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::layer_norm(x, &self.gamma, &self.beta, 1e-5)
    }
}

/// One GRU layer; gate blocks are ordered reset, update, candidate.
#[derive(Clone, Debug)]
pub struct GruLayer {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
    pub hidden: usize,
}

impl GruLayer {
    pub fn new(init: &mut Init, inputs: usize, hidden: usize) -> Result<Self> {
        Ok(GruLayer {
            w_ih: init.kaiming_uniform("weight_ih", &[3 * hidden, inputs], inputs, 1.0)?,
            w_hh: init.orthogonal_blocks("weight_hh", 3, hidden)?,
            b_ih: init.constant("bias_ih", &[3 * hidden], 0.0)?,
            b_hh: init.constant("bias_hh", &[3 * hidden], 0.0)?,
            hidden,
        })
    }

    /// Runs the recurrence over `x [N, T, D]` from a zero state.
    /// Returns all hidden states `[N, T, H]` and the last one `[N, H]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.ndim() != 3 {
            return shape_err("gru", format!("expected [N, T, D], got {:?}", x.shape()));
        }
        let (n, t_len, h) = (x.shape()[0], x.shape()[1], self.hidden);
        let gi_all = ops::linear(x, &self.w_ih, Some(&self.b_ih))?;
        let mut state = Tensor::zeros(&[n, h]);
        let mut outputs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let gi = ops::select(&gi_all, 1, t)?;
            let gh = ops::linear(&state, &self.w_hh, Some(&self.b_hh))?;
            let part = |g: &Tensor, i: usize| ops::narrow(g, 1, i * h, h);
            let r = ops::sigmoid(&ops::add(&part(&gi, 0)?, &part(&gh, 0)?)?);
            let z = ops::sigmoid(&ops::add(&part(&gi, 1)?, &part(&gh, 1)?)?);
            let cand = ops::tanh(&ops::add(&part(&gi, 2)?, &ops::mul(&r, &part(&gh, 2)?)?)?);
            // h' = (1 - z)·n + z·h = n + z·(h - n)
            state = ops::add(&cand, &ops::mul(&z, &ops::sub(&state, &cand)?)?)?;
            outputs.push(state.clone());
        }
        Ok((ops::stack(&outputs, 1)?, state))
    }
}

#[derive(Clone, Debug)]
pub struct Gru {
    pub layers: Vec<GruLayer>,
}

impl Gru {
    pub fn new(init: &mut Init, inputs: usize, hidden: usize, n_layers: usize) -> Result<Self> {
        let layers = (0..n_layers)
            .map(|i| GruLayer::new(&mut init.scope(&format!("layer{i}")), if i == 0 { inputs } else { hidden }, hidden))
            .collect::<Result<_>>()?;
        Ok(Gru { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut seq = x.clone();
        let mut last = None;
        for layer in &self.layers {
            let (out, h) = layer.forward(&seq)?;
            seq = out;
            last = Some(h);
        }
        Ok((seq, last.expect("gru has at least one layer")))
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadSelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadSelfAttention {
    pub fn new(init: &mut Init, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return shape_err("attention", format!("width {dim} not divisible by {heads} heads"));
        }
        Ok(MultiHeadSelfAttention {
            q: Linear::new(&mut init.scope("q"), dim, dim, 1.0)?,
            k: Linear::new(&mut init.scope("k"), dim, dim, 1.0)?,
            v: Linear::new(&mut init.scope("v"), dim, dim, 1.0)?,
            out: Linear::new(&mut init.scope("out"), dim, dim, 1.0)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor, n: usize, t: usize, d: usize) -> Result<Tensor> {
        let dh = d / self.heads;
        let x = ops::reshape(x, &[n, t, self.heads, dh])?;
        let x = ops::permute(&x, &[0, 2, 1, 3])?;
        ops::reshape(&x, &[n * self.heads, t, dh])
    }

    /// Returns the projected output `[N, T, D]` and the attention weights
    /// `[N·heads, T, T]` (rows are softmax distributions over keys).
    pub fn forward_with_weights(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        if x.ndim() != 3 {
            return shape_err("attention", format!("expected [N, T, D], got {:?}", x.shape()));
        }
        let (n, t, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if d % self.heads != 0 {
            return shape_err("attention", format!("width {d} not divisible by {} heads", self.heads));
        }
        let q = self.split_heads(&self.q.forward(x)?, n, t, d)?;
        let k = self.split_heads(&self.k.forward(x)?, n, t, d)?;
        let v = self.split_heads(&self.v.forward(x)?, n, t, d)?;
        let scale = 1.0 / ((d / self.heads) as f32).sqrt();
        let scores = ops::scale(&ops::bmm(&q, &k, false, true)?, scale);
        let weights = ops::softmax(&scores);
        let ctx = ops::bmm(&weights, &v, false, false)?;
        let ctx = ops::reshape(&ctx, &[n, self.heads, t, d / self.heads])?;
        let ctx = ops::permute(&ctx, &[0, 2, 1, 3])?;
        let ctx = ops::reshape(&ctx, &[n, t, d])?;
        Ok((self.out.forward(&ctx)?, weights))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_weights(x)?.0)
    }
}

/// Post-norm transformer encoder block.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub attn: MultiHeadSelfAttention,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

impl TransformerBlock {
    pub fn new(init: &mut Init, dim: usize, heads: usize, ff: usize) -> Result<Self> {
        Ok(TransformerBlock {
            attn: MultiHeadSelfAttention::new(&mut init.scope("attn"), dim, heads)?,
            norm1: LayerNorm::new(&mut init.scope("norm1"), dim)?,
            ff1: Linear::new(&mut init.scope("ff1"), dim, ff, 2f32.sqrt())?,
            ff2: Linear::new(&mut init.scope("ff2"), ff, dim, 1.0)?,
            norm2: LayerNorm::new(&mut init.scope("norm2"), dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.norm1.forward(&ops::add(x, &self.attn.forward(x)?)?)?;
        let ff = self.ff2.forward(&ops::relu(&self.ff1.forward(&y)?))?;
        self.norm2.forward(&ops::add(&y, &ff)?)
    }
}

/// Channel gating: global average → bottleneck MLP → sigmoid → rescale.
#[derive(Clone, Debug)]
pub struct SqueezeExcitation {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SqueezeExcitation {
    pub fn new(init: &mut Init, channels: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return shape_err("squeeze_excitation", format!("{channels} channels, reduction {reduction}"));
        }
        let mid = channels / reduction;
        Ok(SqueezeExcitation {
            fc1: Linear::new(&mut init.scope("fc1"), channels, mid, 2f32.sqrt())?,
            fc2: Linear::new(&mut init.scope("fc2"), mid, channels, 1.0)?,
        })
    }

    pub fn gate(&self, x: &Tensor) -> Result<Tensor> {
        let xs = x.shape();
        if xs.len() < 3 || xs[1] != self.fc1.weight.shape()[1] {
            return shape_err("squeeze_excitation", format!("input {xs:?}"));
        }
        let flat = ops::reshape(x, &[xs[0], xs[1], xs[2..].iter().product()])?;
        let squeezed = ops::mean_axis(&flat, 2)?;
        let hidden = ops::relu(&self.fc1.forward(&squeezed)?);
        Ok(ops::sigmoid(&self.fc2.forward(&hidden)?))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        ops::channel_scale(x, &self.gate(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn init_store(seed: u64) -> (ParamStore, ChaCha8Rng) {
        (ParamStore::new(), ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut store, mut rng) = init_store(0);
        let mut init = Init::new(&mut store, &mut rng);
        init.constant("a", &[1], 0.0).unwrap();
        assert!(init.constant("a", &[1], 0.0).is_err());
        init.scope("s").constant("a", &[1], 0.0).unwrap();
        assert!(store.get("s.a").is_some());
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let (mut store, mut rng) = init_store(1);
        let w = Init::new(&mut store, &mut rng).orthogonal_blocks("w", 1, 6).unwrap().to_vec();
        for i in 0..6 {
            for j in 0..6 {
                let dot: f32 = (0..6).map(|k| w[i * 6 + k] * w[j * 6 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn gru_with_zero_weights_outputs_zero() {
        let (mut store, mut rng) = init_store(2);
        let gru = Gru::new(&mut Init::new(&mut store, &mut rng), 3, 4, 2).unwrap();
        for (_, t) in store.weights() {
            t.set_data(&vec![0.0; t.numel()]).unwrap();
        }
        let x = Tensor::new(&[2, 5, 3], (0..30).map(|v| v as f32 * 0.1).collect()).unwrap();
        let (out, last) = gru.forward(&x).unwrap();
        assert_eq!(out.shape(), &[2, 5, 4]);
        assert!(out.to_vec().iter().all(|&v| v == 0.0));
        assert!(last.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let (mut store, mut rng) = init_store(3);
        let attn = MultiHeadSelfAttention::new(&mut Init::new(&mut store, &mut rng), 8, 2).unwrap();
        let x = Tensor::new(&[1, 1, 8], (0..8).map(|v| v as f32 * 0.3 - 1.0).collect()).unwrap();
        let (y, w) = attn.forward_with_weights(&x).unwrap();
        assert!(w.to_vec().iter().all(|&v| v == 1.0));
        let expect = attn.out.forward(&attn.v.forward(&x).unwrap()).unwrap();
        for (a, b) in y.to_vec().iter().zip(expect.to_vec()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_rejects_indivisible_width() {
        let (mut store, mut rng) = init_store(4);
        assert!(MultiHeadSelfAttention::new(&mut Init::new(&mut store, &mut rng), 10, 3).is_err());
    }

    #[test]
    fn se_with_saturated_gate_is_identity() {
        let (mut store, mut rng) = init_store(5);
        let se = SqueezeExcitation::new(&mut Init::new(&mut store, &mut rng), 8, 4).unwrap();
        se.fc2.weight.set_data(&[0.0; 16]).unwrap();
        se.fc2.bias.set_data(&[100.0; 8]).unwrap();
        let x = Tensor::new(&[1, 8, 5], (0..40).map(|v| v as f32).collect()).unwrap();
        assert_eq!(se.forward(&x).unwrap().to_vec(), x.to_vec());
    }
}
