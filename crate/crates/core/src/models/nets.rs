//! Network definitions. Every `forward` maps a batched representation to
//! `[N, n_tags]` logits and ends with a global max-pool over whatever
//! extent the architecture's own reductions leave behind.

use tagbench_autodiff::nn::{BatchNorm, Conv1d, Conv2d, Gru, Init, Linear, SqueezeExcitation, TransformerBlock};
use tagbench_autodiff::{ops, Ctx, Tensor};

use super::config::{Arch, ModelConfig};
use crate::dsp::{harmonic_filter, HarmonicBank, N_FFT, POWER_FLOOR};
use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

/// Max pool with the kernel clamped to the input, so short inputs still
/// reduce instead of failing.
fn pool2d(x: &Tensor, (kh, kw): (usize, usize)) -> Result<Tensor> {
    let s = x.shape();
    let kh = kh.min(s[2]).max(1);
    let kw = kw.min(s[3]).max(1);
    Ok(ops::max_pool2d(x, (kh, kw), (kh, kw))?)
}

fn pool1d(x: &Tensor, k: usize) -> Result<Tensor> {
    let k = k.min(x.shape()[2]).max(1);
    Ok(ops::max_pool1d(x, k, k)?)
}

/// Max over every axis after the channel axis.
pub fn global_max(x: &Tensor) -> Result<Tensor> {
    let mut x = x.clone();
    while x.ndim() > 2 {
        x = ops::max_axis(&x, x.ndim() - 1)?;
    }
    Ok(x)
}

/// `[N, F, T]` → `[N, 1, F, T]`
fn as_image(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::InvalidConfig(format!("expected [N, bands, frames], got {s:?}")));
    }
    Ok(ops::reshape(x, &[s[0], 1, s[1], s[2]])?)
}

fn check_rows(x: &Tensor, rows: usize, what: &str) -> Result<()> {
    if x.ndim() != 3 || x.shape()[1] != rows {
        return Err(Error::InvalidConfig(format!(
            "expected [N, {rows}, frames] {what} input, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

impl ConvBlock {
    fn new(init: &mut Init, c_in: usize, c_out: usize, stride: usize) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv2d::new(&mut init.scope("conv"), c_in, c_out, (3, 3), (stride, stride), (1, 1))?,
            bn: BatchNorm::new(&mut init.scope("bn"), c_out)?,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        Ok(ops::relu(&self.bn.forward(&self.conv.forward(x)?, ctx)?))
    }
}

/// Optional dense + batch-norm + ReLU, dropout, output layer.
#[derive(Clone, Debug)]
pub struct Head {
    pub dense: Option<(Linear, BatchNorm)>,
    pub out: Linear,
    pub dropout: f32,
}

impl Head {
    fn new(init: &mut Init, inputs: usize, hidden: Option<usize>, n_tags: usize, dropout: f32) -> Result<Self> {
        let dense = match hidden {
            Some(h) => Some((
                Linear::new(&mut init.scope("dense"), inputs, h, 2f32.sqrt())?,
                BatchNorm::new(&mut init.scope("dense_bn"), h)?,
            )),
            None => None,
        };
        let width = hidden.unwrap_or(inputs);
        Ok(Head {
            dense,
            out: Linear::new(&mut init.scope("out"), width, n_tags, 1.0)?,
            dropout,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut x = x.clone();
        if let Some((lin, bn)) = &self.dense {
            x = ops::relu(&bn.forward(&lin.forward(&x)?, ctx)?);
        }
        let x = ctx.dropout(&x, self.dropout);
        Ok(self.out.forward(&x)?)
    }
}

// ---------------------------------------------------------------- 2-D stacks

/// 3×3 conv blocks each followed by a max-pool: fcn, crnn front end and
/// the short-chunk family.
#[derive(Clone, Debug)]
pub struct PooledStack {
    pub input_bn: BatchNorm,
    pub blocks: Vec<ConvBlock>,
    pub pools: Vec<(usize, usize)>,
}

impl PooledStack {
    fn new(init: &mut Init, c_in: usize, widths: &[usize], pools: Vec<(usize, usize)>) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut c = c_in;
        for (i, &w) in widths.iter().enumerate() {
            blocks.push(ConvBlock::new(&mut init.scope(&format!("blocks.{i}")), c, w, 1)?);
            c = w;
        }
        Ok(PooledStack {
            input_bn: BatchNorm::new(&mut init.scope("input_bn"), c_in)?,
            blocks,
            pools,
        })
    }

    /// `[N, C, F, T]` → `[N, C', F', T']`
    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut x = self.input_bn.forward(x, ctx)?;
        for (i, (b, &p)) in self.blocks.iter().zip(&self.pools).enumerate() {
            x = pool2d(&b.forward(&x, ctx)?, p)?;
            ctx.record(format!("block{i}"), &x);
        }
        Ok(x)
    }
}

/// Frequency pools for fcn: the 2·4·3·4 plan for 96 bands, 2·4·4·4 for 128.
fn fcn_pools(n_mels: usize) -> Vec<(usize, usize)> {
    let freq = if n_mels == 128 { [2, 4, 4, 4] } else { [2, 4, 3, 4] };
    freq.iter().zip([4, 5, 8, 8]).map(|(&f, t)| (f, t)).collect()
}

#[derive(Clone, Debug)]
pub struct Fcn {
    pub stack: PooledStack,
    pub head: Head,
}

impl Fcn {
    fn new(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        Ok(Fcn {
            stack: PooledStack::new(&mut init.scope("stack"), 1, &c.widths, fcn_pools(c.n_mels))?,
            head: Head::new(&mut init.scope("head"), *c.widths.last().unwrap(), None, c.n_tags, c.dropout)?,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let x = self.stack.forward(&as_image(x)?, ctx)?;
        let x = global_max(&x)?;
        self.head.forward(&x, ctx)
    }
}

#[derive(Clone, Debug)]
pub struct ShortChunk {
    pub stack: PooledStack,
    pub head: Head,
}

impl ShortChunk {
    fn new(init: &mut Init, c: &ModelConfig, c_in: usize) -> Result<Self> {
        Ok(ShortChunk {
            stack: PooledStack::new(&mut init.scope("stack"), c_in, &c.widths, vec![(2, 2); c.widths.len()])?,
            head: Head::new(&mut init.scope("head"), *c.widths.last().unwrap(), Some(c.hidden), c.n_tags, c.dropout)?,
        })
    }

    /// `x [N, C, F, T]`
    fn forward_image(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let x = self.stack.forward(x, ctx)?;
        let x = global_max(&x)?;
        self.head.forward(&x, ctx)
    }
}

#[derive(Clone, Debug)]
pub struct ResBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub skip_conv: Conv2d,
    pub skip_bn: BatchNorm,
}

impl ResBlock {
    fn new(init: &mut Init, c_in: usize, c_out: usize) -> Result<Self> {
        let mut branch = init.scope("branch");
        let conv1 = Conv2d::new(&mut branch.scope("conv1"), c_in, c_out, (3, 3), (2, 2), (1, 1))?;
        let bn1 = BatchNorm::new(&mut branch.scope("bn1"), c_out)?;
        let conv2 = Conv2d::new(&mut branch.scope("conv2"), c_out, c_out, (3, 3), (1, 1), (1, 1))?;
        let bn2 = BatchNorm::new(&mut branch.scope("bn2"), c_out)?;
        let mut skip = init.scope("skip");
        Ok(ResBlock {
            conv1,
            bn1,
            conv2,
            bn2,
            skip_conv: Conv2d::new(&mut skip.scope("conv"), c_in, c_out, (3, 3), (2, 2), (1, 1))?,
            skip_bn: BatchNorm::new(&mut skip.scope("bn"), c_out)?,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &Ctx, bypass_branch: bool) -> Result<Tensor> {
        let skip = self.skip_bn.forward(&self.skip_conv.forward(x)?, ctx)?;
        if bypass_branch {
            return Ok(ops::relu(&skip));
        }
        let h = ops::relu(&self.bn1.forward(&self.conv1.forward(x)?, ctx)?);
        let h = self.bn2.forward(&self.conv2.forward(&h)?, ctx)?;
        Ok(ops::relu(&ops::add(&h, &skip)?))
    }
}

#[derive(Clone, Debug)]
pub struct ShortChunkRes {
    pub input_bn: BatchNorm,
    pub blocks: Vec<ResBlock>,
    pub head: Head,
    /// Replace every block by its skip path.
    pub bypass_branches: bool,
}

impl ShortChunkRes {
    fn new(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut ch = 1;
        for (i, &w) in c.widths.iter().enumerate() {
            blocks.push(ResBlock::new(&mut init.scope(&format!("blocks.{i}")), ch, w)?);
            ch = w;
        }
        Ok(ShortChunkRes {
            input_bn: BatchNorm::new(&mut init.scope("input_bn"), 1)?,
            blocks,
            head: Head::new(&mut init.scope("head"), ch, Some(c.hidden), c.n_tags, c.dropout)?,
            bypass_branches: false,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut x = self.input_bn.forward(&as_image(x)?, ctx)?;
        for (i, b) in self.blocks.iter().enumerate() {
            x = b.forward(&x, ctx, self.bypass_branches)?;
            ctx.record(format!("block{i}"), &x);
        }
        let x = global_max(&x)?;
        self.head.forward(&x, ctx)
    }
}

// ---------------------------------------------------------------- musicnn

#[derive(Clone, Debug)]
pub struct Musicnn {
    pub input_bn: BatchNorm,
    pub vertical: Vec<(Conv2d, BatchNorm)>,
    pub temporal: Vec<(Conv1d, BatchNorm)>,
    pub mid: Vec<(Conv1d, BatchNorm)>,
    pub pool_bn: BatchNorm,
    pub head: Head,
}

pub const MUSICNN_TEMPORAL_WIDTHS: [usize; 4] = [32, 64, 128, 165];

impl Musicnn {
    fn new(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        let vw = c.front_width;
        let tw = c.front_width / 2;
        let mut vertical = Vec::new();
        for (i, h) in c.musicnn_heights().into_iter().enumerate() {
            let mut s = init.scope(&format!("vertical.{i}"));
            let conv = Conv2d::new(&mut s.scope("conv"), 1, vw, (h, 7), (1, 1), (0, 3))?;
            vertical.push((conv, BatchNorm::new(&mut s.scope("bn"), vw)?));
        }
        let mut temporal = Vec::new();
        for (i, k) in MUSICNN_TEMPORAL_WIDTHS.into_iter().enumerate() {
            let mut s = init.scope(&format!("temporal.{i}"));
            let conv = Conv1d::new(&mut s.scope("conv"), 1, tw, k, 1, k / 2)?;
            temporal.push((conv, BatchNorm::new(&mut s.scope("bn"), tw)?));
        }
        let front = 2 * vw + 4 * tw;
        let mut mid = Vec::new();
        let mut ch = front;
        for (i, &w) in c.widths.iter().enumerate() {
            let mut s = init.scope(&format!("mid.{i}"));
            mid.push((Conv1d::new(&mut s.scope("conv"), ch, w, 7, 1, 3)?, BatchNorm::new(&mut s.scope("bn"), w)?));
            ch = w;
        }
        let features = front + c.widths.iter().sum::<usize>();
        Ok(Musicnn {
            input_bn: BatchNorm::new(&mut init.scope("input_bn"), 1)?,
            vertical,
            temporal,
            mid,
            pool_bn: BatchNorm::new(&mut init.scope("pool_bn"), 2 * features)?,
            head: Head::new(&mut init.scope("head"), 2 * features, Some(c.hidden), c.n_tags, c.dropout)?,
        })
    }

    /// Normalized `[N, 1, F, T]` image of a `[N, F, T]` input.
    pub fn normalize(&self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        Ok(self.input_bn.forward(&as_image(x)?, ctx)?)
    }

    /// Vertical-filter activations `[N, C, F', T]` before the pool across
    /// frequency.
    pub fn timbral_maps(&self, img: &Tensor, ctx: &Ctx) -> Result<Vec<Tensor>> {
        self.vertical
            .iter()
            .map(|(conv, bn)| Ok(ops::relu(&bn.forward(&conv.forward(img)?, ctx)?)))
            .collect()
    }

    /// Vertical branches after the frequency max-pool, concatenated:
    /// `[N, 2·front_width, T]`.
    pub fn timbral_features(&self, img: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let pooled = self
            .timbral_maps(img, ctx)?
            .iter()
            .map(|m| Ok(ops::max_axis(m, 2)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(ops::concat(&pooled, 1)?)
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let img = self.normalize(x, ctx)?;
        let t = img.shape()[3];
        let timbral = self.timbral_features(&img, ctx)?;
        let envelope = ops::mean_axis(&img, 2)?; // [N, 1, T]
        let mut front = vec![timbral];
        for (conv, bn) in &self.temporal {
            let y = ops::narrow(&conv.forward(&envelope)?, 2, 0, t)?;
            front.push(ops::relu(&bn.forward(&y, ctx)?));
        }
        let front = ops::concat(&front, 1)?;
        ctx.record("front", &front);
        let mut feats = vec![front.clone()];
        let mut h = front;
        for (i, (conv, bn)) in self.mid.iter().enumerate() {
            let y = ops::relu(&bn.forward(&conv.forward(&h)?, ctx)?);
            h = if i > 0 { ops::add(&y, &h)? } else { y };
            feats.push(h.clone());
        }
        let all = ops::concat(&feats, 1)?;
        ctx.record("mid", &all);
        let pooled = ops::concat(&[ops::max_axis(&all, 2)?, ops::mean_axis(&all, 2)?], 1)?;
        let pooled = self.pool_bn.forward(&pooled, ctx)?;
        self.head.forward(&pooled, ctx)
    }
}

// ---------------------------------------------------------------- sample-level

#[derive(Clone, Debug)]
pub struct SampleLevel {
    pub first: (Conv1d, BatchNorm),
    pub blocks: Vec<(Conv1d, BatchNorm, Option<SqueezeExcitation>)>,
    pub head: Head,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl SampleLevel {
    fn new(init: &mut Init, c: &ModelConfig, se: bool) -> Result<Self> {
        let mut s0 = init.scope("blocks.0");
        let first = (
            Conv1d::new(&mut s0.scope("conv"), 1, c.widths[0], 3, 3, 0)?,
            BatchNorm::new(&mut s0.scope("bn"), c.widths[0])?,
        );
        let mut blocks = Vec::new();
        for i in 1..c.widths.len() {
            let (cin, cout) = (c.widths[i - 1], c.widths[i]);
            let mut s = init.scope(&format!("blocks.{i}"));
            let conv = Conv1d::new(&mut s.scope("conv"), cin, cout, 3, 1, 1)?;
            let bn = BatchNorm::new(&mut s.scope("bn"), cout)?;
            let se = if se {
                Some(SqueezeExcitation::new(&mut s.scope("se"), cout, gcd(cout, 16))?)
            } else {
                None
            };
            blocks.push((conv, bn, se));
        }
        Ok(SampleLevel {
            first,
            blocks,
            head: Head::new(&mut init.scope("head"), *c.widths.last().unwrap(), None, c.n_tags, c.dropout)?,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 2 || s[1] < 3 {
            return Err(Error::InvalidConfig(format!("expected [N, samples >= 3], got {s:?}")));
        }
        let x = ops::reshape(x, &[s[0], 1, s[1]])?;
        let mut x = ops::relu(&self.first.1.forward(&self.first.0.forward(&x)?, ctx)?);
        ctx.record("block0", &x);
        for (i, (conv, bn, se)) in self.blocks.iter().enumerate() {
            x = pool1d(&ops::relu(&bn.forward(&conv.forward(&x)?, ctx)?), 3)?;
            if let Some(se) = se {
                x = se.forward(&x)?;
            }
            ctx.record(format!("block{}", i + 1), &x);
        }
        let x = global_max(&x)?;
        self.head.forward(&x, ctx)
    }
}

// ---------------------------------------------------------------- crnn

#[derive(Clone, Debug)]
pub struct Crnn {
    pub stack: PooledStack,
    pub gru: Gru,
    pub head: Head,
}

impl Crnn {
    fn new(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        let pools = vec![(2, 2), (3, 3), (4, 4), (4, 4)];
        let last = *c.widths.last().unwrap();
        Ok(Crnn {
            stack: PooledStack::new(&mut init.scope("stack"), 1, &c.widths, pools)?,
            gru: Gru::new(&mut init.scope("gru"), last, c.hidden, c.n_layers)?,
            head: Head::new(&mut init.scope("head"), c.hidden, None, c.n_tags, c.dropout)?,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let x = self.stack.forward(&as_image(x)?, ctx)?;
        let x = ops::max_axis(&x, 2)?; // [N, C, T]
        let seq = ops::permute(&x, &[0, 2, 1])?;
        let (_, last) = self.gru.forward(&seq)?;
        ctx.record("gru", &last);
        self.head.forward(&last, ctx)
    }
}

// ---------------------------------------------------------------- self-attention

#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub input_bn: BatchNorm,
    pub front: Vec<ConvBlock>,
    pub blocks: Vec<TransformerBlock>,
    pub head: Head,
}

/// Fixed sinusoidal position code `[T, D]`.
fn positions(t: usize, d: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; t * d];
    for p in 0..t {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = p as f64 / rate;
            out[p * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() } as f32;
        }
    }
    out
}

impl SelfAttention {
    fn new(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        let mut front = Vec::new();
        let mut ch = 1;
        for (i, &w) in c.widths.iter().enumerate() {
            front.push(ConvBlock::new(&mut init.scope(&format!("front.{i}")), ch, w, 2)?);
            ch = w;
        }
        let blocks = (0..c.n_layers)
            .map(|i| TransformerBlock::new(&mut init.scope(&format!("encoder.{i}")), ch, c.heads, 2 * ch))
            .collect::<tagbench_autodiff::Result<_>>()?;
        Ok(SelfAttention {
            input_bn: BatchNorm::new(&mut init.scope("input_bn"), 1)?,
            front,
            blocks,
            head: Head::new(&mut init.scope("head"), ch, None, c.n_tags, c.dropout)?,
        })
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut x = self.input_bn.forward(&as_image(x)?, ctx)?;
        for (i, b) in self.front.iter().enumerate() {
            x = b.forward(&x, ctx)?;
            ctx.record(format!("front{i}"), &x);
        }
        let x = ops::max_axis(&x, 2)?; // [N, D, T]
        let mut seq = ops::permute(&x, &[0, 2, 1])?;
        let (n, t, d) = (seq.shape()[0], seq.shape()[1], seq.shape()[2]);
        let pe = positions(t, d);
        let pe = Tensor::new(&[n, t, d], pe.iter().copied().cycle().take(n * t * d).collect())?;
        seq = ops::add(&seq, &pe)?;
        for b in &self.blocks {
            seq = b.forward(&seq)?;
        }
        ctx.record("encoder", &seq);
        let pooled = ops::mean_axis(&seq, 1)?;
        self.head.forward(&pooled, ctx)
    }
}

// ---------------------------------------------------------------- harmonic cnn

#[derive(Clone, Debug)]
pub struct HarmonicCnn {
    pub bank: HarmonicBank,
    /// Trainable bandwidth scale shared by every filter.
    pub alpha: Tensor,
    pub body: ShortChunk,
}

impl HarmonicCnn {
    fn new(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        let bank = HarmonicBank::new(c.n_mels, c.n_harmonics, N_FFT, SAMPLE_RATE)?;
        Ok(HarmonicCnn {
            bank,
            alpha: init.scope("filterbank").constant("alpha", &[1], 1.0)?,
            body: ShortChunk::new(&mut init.scope("body"), c, c.n_harmonics)?,
        })
    }

    pub fn stack(&self, power: &Tensor) -> Result<Tensor> {
        check_rows(power, self.bank.n_bins(), "power spectrogram")?;
        let h = harmonic_filter(power, &self.alpha, &self.bank)?;
        Ok(ops::log_clamp(&h, POWER_FLOOR))
    }

    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let h = self.stack(x)?;
        ctx.record("harmonic", &h);
        self.body.forward_image(&h, ctx)
    }
}

// ---------------------------------------------------------------- dispatch

#[derive(Clone, Debug)]
pub enum Network {
    Fcn(Fcn),
    Musicnn(Musicnn),
    SampleLevel(SampleLevel),
    Crnn(Crnn),
    SelfAttention(SelfAttention),
    HarmonicCnn(HarmonicCnn),
    ShortChunk(ShortChunk),
    ShortChunkRes(ShortChunkRes),
}

impl Network {
    pub(super) fn build(init: &mut Init, c: &ModelConfig) -> Result<Self> {
        let mut init = init.scope(c.arch.as_str());
        Ok(match c.arch {
            Arch::Fcn => Network::Fcn(Fcn::new(&mut init, c)?),
            Arch::Musicnn => Network::Musicnn(Musicnn::new(&mut init, c)?),
            Arch::SampleLevel => Network::SampleLevel(SampleLevel::new(&mut init, c, false)?),
            Arch::SampleLevelSe => Network::SampleLevel(SampleLevel::new(&mut init, c, true)?),
            Arch::Crnn => Network::Crnn(Crnn::new(&mut init, c)?),
            Arch::SelfAttention => Network::SelfAttention(SelfAttention::new(&mut init, c)?),
            Arch::HarmonicCnn => Network::HarmonicCnn(HarmonicCnn::new(&mut init, c)?),
            Arch::ShortChunk => Network::ShortChunk(ShortChunk::new(&mut init, c, 1)?),
            Arch::ShortChunkRes => Network::ShortChunkRes(ShortChunkRes::new(&mut init, c)?),
        })
    }

    pub(super) fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        match self {
            Network::Fcn(m) => m.forward(x, ctx),
            Network::Musicnn(m) => m.forward(x, ctx),
            Network::SampleLevel(m) => m.forward(x, ctx),
            Network::Crnn(m) => m.forward(x, ctx),
            Network::SelfAttention(m) => m.forward(x, ctx),
            Network::HarmonicCnn(m) => m.forward(x, ctx),
            Network::ShortChunk(m) => m.forward_image(&as_image(x)?, ctx),
            Network::ShortChunkRes(m) => m.forward(x, ctx),
        }
    }
}
