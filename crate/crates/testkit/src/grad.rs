//! Finite-difference gradient checks over every differentiable operation.
//!
//! A case owns a set of leaf tensors and a closure that rebuilds the graph
//! from them. The scalar under test is `Σ out ⊙ R` for a fixed random
//! projection `R`, so upstream gradients are not uniform.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagbench_autodiff::nn::{
    Gru, GruLayer, Init, Linear, MultiHeadSelfAttention, SqueezeExcitation, TransformerBlock,
};
use tagbench_autodiff::ops::{self, BatchNormStats};
use tagbench_autodiff::{no_grad, ParamStore, Tensor};

use crate::{finite_diff_grad, relative_error};

pub struct GradCase {
    pub name: &'static str,
    pub leaves: Vec<Tensor>,
    pub forward: Box<dyn Fn() -> Tensor>,
    /// Largest finite-difference step tried.
    pub step: f32,
}

pub struct GradOutcome {
    pub name: &'static str,
    pub seed: u64,
    pub rel_error: f64,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::parameter(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Magnitudes in [0.2, 1] with random sign, keeping clear of the ReLU kink.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.2f32..1.0);
            if rng.random::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::parameter(shape, data).unwrap()
}

/// Shuffled values on a 0.05 grid, so every max is separated from the
/// runner-up by more than twice the probe step.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * 0.05).collect();
    data.shuffle(rng);
    Tensor::parameter(shape, data).unwrap()
}

/// Shuffled values on a 0.3 grid: rows never collapse to near-zero
/// variance, which would make normalization ill-conditioned.
fn spread(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data: Vec<f32> = (0..n).map(|i| (i as f32 - n as f32 / 2.0) * 0.3).collect();
    data.shuffle(rng);
    Tensor::parameter(shape, data).unwrap()
}

fn randomize_store(store: &ParamStore, rng: &mut ChaCha8Rng, amp: f32) {
    for (_, t) in store.weights() {
        let v: Vec<f32> = (0..t.numel()).map(|_| rng.random_range(-amp..amp)).collect();
        t.set_data(&v).unwrap();
    }
}

/// Shifts `bias[j]` so that every pre-activation in column `j` of
/// `pre [rows, units]` sits at least `margin` away from the ReLU kink.
fn clear_kinks(pre: &Tensor, bias: &Tensor, margin: f32) {
    let units = *pre.shape().last().unwrap();
    let z = pre.to_vec();
    let mut b = bias.to_vec();
    for (j, bj) in b.iter_mut().enumerate() {
        let col: Vec<f32> = z.iter().skip(j).step_by(units).copied().collect();
        let delta = (0..200)
            .map(|i| if i % 2 == 0 { i as f32 * 0.01 } else { -(i as f32) * 0.01 })
            .find(|d| col.iter().all(|v| (v + d).abs() >= margin))
            .unwrap_or(0.0);
        *bj += delta;
    }
    bias.set_data(&b).unwrap();
}

fn leaves_of(store: &ParamStore, extra: &[Tensor]) -> Vec<Tensor> {
    let mut v = extra.to_vec();
    v.extend(store.weights().map(|(_, t)| t.clone()));
    v
}

fn projection(out: &Tensor, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..out.numel()).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Runs one case: analytic gradients by backward, numeric ones by central
/// differences; returns the norm-wise relative error over all leaves.
///
/// The numeric side is evaluated at `step`, `step/4` and `step/16` and the
/// closest agreement is kept: large steps suffer from curvature and nearby
/// ReLU kinks, small ones from f32 rounding in the forward pass.
pub fn run_case(case: &GradCase, seed: u64) -> GradOutcome {
    for l in &case.leaves {
        l.zero_grad();
    }
    let out = (case.forward)();
    let r = projection(&out, seed);
    let rt = Tensor::new(out.shape(), r.clone()).unwrap();
    let loss = ops::sum(&ops::mul(&out, &rt).unwrap());
    loss.backward().unwrap();

    let mut analytic = Vec::new();
    for leaf in &case.leaves {
        let g = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        analytic.extend(g.into_iter().map(|v| v as f64));
    }
    let mut best = f64::INFINITY;
    for step in [case.step, case.step / 4.0, case.step / 16.0] {
        let mut numeric = Vec::new();
        for leaf in &case.leaves {
            let base = leaf.to_vec();
            let mut f = |x: &[f32]| {
                leaf.set_data(x).unwrap();
                let y = no_grad(|| (case.forward)());
                y.to_vec().iter().zip(&r).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>()
            };
            numeric.extend(finite_diff_grad(&mut f, &base, step));
            leaf.set_data(&base).unwrap();
        }
        let err = relative_error(&analytic, &numeric, 1e-6);
        if err.is_nan() {
            best = f64::NAN;
            break;
        }
        best = best.min(err);
    }
    GradOutcome {
        name: case.name,
        seed,
        rel_error: best,
    }
}

/// Every differentiable operation and composite layer, instantiated with
/// small random shapes drawn from `seed`.
pub fn all_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut cases: Vec<GradCase> = Vec::new();
    let h = 5e-3;
    let mut push = |name, leaves: Vec<Tensor>, forward: Box<dyn Fn() -> Tensor>, step| {
        cases.push(GradCase { name, leaves, forward, step })
    };

    let (a, b) = (rng.random_range(1..4), rng.random_range(2..6));
    let shape = [a, b];

    let (x, y) = (uniform(rng, &shape, -1.0, 1.0), uniform(rng, &shape, -1.0, 1.0));
    let (xc, yc) = (x.clone(), y.clone());
    push("add", vec![x, y], Box::new(move || ops::add(&xc, &yc).unwrap()), h);
    let (x, y) = (uniform(rng, &shape, -1.0, 1.0), uniform(rng, &shape, -1.0, 1.0));
    let (xc, yc) = (x.clone(), y.clone());
    push("sub", vec![x, y], Box::new(move || ops::sub(&xc, &yc).unwrap()), h);
    let (x, y) = (uniform(rng, &shape, -1.0, 1.0), uniform(rng, &shape, -1.0, 1.0));
    let (xc, yc) = (x.clone(), y.clone());
    push("mul", vec![x, y], Box::new(move || ops::mul(&xc, &yc).unwrap()), h);
    let x = uniform(rng, &shape, -1.0, 1.0);
    let s = rng.random_range(-2.0f32..2.0);
    let xc = x.clone();
    push("scale", vec![x], Box::new(move || ops::scale(&xc, s)), h);
    let x = off_zero(rng, &shape);
    let xc = x.clone();
    push("relu", vec![x], Box::new(move || ops::relu(&xc)), h);
    let x = uniform(rng, &shape, -3.0, 3.0);
    let xc = x.clone();
    push("sigmoid", vec![x], Box::new(move || ops::sigmoid(&xc)), h);
    let x = uniform(rng, &shape, -2.0, 2.0);
    let xc = x.clone();
    push("tanh", vec![x], Box::new(move || ops::tanh(&xc)), h);
    let x = uniform(rng, &shape, -2.0, 2.0);
    let xc = x.clone();
    push("softmax", vec![x], Box::new(move || ops::softmax(&xc)), h);
    let x = uniform(rng, &shape, 0.5, 2.0);
    let xc = x.clone();
    push("log_clamp", vec![x], Box::new(move || ops::log_clamp(&xc, 1e-10)), h);
    let x = uniform(rng, &shape, -1.0, 1.0);
    let xc = x.clone();
    let drop_seed = rng.random::<u64>();
    push(
        "dropout",
        vec![x],
        Box::new(move || ops::dropout(&xc, 0.5, &mut ChaCha8Rng::seed_from_u64(drop_seed))),
        h,
    );

    let (n, c, l) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(2..5));
    let x = uniform(rng, &[n, c, l], -1.0, 1.0);
    let g = uniform(rng, &[n, c], -1.0, 1.0);
    let (xc, gc) = (x.clone(), g.clone());
    push("channel_scale", vec![x, g], Box::new(move || ops::channel_scale(&xc, &gc).unwrap()), h);

    let (m, k, p) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let (x, y) = (uniform(rng, &[m, k], -1.0, 1.0), uniform(rng, &[k, p], -1.0, 1.0));
    let (xc, yc) = (x.clone(), y.clone());
    push("matmul", vec![x, y], Box::new(move || ops::matmul(&xc, &yc).unwrap()), h);
    for (ta, tb, name) in [(false, false, "bmm"), (true, false, "bmm_ta"), (false, true, "bmm_tb"), (true, true, "bmm_tab")] {
        let bsz = rng.random_range(1..3);
        let sa = if ta { [bsz, k, m] } else { [bsz, m, k] };
        let sb = if tb { [bsz, p, k] } else { [bsz, k, p] };
        let (x, y) = (uniform(rng, &sa, -1.0, 1.0), uniform(rng, &sb, -1.0, 1.0));
        let (xc, yc) = (x.clone(), y.clone());
        push(name, vec![x, y], Box::new(move || ops::bmm(&xc, &yc, ta, tb).unwrap()), h);
    }
    let x = uniform(rng, &[2, m, k], -1.0, 1.0);
    let w = uniform(rng, &[p, k], -1.0, 1.0);
    let bias = uniform(rng, &[p], -1.0, 1.0);
    let (xc, wc, bc) = (x.clone(), w.clone(), bias.clone());
    push("linear", vec![x, w, bias], Box::new(move || ops::linear(&xc, &wc, Some(&bc)).unwrap()), h);

    // Convolutions with random geometry.
    let (ci, co) = (rng.random_range(1..3), rng.random_range(1..4));
    let (kh, kw) = (rng.random_range(1..4), rng.random_range(1..4));
    let stride = (rng.random_range(1..3), rng.random_range(1..3));
    let pad = (rng.random_range(0..2), rng.random_range(0..2));
    let (hh, ww) = (rng.random_range(kh..kh + 4), rng.random_range(kw..kw + 4));
    let x = uniform(rng, &[2, ci, hh, ww], -1.0, 1.0);
    let w = uniform(rng, &[co, ci, kh, kw], -1.0, 1.0);
    let bias = uniform(rng, &[co], -1.0, 1.0);
    let (xc, wc, bc) = (x.clone(), w.clone(), bias.clone());
    push(
        "conv2d",
        vec![x, w, bias],
        Box::new(move || ops::conv2d(&xc, &wc, Some(&bc), stride, pad).unwrap()),
        h,
    );
    let k1 = rng.random_range(1..4);
    let s1 = rng.random_range(1..4);
    let p1 = rng.random_range(0..2);
    let len = rng.random_range(k1..k1 + 8);
    let x = uniform(rng, &[2, ci, len], -1.0, 1.0);
    let w = uniform(rng, &[co, ci, k1], -1.0, 1.0);
    let bias = uniform(rng, &[co], -1.0, 1.0);
    let (xc, wc, bc) = (x.clone(), w.clone(), bias.clone());
    push(
        "conv1d",
        vec![x, w, bias],
        Box::new(move || ops::conv1d(&xc, &wc, Some(&bc), s1, p1).unwrap()),
        h,
    );

    // Pooling and reductions.
    let (pk, ps) = ((rng.random_range(1..3), rng.random_range(1..4)), (rng.random_range(1..3), rng.random_range(1..4)));
    let x = distinct(rng, &[2, 2, pk.0 + 3, pk.1 + 4]);
    let xc = x.clone();
    push("max_pool2d", vec![x], Box::new(move || ops::max_pool2d(&xc, pk, ps).unwrap()), h);
    let (k1, s1) = (rng.random_range(1..4), rng.random_range(1..4));
    let x = distinct(rng, &[2, 2, k1 + 5]);
    let xc = x.clone();
    push("max_pool1d", vec![x], Box::new(move || ops::max_pool1d(&xc, k1, s1).unwrap()), h);
    let s3 = [rng.random_range(1..4), rng.random_range(2..5), rng.random_range(1..4)];
    let axis = rng.random_range(0..3);
    let x = distinct(rng, &s3);
    let xc = x.clone();
    push("max_axis", vec![x], Box::new(move || ops::max_axis(&xc, axis).unwrap()), h);
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    push("mean_axis", vec![x], Box::new(move || ops::mean_axis(&xc, axis).unwrap()), h);
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    push("sum", vec![x], Box::new(move || ops::sum(&xc)), h);
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    push("mean", vec![x], Box::new(move || ops::mean(&xc)), h);

    // Shape plumbing.
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    let flat = [s3[0] * s3[1], s3[2]];
    push("reshape", vec![x], Box::new(move || ops::reshape(&xc, &flat).unwrap()), h);
    let mut perm = vec![0, 1, 2];
    perm.shuffle(rng);
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    push("permute", vec![x], Box::new(move || ops::permute(&xc, &perm).unwrap()), h);
    let mut s3b = s3;
    s3b[axis] = rng.random_range(1..4);
    let (x, y) = (uniform(rng, &s3, -1.0, 1.0), uniform(rng, &s3b, -1.0, 1.0));
    let (xc, yc) = (x.clone(), y.clone());
    push("concat", vec![x, y], Box::new(move || ops::concat(&[xc.clone(), yc.clone()], axis).unwrap()), h);
    let start = rng.random_range(0..s3[axis]);
    let nlen = rng.random_range(1..=s3[axis] - start);
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    push("narrow", vec![x], Box::new(move || ops::narrow(&xc, axis, start, nlen).unwrap()), h);
    let x = uniform(rng, &s3, -1.0, 1.0);
    let xc = x.clone();
    push("select", vec![x], Box::new(move || ops::select(&xc, axis, start).unwrap()), h);
    let (x, y) = (uniform(rng, &s3, -1.0, 1.0), uniform(rng, &s3, -1.0, 1.0));
    let (xc, yc) = (x.clone(), y.clone());
    push("stack", vec![x, y], Box::new(move || ops::stack(&[xc.clone(), yc.clone()], axis).unwrap()), h);

    // Normalization and loss.
    let (n, c, l) = (rng.random_range(2..4), rng.random_range(1..4), rng.random_range(2..5));
    let x = uniform(rng, &[n, c, l], -2.0, 2.0);
    let gamma = uniform(rng, &[c], 0.5, 1.5);
    let beta = uniform(rng, &[c], -0.5, 0.5);
    let stats = BatchNormStats {
        running_mean: Tensor::zeros(&[c]),
        running_var: Tensor::full(&[c], 1.0),
        momentum: 0.1,
        eps: 1e-5,
    };
    let (xc, gc, bc, st) = (x.clone(), gamma.clone(), beta.clone(), stats.clone());
    push(
        "batch_norm_train",
        vec![x, gamma, beta],
        Box::new(move || ops::batch_norm(&xc, &gc, &bc, &st, true).unwrap()),
        h,
    );
    let x = uniform(rng, &[n, c, l], -2.0, 2.0);
    let gamma = uniform(rng, &[c], 0.5, 1.5);
    let beta = uniform(rng, &[c], -0.5, 0.5);
    stats.running_mean.set_data(&uniform(rng, &[c], -0.5, 0.5).to_vec()).unwrap();
    stats.running_var.set_data(&uniform(rng, &[c], 0.5, 2.0).to_vec()).unwrap();
    let (xc, gc, bc) = (x.clone(), gamma.clone(), beta.clone());
    push(
        "batch_norm_eval",
        vec![x, gamma, beta],
        Box::new(move || ops::batch_norm(&xc, &gc, &bc, &stats, false).unwrap()),
        h,
    );
    let d = rng.random_range(3..7);
    let x = spread(rng, &[n, l, d]);
    let gamma = uniform(rng, &[d], 0.5, 1.5);
    let beta = uniform(rng, &[d], -0.5, 0.5);
    let (xc, gc, bc) = (x.clone(), gamma.clone(), beta.clone());
    push("layer_norm", vec![x, gamma, beta], Box::new(move || ops::layer_norm(&xc, &gc, &bc, 1e-5).unwrap()), h);
    let z = uniform(rng, &[n, d], -4.0, 4.0);
    let t = Tensor::new(&[n, d], (0..n * d).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect()).unwrap();
    let zc = z.clone();
    push("bce_with_logits", vec![z], Box::new(move || ops::bce_with_logits(&zc, &t).unwrap()), h);

    // Composite layers, differentiated with respect to input and every weight.
    let layer_seed = rng.random::<u64>();
    let mut lrng = ChaCha8Rng::seed_from_u64(layer_seed);

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut Init::new(&mut store, &mut lrng), 4, 3, 1.0).unwrap();
    randomize_store(&store, rng, 0.8);
    let x = uniform(rng, &[2, 4], -1.0, 1.0);
    let leaves = leaves_of(&store, std::slice::from_ref(&x));
    push("dense_layer", leaves, Box::new(move || lin.forward(&x).unwrap()), h);

    let mut store = ParamStore::new();
    let gru = GruLayer::new(&mut Init::new(&mut store, &mut lrng), 3, 5).unwrap();
    randomize_store(&store, rng, 0.6);
    let x = uniform(rng, &[3, 4, 3], -1.0, 1.0);
    let leaves = leaves_of(&store, std::slice::from_ref(&x));
    push("gru_layer", leaves, Box::new(move || gru.forward(&x).unwrap().0), h);

    let mut store = ParamStore::new();
    let gru2 = Gru::new(&mut Init::new(&mut store, &mut lrng), 2, 3, 2).unwrap();
    randomize_store(&store, rng, 0.6);
    let x = uniform(rng, &[2, 3, 2], -1.0, 1.0);
    let leaves = leaves_of(&store, std::slice::from_ref(&x));
    push("gru_two_layer", leaves, Box::new(move || gru2.forward(&x).unwrap().1), h);

    let mut store = ParamStore::new();
    let mha = MultiHeadSelfAttention::new(&mut Init::new(&mut store, &mut lrng), 8, 2).unwrap();
    randomize_store(&store, rng, 0.5);
    let x = uniform(rng, &[1, 3, 8], -1.0, 1.0);
    let leaves = leaves_of(&store, std::slice::from_ref(&x));
    push("self_attention", leaves, Box::new(move || mha.forward(&x).unwrap()), h);

    let mut store = ParamStore::new();
    let se = SqueezeExcitation::new(&mut Init::new(&mut store, &mut lrng), 8, 4).unwrap();
    randomize_store(&store, rng, 0.8);
    let x = uniform(rng, &[1, 8, 5], -1.0, 1.0);
    no_grad(|| {
        let squeezed = ops::mean_axis(&x, 2).unwrap();
        clear_kinks(&se.fc1.forward(&squeezed).unwrap(), &se.fc1.bias, 0.05);
    });
    let leaves = leaves_of(&store, std::slice::from_ref(&x));
    push("squeeze_excitation", leaves, Box::new(move || se.forward(&x).unwrap()), h);

    let mut store = ParamStore::new();
    let block = TransformerBlock::new(&mut Init::new(&mut store, &mut lrng), 8, 2, 12).unwrap();
    randomize_store(&store, rng, 0.5);
    let x = uniform(rng, &[1, 3, 8], -1.0, 1.0);
    no_grad(|| {
        let y = block.norm1.forward(&ops::add(&x, &block.attn.forward(&x).unwrap()).unwrap()).unwrap();
        clear_kinks(&block.ff1.forward(&y).unwrap(), &block.ff1.bias, 0.05);
    });
    let leaves = leaves_of(&store, std::slice::from_ref(&x));
    push("transformer_block", leaves, Box::new(move || block.forward(&x).unwrap()), h);

    cases
}

/// Runs every case for `seeds` seeds and returns the outcomes.
pub fn sweep(seeds: std::ops::Range<u64>) -> Vec<GradOutcome> {
    seeds
        .flat_map(|seed| all_cases(seed).into_iter().map(move |c| run_case(&c, seed)))
        .collect()
}
