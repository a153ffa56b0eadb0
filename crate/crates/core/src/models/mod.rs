//! The architecture zoo: configs, parameter construction, input
//! preparation and forward passes.

mod config;
pub mod nets;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagbench_autodiff::nn::Init;
use tagbench_autodiff::{Ctx, ParamStore, Tensor};

pub use config::{receptive_field, Arch, InputKind, ModelConfig, ReceptiveField};
pub use nets::Network;

use crate::dsp::{mel_filterbank, mel_with, power_spectrogram, FilterbankMatrix, N_FFT};
use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

#[derive(Clone, Debug)]
enum Frontend {
    Waveform,
    Mel(FilterbankMatrix),
    Power,
}

/// A built network with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub network: Network,
    frontend: Frontend,
}

impl Model {
    /// Same config and seed give bit-identical parameters.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let frontend = match config.arch.input_kind() {
            InputKind::Waveform => Frontend::Waveform,
            InputKind::MelSpectrogram => Frontend::Mel(mel_filterbank(config.n_mels, N_FFT, SAMPLE_RATE)?),
            InputKind::PowerSpectrogram => Frontend::Power,
        };
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::build(&mut Init::new(&mut params, &mut rng), config)?;
        Ok(Model {
            config: config.clone(),
            params,
            network,
            frontend,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.num_trainable()
    }

    /// Converts one chunk of 16 kHz audio into this model's input
    /// representation, flattened.
    pub fn represent(&self, chunk: &[f32]) -> Vec<f32> {
        match &self.frontend {
            Frontend::Waveform => chunk.to_vec(),
            Frontend::Mel(fb) => mel_with(fb, chunk).values,
            Frontend::Power => power_spectrogram(chunk).0,
        }
    }

    /// Per-example input shape for a chunk of `len` samples.
    pub fn shape_for(&self, len: usize) -> Vec<usize> {
        let frames = crate::dsp::n_frames(len, crate::dsp::HOP);
        match &self.frontend {
            Frontend::Waveform => vec![len],
            Frontend::Mel(fb) => vec![fb.n_rows, frames],
            Frontend::Power => vec![N_FFT / 2 + 1, frames],
        }
    }

    /// Stacks equally long chunks into a batched input tensor.
    pub fn prepare(&self, chunks: &[&[f32]]) -> Result<Tensor> {
        let len = chunks.first().map(|c| c.len()).ok_or_else(|| Error::InvalidConfig("empty batch".into()))?;
        if chunks.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidConfig("chunks in a batch must share a length".into()));
        }
        let mut shape = vec![chunks.len()];
        shape.extend(self.shape_for(len));
        let data: Vec<f32> = chunks.iter().flat_map(|c| self.represent(c)).collect();
        Ok(Tensor::new(&shape, data)?)
    }

    /// Logits `[N, n_tags]`.
    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        ctx.record("input", x);
        let y = self.network.forward(x, ctx)?;
        ctx.record("logits", &y);
        debug_assert_eq!(y.shape(), [x.shape()[0], self.config.n_tags]);
        Ok(y)
    }

    /// Routes every residual block of short_chunk_res through its skip path
    /// only.
    pub fn set_residual_bypass(&mut self, on: bool) -> Result<()> {
        match &mut self.network {
            Network::ShortChunkRes(m) => {
                m.bypass_branches = on;
                Ok(())
            }
            _ => Err(Error::InvalidConfig(format!("{} has no residual blocks", self.config.arch))),
        }
    }
}

pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    Model::build(config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fcn_first_conv_is_64x1x3x3() {
        let m = Model::build(&ModelConfig::new(Arch::Fcn), 0).unwrap();
        let w = m.params.get("fcn.stack.blocks.0.conv.weight").unwrap();
        assert_eq!(w.shape(), [64, 1, 3, 3]);
    }

    #[test]
    fn sample_level_has_ten_k3_convs() {
        let m = Model::build(&ModelConfig::new(Arch::SampleLevel), 0).unwrap();
        let convs: Vec<_> = m.params.iter().filter(|(n, _, t)| n.ends_with("conv.weight") && t.ndim() == 3).collect();
        assert_eq!(convs.len(), 10);
        assert!(convs.iter().all(|(_, _, t)| t.shape()[2] == 3));
    }

    #[test]
    fn same_seed_same_parameters() {
        let c = ModelConfig::reduced(Arch::Musicnn);
        let (a, b) = (Model::build(&c, 5).unwrap(), Model::build(&c, 5).unwrap());
        for ((na, _, ta), (nb, _, tb)) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(na, nb);
            let bits = |t: &Tensor| t.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ta), bits(tb));
        }
        assert_eq!(a.param_count(), b.param_count());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ModelConfig::new(Arch::ShortChunk);
        c.widths.pop();
        assert!(matches!(Model::build(&c, 0), Err(Error::InvalidConfig(_))));
        let mut c = ModelConfig::new(Arch::SelfAttention);
        c.heads = 7;
        assert!(Model::build(&c, 0).is_err());
        assert!("bogus".parse::<Arch>().is_err());
        assert_eq!("short_chunk_res".parse::<Arch>().unwrap(), Arch::ShortChunkRes);
    }

    #[test]
    fn receptive_fields() {
        let fcn = receptive_field(&ModelConfig::new(Arch::Fcn));
        assert!((fcn.time_seconds - 29.1).abs() < 1e-9);
        assert!(fcn.conv_span >= 1366);
        assert_eq!(receptive_field(&ModelConfig::new(Arch::Musicnn)).time_seconds, 3.0);
        let sl = receptive_field(&ModelConfig::new(Arch::SampleLevel));
        assert!((sl.time_seconds - 3.6905625).abs() < 1e-12);
        assert!(sl.conv_span >= 59049);
        assert_eq!(sl.freq_bands, None);
    }
}
