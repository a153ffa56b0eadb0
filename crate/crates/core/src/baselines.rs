//! Published reference results on MTAT, MSD and MTG-Jamendo.
//!
//! These are reference numbers only. They were measured on licensed audio
//! that this toolkit never downloads, so they always render in their own
//! `published_*` columns and never alongside measured values in one column.

use crate::models::Arch;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchmarkDataset {
    Mtat,
    Msd,
    Jamendo,
}

impl BenchmarkDataset {
    pub const ALL: [BenchmarkDataset; 3] = [BenchmarkDataset::Mtat, BenchmarkDataset::Msd, BenchmarkDataset::Jamendo];

    pub fn as_str(&self) -> &'static str {
        match self {
            BenchmarkDataset::Mtat => "mtat",
            BenchmarkDataset::Msd => "msd",
            BenchmarkDataset::Jamendo => "mtg_jamendo",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub roc_auc: f64,
    pub pr_auc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineRow {
    pub method: &'static str,
    pub arch: Arch,
    pub n_mels: usize,
    /// MTAT, MSD, MTG-Jamendo.
    pub scores: [Score; 3],
    pub note: Option<&'static str>,
}

impl BaselineRow {
    /// Identifier matching [`crate::models::ModelConfig::model_id`].
    pub fn model_id(&self) -> String {
        if self.n_mels == self.arch.default_bands() {
            self.arch.as_str().to_string()
        } else {
            format!("{}_{}", self.arch, self.n_mels)
        }
    }

    pub fn score(&self, dataset: BenchmarkDataset) -> Score {
        self.scores[dataset as usize]
    }
}

const fn s(roc_auc: f64, pr_auc: f64) -> Score {
    Score { roc_auc, pr_auc }
}

const fn row(method: &'static str, arch: Arch, n_mels: usize, scores: [Score; 3]) -> BaselineRow {
    BaselineRow { method, arch, n_mels, scores, note: None }
}

pub const TABLE: [BaselineRow; 12] = [
    row("FCN", Arch::Fcn, 96, [s(0.9005, 0.4295), s(0.8744, 0.2970), s(0.8255, 0.2801)]),
    row("FCN (128 Mel bins)", Arch::Fcn, 128, [s(0.8994, 0.4236), s(0.8742, 0.2963), s(0.8245, 0.2792)]),
    row("Musicnn", Arch::Musicnn, 96, [s(0.9106, 0.4493), s(0.8803, 0.2983), s(0.8226, 0.2713)]),
    BaselineRow {
        note: Some("MSD PR-AUC printed as 3036 in the source table; shipped as 0.3036"),
        ..row("Musicnn (128 Mel bins)", Arch::Musicnn, 128, [s(0.9092, 0.4546), s(0.8788, 0.3036), s(0.8275, 0.2810)])
    },
    row("Sample-level", Arch::SampleLevel, 0, [s(0.9058, 0.4422), s(0.8789, 0.2959), s(0.8208, 0.2742)]),
    row("Sample-level + SE", Arch::SampleLevelSe, 0, [s(0.9103, 0.4520), s(0.8838, 0.3109), s(0.8233, 0.2784)]),
    row("CRNN", Arch::Crnn, 96, [s(0.8722, 0.3625), s(0.8499, 0.2469), s(0.7978, 0.2358)]),
    row("CRNN (128 Mel bins)", Arch::Crnn, 128, [s(0.8703, 0.3601), s(0.8460, 0.2330), s(0.7984, 0.2378)]),
    row("Self-attention", Arch::SelfAttention, 128, [s(0.9077, 0.4445), s(0.8810, 0.3103), s(0.8261, 0.2883)]),
    row("Harmonic CNN", Arch::HarmonicCnn, 128, [s(0.9127, 0.4611), s(0.8898, 0.3298), s(0.8322, 0.2956)]),
    row("Short-chunk CNN", Arch::ShortChunk, 128, [s(0.9126, 0.4590), s(0.8883, 0.3251), s(0.8324, 0.2976)]),
    row("Short-chunk CNN + Res", Arch::ShortChunkRes, 128, [s(0.9129, 0.4614), s(0.8898, 0.3280), s(0.8316, 0.2951)]),
];

pub fn lookup(model_id: &str) -> Option<&'static BaselineRow> {
    TABLE.iter().find(|r| r.model_id() == model_id)
}
