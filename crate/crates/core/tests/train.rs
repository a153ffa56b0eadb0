use std::path::Path;

use tagbench_autodiff::{no_grad, Ctx};
use tagbench_core::datasets::{generate_synthetic, Manifest, Split, SyntheticSpec};
use tagbench_core::deform::Deformation;
use tagbench_core::models::{Arch, Model, ModelConfig};
use tagbench_core::train::{
    evaluate, history_tsv, load_checkpoint, predict_clip, report_from_scores, select_best, train, TrainConfig,
    TrainMode,
};
use tagbench_core::{AudioClip, Error};

/// Six half-second synthetic clips: four train, one valid, one test.
fn tiny_manifest(dir: &Path) -> Manifest {
    let spec = SyntheticSpec { n_clips: 6, clip_seconds: 0.5, seed: 3, ..Default::default() };
    let mut m = generate_synthetic(&spec, dir).unwrap();
    for (i, e) in m.entries.iter_mut().enumerate() {
        e.split = match i {
            0..4 => Split::Train,
            4 => Split::Valid,
            _ => Split::Test,
        };
    }
    m
}

fn small(arch: Arch, input_length: usize) -> ModelConfig {
    ModelConfig { input_length, ..ModelConfig::reduced(arch) }
}

#[test]
fn one_epoch_of_four_clips_in_batches_of_two_is_two_steps() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest(dir.path());
    let model = Model::build(&small(Arch::ShortChunk, 8000), 0).unwrap();
    let cfg = TrainConfig { batch_size: 2, max_epochs: 1, ..Default::default() };
    let run = train(model, &m, &cfg, &dir.path().join("out")).unwrap();
    assert_eq!(run.steps, 2);
    assert_eq!(run.history.len(), 1);
    assert_eq!(run.mode, TrainMode::ChunkLevel);
}

#[test]
fn best_checkpoint_is_the_validation_minimum_and_reloads_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest(dir.path());
    let model = Model::build(&small(Arch::ShortChunk, 8000), 1).unwrap();
    let cfg = TrainConfig { batch_size: 2, max_epochs: 6, adam_lr: 1e-2, seed: 4, ..Default::default() };
    let run = train(model, &m, &cfg, &dir.path().join("out")).unwrap();
    let vals: Vec<f64> = run.history.iter().map(|h| h.val_loss).collect();
    assert_eq!(Some(run.best_epoch), select_best(&vals));
    let (loaded, meta) = load_checkpoint(&run.best_checkpoint).unwrap();
    assert_eq!(meta.epoch, run.best_epoch);
    assert_eq!(meta.val_loss, vals[run.best_epoch - 1]);
    assert_eq!(meta.config, run.model.config);
    for ((na, _, a), (nb, _, b)) in loaded.params.iter().zip(run.model.params.iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.to_vec(), b.to_vec(), "{na}");
    }
}

#[test]
fn same_seed_same_history_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest(dir.path());
    let cfg = TrainConfig { batch_size: 2, max_epochs: 3, seed: 9, ..Default::default() };
    let once = |tag: &str| {
        let model = Model::build(&small(Arch::SampleLevel, 8000), 2).unwrap();
        let run = train(model, &m, &cfg, &dir.path().join(tag)).unwrap();
        let report = evaluate(&run.model, &m, Split::Test, Some(&Deformation::WhiteNoise(0.4)), 5).unwrap();
        (history_tsv(&run.history), report.to_json())
    };
    assert_eq!(once("a"), once("b"));
}

#[test]
fn song_level_arch_trains_whole_short_clips() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest(dir.path());
    let cfg = TrainConfig { batch_size: 4, max_epochs: 1, ..Default::default() };
    let run = train(Model::build(&ModelConfig::reduced(Arch::Fcn), 0).unwrap(), &m, &cfg, &dir.path().join("o")).unwrap();
    assert_eq!(run.mode, TrainMode::SongLevel);
    let forced = TrainConfig { mode: Some(TrainMode::ChunkLevel), ..cfg };
    let err = train(Model::build(&ModelConfig::reduced(Arch::Fcn), 0).unwrap(), &m, &forced, &dir.path().join("p"));
    assert!(matches!(err, Err(Error::ModeMismatch(_))));
}

#[test]
fn missing_validation_split_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = tiny_manifest(dir.path());
    m.entries.retain(|e| e.split != Split::Valid);
    let model = Model::build(&small(Arch::ShortChunk, 8000), 0).unwrap();
    let err = train(model, &m, &TrainConfig::default(), &dir.path().join("o"));
    assert!(matches!(err, Err(Error::EmptySplit(_))));
}

fn sigmoid(z: f32) -> f64 {
    1.0 / (1.0 + (-(z as f64)).exp())
}

#[test]
fn clip_of_exactly_one_window_equals_a_single_pass() {
    let c = small(Arch::ShortChunk, 16000);
    let model = Model::build(&c, 3).unwrap();
    let x: Vec<f32> = (0..16000).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
    let clip = AudioClip::new(x.clone(), 16000, "one").unwrap();
    let scores = predict_clip(&model, &clip).unwrap();
    let logits = no_grad(|| model.forward(&model.prepare(&[&x]).unwrap(), &mut Ctx::eval())).unwrap().to_vec();
    let single: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    assert_eq!(scores, single);
}

#[test]
fn prediction_is_the_mean_over_sixteen_spaced_chunks() {
    let c = small(Arch::ShortChunk, 4000);
    let model = Model::build(&c, 3).unwrap();
    let x: Vec<f32> = (0..17_000).map(|i| ((i * i) as f32 * 1e-5).sin() * 0.4).collect();
    let clip = AudioClip::new(x.clone(), 16000, "long").unwrap();
    let scores = predict_clip(&model, &clip).unwrap();
    let mut expect = vec![0.0f64; 50];
    for i in 0..16 {
        let start = (i as f64 * 13_000.0 / 15.0).round() as usize;
        let chunk = &x[start..start + 4000];
        let logits = no_grad(|| model.forward(&model.prepare(&[chunk]).unwrap(), &mut Ctx::eval())).unwrap();
        for (e, z) in expect.iter_mut().zip(logits.to_vec()) {
            *e += sigmoid(z);
        }
    }
    for (s, e) in scores.iter().zip(&expect) {
        assert!((s - e / 16.0).abs() < 1e-6, "{s} vs {}", e / 16.0);
    }
}

#[test]
fn zero_weight_model_scores_one_half() {
    let model = Model::build(&small(Arch::ShortChunk, 4000), 0).unwrap();
    for (_, _, t) in model.params.iter() {
        t.set_data(&vec![0.0; t.numel()]).unwrap();
    }
    let clip = AudioClip::new(vec![0.25; 9000], 16000, "c").unwrap();
    assert!(predict_clip(&model, &clip).unwrap().iter().all(|&p| p == 0.5));
}

#[test]
fn identity_deformation_matches_untouched_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_manifest(dir.path());
    let model = Model::build(&small(Arch::SampleLevel, 4000), 0).unwrap();
    let a = evaluate(&model, &m, Split::Train, None, 0).unwrap();
    let b = evaluate(&model, &m, Split::Train, Some(&Deformation::None), 0).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.n_clips, 4);
    assert_eq!(a.per_tag.len(), 50);
}

#[test]
fn oracle_scores_give_perfect_macro_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { n_clips: 40, clip_seconds: 0.1, seed: 1, ..Default::default() };
    let m = generate_synthetic(&spec, dir.path()).unwrap();
    let entries = m.split(Split::Train);
    let scores: Vec<Vec<f64>> = entries.iter().map(|e| e.tags.iter().map(|&b| b as u8 as f64).collect()).collect();
    let r = report_from_scores("oracle", &m, Split::Train, &Deformation::None, &entries, &scores).unwrap();
    assert_eq!(r.macro_roc_auc, Some(1.0));
    assert_eq!(r.macro_pr_auc, Some(1.0));
    assert_eq!(r.evaluated_tags().count(), 8);
}
