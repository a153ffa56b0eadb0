//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in a
//! fixed order and share the trained short-chunk model. Set
//! `TAGBENCH_ACCEPTANCE=A2,A6` to run a subset while iterating; the default
//! is all of them. A4 trains nine networks and dominates the runtime.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagbench_autodiff::{no_grad, Ctx};
use tagbench_core::datasets::{generate_synthetic, Manifest, Split, SyntheticSpec};
use tagbench_core::deform::{pitch_shift, time_stretch, CompressorPreset, Deformation};
use tagbench_core::metrics::{pr_auc, roc_auc};
use tagbench_core::models::{Arch, Model, ModelConfig};
use tagbench_core::report::EvalReport;
use tagbench_core::train::{evaluate, train, TrainConfig};
use tagbench_core::AudioClip;
use tagbench_testkit::{average_precision_prefix, bin_hz, dft_peak_bin, roc_auc_pairwise, sine};

type Outcome = Result<String, String>;
type Trace = Vec<(String, Vec<usize>)>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ------------------------------------------------------------------ A1

fn a1_gradients() -> Outcome {
    let t0 = Instant::now();
    let outcomes = tagbench_testkit::grad::sweep(0..100);
    let elapsed = t0.elapsed();
    let mut worst: BTreeMap<&str, (f64, u64, usize)> = BTreeMap::new();
    for o in &outcomes {
        let e = worst.entry(o.name).or_insert((0.0, 0, 0));
        e.2 += 1;
        if o.rel_error > e.0 || o.rel_error.is_nan() {
            e.0 = o.rel_error;
            e.1 = o.seed;
        }
    }
    let failing: Vec<String> = worst
        .iter()
        .filter(|(_, (err, _, _))| err.is_nan() || *err > 1e-3)
        .map(|(name, (err, seed, _))| format!("{name} {err:.2e} at seed {seed}"))
        .collect();
    ensure(failing.is_empty(), || format!("above 1e-3: {}", failing.join(", ")))?;
    ensure(worst.values().all(|w| w.2 == 100), || "an operation ran fewer than 100 seeds".into())?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {}", secs(elapsed)))?;
    let max = worst.values().map(|w| w.0).fold(0.0, f64::max);
    Ok(format!("{} operations x 100 seeds, worst relative error {max:.2e}, {}", worst.len(), secs(elapsed)))
}

// ------------------------------------------------------------------ A2

fn a2_metrics() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 1000 {
        let n = rng.random_range(2..=64);
        // Coarse scores half the time so ties are common.
        let levels = if rng.random_bool(0.5) { rng.random_range(2..6) as f64 } else { 0.0 };
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if levels > 0.0 { (s * levels).floor() / levels } else { s }
            })
            .collect();
        let p = rng.random_range(0.1..0.9);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let roc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let ap = pr_auc(&scores, &labels).map_err(|e| e.to_string())?;
        let d_roc = (roc - roc_auc_pairwise(&scores, &labels)).abs();
        let d_ap = (ap - average_precision_prefix(&scores, &labels)).abs();
        ensure(d_roc <= 1e-9 && d_ap <= 1e-9, || format!("instance {done}: roc off by {d_roc:e}, pr off by {d_ap:e}"))?;
        worst = worst.max(d_roc).max(d_ap);
        done += 1;
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {}", secs(elapsed)))?;
    Ok(format!("1000 instances, worst deviation {worst:.1e}, {}", secs(elapsed)))
}

// ------------------------------------------------------------------ A3

fn noise(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-0.3f32..0.3)).collect()
}

fn traced_forward(model: &Model, x: &[f32]) -> Result<(Vec<f32>, Trace), String> {
    let input = model.prepare(&[x]).map_err(|e| e.to_string())?;
    let mut ctx = Ctx::eval().with_trace();
    let y = no_grad(|| model.forward(&input, &mut ctx)).map_err(|e| e.to_string())?;
    if y.shape() != [1, 50] {
        return Err(format!("{} emits {:?}", model.config.arch, y.shape()));
    }
    Ok((y.to_vec(), ctx.take_trace()))
}

fn extent(trace: &[(String, Vec<usize>)], stage: &str, axis: usize) -> Result<usize, String> {
    trace.iter().find(|(n, _)| n == stage).map(|(_, s)| s[axis]).ok_or_else(|| format!("no stage {stage}"))
}

fn a3_shapes() -> Outcome {
    for &arch in Arch::ALL.iter() {
        let c = ModelConfig::new(arch);
        let model = Model::build(&c, 1).map_err(|e| e.to_string())?;
        let (logits, trace) = traced_forward(&model, &noise(c.input_length, 3))?;
        ensure(logits.iter().all(|v| v.is_finite()), || format!("{arch}: non-finite logits"))?;
        match arch {
            Arch::Fcn => {
                let freq = (0..4).map(|i| extent(&trace, &format!("block{i}"), 2)).collect::<Result<Vec<_>, _>>()?;
                ensure(extent(&trace, "input", 1)? == 96, || "fcn input is not 96 bands".into())?;
                ensure(freq == [48, 12, 4, 1], || format!("fcn frequency extents {freq:?}"))?;
            }
            Arch::SampleLevel | Arch::SampleLevelSe => {
                ensure(c.input_length == 59049, || format!("{arch} input {}", c.input_length))?;
                let time = (0..10).map(|i| extent(&trace, &format!("block{i}"), 2)).collect::<Result<Vec<_>, _>>()?;
                ensure(time.last() == Some(&1), || format!("{arch} temporal extents {time:?}"))?;
            }
            _ => {}
        }
    }
    Ok("9 full-size configs emit 50 finite logits; fcn bands 96->48->12->4->1; sample-level 59049->1".into())
}

// ------------------------------------------------------------------ A4

struct Target {
    config: ModelConfig,
    max_epochs: usize,
    threshold: f64,
    time_limit: Option<Duration>,
}

/// Adam starts at 1e-3 rather than the 1e-4 default; at 1e-4 the
/// full-width sample-level network plateaus below 0.95 before its
/// schedule runs out.
const ACCEPTANCE_LR: f32 = 1e-3;

fn targets() -> Vec<Target> {
    let full = |arch, max_epochs| Target {
        config: ModelConfig::new(arch),
        max_epochs,
        threshold: 0.95,
        time_limit: Some(Duration::from_secs(15 * 60)),
    };
    let reduced = |arch, max_epochs| Target {
        config: ModelConfig::reduced(arch),
        max_epochs,
        threshold: 0.85,
        time_limit: None,
    };
    vec![
        full(Arch::ShortChunk, 40),
        full(Arch::SampleLevel, 60),
        reduced(Arch::Fcn, 30),
        reduced(Arch::Musicnn, 30),
        reduced(Arch::Crnn, 100),
        reduced(Arch::SelfAttention, 100),
        reduced(Arch::HarmonicCnn, 100),
        reduced(Arch::ShortChunkRes, 30),
        reduced(Arch::SampleLevelSe, 30),
    ]
}

fn train_and_test(target: &Target, manifest: &Manifest, out: &Path) -> Result<(Model, EvalReport, Duration, usize), String> {
    let t0 = Instant::now();
    let model = Model::build(&target.config, 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { max_epochs: target.max_epochs, adam_lr: ACCEPTANCE_LR, seed: 0, ..Default::default() };
    let run = train(model, manifest, &cfg, out).map_err(|e| e.to_string())?;
    let report = evaluate(&run.model, manifest, Split::Test, None, 0).map_err(|e| e.to_string())?;
    Ok((run.model, report, t0.elapsed(), run.history.len()))
}

fn a4_training(manifest: &Manifest, work: &Path, trained: &mut Option<Model>) -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for target in targets() {
        let id = target.config.model_id();
        let scale = if target.time_limit.is_some() { "full" } else { "reduced" };
        match train_and_test(&target, manifest, &work.join(&id)) {
            Ok((model, report, elapsed, epochs)) => {
                let roc = report.macro_roc_auc.unwrap_or(f64::NAN);
                let tags = report.evaluated_tags().count();
                let line = format!("{id} ({scale}) roc {roc:.4} over {tags} tags, {epochs} epochs, {}", secs(elapsed));
                eprintln!("  A4 {line}");
                let slow = target.time_limit.is_some_and(|limit| elapsed >= limit);
                if roc.is_nan() || roc < target.threshold || tags != 8 || slow {
                    failures.push(format!("{line} (needs >= {})", target.threshold));
                }
                if target.config.arch == Arch::ShortChunk {
                    *trained = Some(model);
                }
                lines.push(format!("{id} {roc:.3}"));
            }
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(lines.join(", "))
}

// ------------------------------------------------------------------ A5

fn a5_robustness(manifest: &Manifest, model: Option<&Model>) -> Outcome {
    let model = model.ok_or("no trained short_chunk model from A4")?;
    let eval = |d: Deformation| -> Result<EvalReport, String> {
        evaluate(model, manifest, Split::Test, Some(&d), 0).map_err(|e| e.to_string())
    };
    let clean = eval(Deformation::None)?;
    let mild = eval(Deformation::WhiteNoise(0.1))?;
    let loud = eval(Deformation::WhiteNoise(0.4))?;
    let get = |r: &EvalReport, roc: bool| if roc { r.macro_roc_auc } else { r.macro_pr_auc }.unwrap_or(f64::NAN);
    ensure(get(&loud, false) < get(&mild, false), || {
        format!("noise 0.4 PR {:.4} not below noise 0.1 PR {:.4}", get(&loud, false), get(&mild, false))
    })?;
    let noise_drop = get(&clean, true) - get(&loud, true);
    let mut drc = Vec::new();
    for preset in [CompressorPreset::music_standard(), CompressorPreset::speech()] {
        let r = eval(Deformation::Drc(preset))?;
        let drop = get(&clean, true) - get(&r, true);
        ensure(drop < noise_drop, || format!("{} drops ROC by {drop:.4}, noise 0.4 by {noise_drop:.4}", r.deformation))?;
        drc.push(format!("{} {drop:+.4}", r.deformation));
    }
    Ok(format!(
        "PR noise 0.1 {:.4} > noise 0.4 {:.4}; ROC drop noise 0.4 {noise_drop:+.4} vs {}",
        get(&mild, false),
        get(&loud, false),
        drc.join(", ")
    ))
}

// ------------------------------------------------------------------ A6

fn a6_deformations() -> Outcome {
    const SR: u32 = 16000;
    const WIN: usize = 8192;
    let x = AudioClip::new(sine(440.0, SR, 2 * SR as usize, 0.5), SR, "a6").map_err(|e| e.to_string())?;
    let mut found = Vec::new();
    for (n, target) in [(1, 440.0 * 2f64.powf(1.0 / 12.0)), (-1, 440.0 * 2f64.powf(-1.0 / 12.0))] {
        let y = pitch_shift(&x, n).map_err(|e| e.to_string())?;
        ensure(y.len() == x.len(), || format!("pitch {n:+} changed length to {}", y.len()))?;
        let start = (y.len() - WIN) / 2;
        let k = dft_peak_bin(&y.samples()[start..start + WIN], 1, WIN / 2);
        let expect = (target * WIN as f64 / SR as f64).round() as i64;
        ensure((k as i64 - expect).abs() <= 1, || format!("pitch {n:+} peak at {:.2} Hz", bin_hz(k, WIN, SR)))?;
        found.push(format!("{:.1} Hz", bin_hz(k, WIN, SR)));
    }
    for gamma in [2f64.sqrt(), 2f64.powf(-0.5)] {
        for len in [1000usize, 4099, 16000, 48000] {
            let clip = AudioClip::new(noise(len, len as u64), SR, "s").map_err(|e| e.to_string())?;
            let got = time_stretch(&clip, gamma).map_err(|e| e.to_string())?.len();
            let expect = (len as f64 / gamma).round() as usize;
            ensure(got == expect, || format!("stretch {gamma:.4} of {len}: {got} samples, expected {expect}"))?;
        }
    }
    Ok(format!("pitch +1/-1 peaks at {}; stretch lengths exact for 2^(+-1/2)", found.join(" / ")))
}

// ------------------------------------------------------------------ A7

fn cli(args: &[&str]) -> i32 {
    tagbench_cli::run(std::iter::once("tagbench").chain(args.iter().copied()))
}

fn a7_baselines(work: &Path) -> Outcome {
    let out = work.join("baselines");
    let code = cli(&["eval", "--baseline-table", "--out", out.to_str().unwrap()]);
    ensure(code == 0, || format!("eval --baseline-table exited {code}"))?;
    let text = std::fs::read_to_string(out.join("baseline_table.tsv")).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("no column {name}"));
    let (model, metric, measured, mtat) = (col("model")?, col("metric")?, col("measured")?, col("published_mtat")?);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    ensure(rows.iter().all(|r| r[measured] == "NA"), || "published values leaked into the measured column".into())?;
    for (id, roc, pr) in [("harmonic_cnn", "0.9127", "0.4611"), ("short_chunk_res", "0.9129", "0.4614")] {
        for (m, want) in [("roc_auc", roc), ("pr_auc", pr)] {
            let got = rows.iter().find(|r| r[model] == id && r[metric] == m).map(|r| r[mtat]);
            ensure(got == Some(want), || format!("{id} {m} published_mtat {got:?}, expected {want}"))?;
        }
    }
    Ok(format!("{} reference rows; harmonic_cnn 0.9127/0.4611, short_chunk_res 0.9129/0.4614", rows.len()))
}

// ------------------------------------------------------------------ A8

fn a8_determinism(manifest_path: &Path, work: &Path) -> Outcome {
    let manifest = manifest_path.to_str().unwrap();
    let run = |tag: &str| -> Result<(), String> {
        let train_dir = work.join(format!("a8_{tag}_train"));
        let eval_dir = work.join(format!("a8_{tag}_eval"));
        let (t, e) = (train_dir.to_str().unwrap(), eval_dir.to_str().unwrap());
        let args = ["train", "--arch", "short_chunk", "--reduced", "--manifest", manifest, "--out", t, "--epochs", "3", "--seed", "11"];
        ensure(cli(&args) == 0, || format!("run {tag}: train failed"))?;
        let ckpt = train_dir.join("best.ckpt");
        let args = [
            "eval", "--checkpoint", ckpt.to_str().unwrap(), "--manifest", manifest, "--out", e,
            "--deform", "none", "--deform", "noise:0.4", "--deform", "pitch:1", "--seed", "11",
        ];
        ensure(cli(&args) == 0, || format!("run {tag}: eval failed"))
    };
    run("a")?;
    run("b")?;
    let mut compared = 0;
    for stage in ["train", "eval"] {
        let dir_a = work.join(format!("a8_a_{stage}"));
        let mut names: Vec<_> = std::fs::read_dir(&dir_a)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .filter(|n| n != "config.json")
            .collect();
        names.sort();
        for name in names {
            let a = std::fs::read(dir_a.join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(work.join(format!("a8_b_{stage}")).join(&name)).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{stage}/{} differs between runs", name.to_string_lossy()))?;
            compared += 1;
        }
    }
    ensure(compared >= 9, || format!("only {compared} files compared"))?;
    Ok(format!("{compared} output files bitwise identical across reruns (history, checkpoint, reports)"))
}

// ------------------------------------------------------------------

fn main() {
    let selected: Option<Vec<String>> =
        std::env::var("TAGBENCH_ACCEPTANCE").ok().map(|s| s.split(',').map(|p| p.trim().to_uppercase()).collect());
    let wanted = |id: &str| selected.as_ref().is_none_or(|s| s.iter().any(|x| x == id));

    let work = tempfile::tempdir().expect("temp dir");
    let needs_data = ["A4", "A5", "A8"].iter().any(|id| wanted(id));
    let manifest = needs_data.then(|| {
        generate_synthetic(&SyntheticSpec::default(), &work.path().join("synthetic")).expect("synthetic dataset")
    });
    let manifest_path = work.path().join("synthetic").join("manifest.tsv");
    let mut trained: Option<Model> = None;

    let mut results: Vec<(&str, &str, Outcome)> = Vec::new();
    let mut record = |id: &'static str, title: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        let mark = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = outcome.as_ref().unwrap_or_else(|e| e);
        println!("{id} {mark} {title}: {detail} [{}]", secs(t0.elapsed()));
        results.push((id, title, outcome));
    };

    record("A1", "gradient checks", &mut a1_gradients);
    record("A2", "metric oracles", &mut a2_metrics);
    record("A3", "model shapes", &mut a3_shapes);
    record("A4", "end-to-end training", &mut || a4_training(manifest.as_ref().unwrap(), work.path(), &mut trained));
    record("A5", "robustness ordering", &mut || a5_robustness(manifest.as_ref().unwrap(), trained.as_ref()));
    record("A6", "deformation properties", &mut a6_deformations);
    record("A7", "published baselines", &mut || a7_baselines(work.path()));
    record("A8", "determinism", &mut || a8_determinism(&manifest_path, work.path()));

    let failed: Vec<&str> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
