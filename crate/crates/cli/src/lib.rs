//! The `tagbench` command line: training, evaluation, robustness sweeps,
//! audio perturbation, report merging and synthetic data.
//!
//! Exit codes: 0 success, 2 configuration errors (bad flags, unknown
//! deformation specs, invalid configs, schema mismatches, a locked output
//! directory), 3 data errors (missing or malformed files, empty splits).

pub mod config;

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tagbench_core::audio::{load_wav, write_wav};
use tagbench_core::datasets::{generate_synthetic, load_manifest, save_manifest, Manifest, Split, SyntheticSpec};
use tagbench_core::deform::{parse_deformation, robustness_grid, Deformation};
use tagbench_core::models::{receptive_field, Arch, InputKind, Model, ModelConfig};
use tagbench_core::report::{self, EvalReport};
use tagbench_core::train::{self, history_tsv, load_checkpoint, report_from_scores, train_observed};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] tagbench_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use tagbench_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidConfig(_)
                | E::UnknownDeformation(_)
                | E::ModeMismatch(_)
                | E::Schema(_)
                | E::InvalidBandCount { .. }
                | E::Json(_) => 2,
                _ => 3,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tagbench", version, about = "Music auto-tagging benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a manifest's train split, selecting by validation loss.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split, optionally under deformations.
    Eval(EvalArgs),
    /// Write deformed copies of WAV files or of a manifest's test clips.
    Perturb(PerturbArgs),
    /// Merge evaluation reports into comparison tables.
    Report(ReportArgs),
    /// List the architectures with their input setups.
    Models(ModelsArgs),
    /// Generate the synthetic tagging dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<Arch>,
    /// Use the narrow-width variant of the architecture.
    #[arg(long)]
    pub reduced: bool,
    /// Mel band count (e.g. 128 for the fcn/musicnn/crnn variants).
    #[arg(long)]
    pub mels: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial (Adam) learning rate.
    #[arg(long)]
    pub lr: Option<f32>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// train, valid or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Deformation spec, repeatable: none, pitch:-1, stretch:1.4142,
    /// drc:speech, noise:0.4.
    #[arg(long = "deform")]
    pub deformations: Vec<String>,
    /// Evaluate the identity plus all eight suite deformations.
    #[arg(long)]
    pub robustness: bool,
    /// Also write published reference results beside the measured ones.
    #[arg(long)]
    pub baseline_table: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score every clip with its own labels instead of a model.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long = "deform")]
    pub deformation: String,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Deform clips of this manifest instead of loose WAV files.
    #[arg(long, conflicts_with = "inputs")]
    pub manifest: Option<PathBuf>,
    /// Manifest split to deform; only `test` is allowed.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Restrict manifest mode to these clip ids (repeatable).
    #[arg(long = "clip")]
    pub clips: Vec<String>,
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    /// Evaluation report JSON files.
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelsArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    /// Generator spec JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_clips: Option<usize>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Report(a) => cmd_report(a),
        Command::Models(a) => cmd_models(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
struct OutputLock(PathBuf);

impl OutputLock {
    const NAME: &'static str = ".tagbench.lock";

    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(Self::NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "{} is in use by another tagbench process (remove {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Data(format!("cannot lock {}: {e}", dir.display()))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Config(format!("missing {flag}")))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn open_manifest(path: &Path) -> Result<Manifest> {
    Ok(load_manifest(path)?)
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse::<Split>().map_err(|_| CliError::Config(format!("unknown split {s:?}")))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.command = "train".into();
    if let Some(arch) = a.arch {
        cfg.arch = Some(arch);
        cfg.model = None;
    }
    cfg.reduced |= a.reduced;
    cfg.n_mels = a.mels.or(cfg.n_mels);
    cfg.manifest = a.manifest.or(cfg.manifest);
    cfg.output_dir = a.out.or(cfg.output_dir);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.train.max_epochs = a.epochs.unwrap_or(cfg.train.max_epochs);
    cfg.train.batch_size = a.batch_size.unwrap_or(cfg.train.batch_size);
    cfg.train.adam_lr = a.lr.unwrap_or(cfg.train.adam_lr);
    cfg.train.seed = cfg.seed;
    cfg.train.validate()?;

    let model_cfg = cfg.resolve_model()?;
    cfg.model = Some(model_cfg.clone());
    let manifest_path = require(cfg.manifest.clone(), "--manifest")?;
    let out = require(cfg.output_dir.clone(), "--out")?;
    let _lock = OutputLock::acquire(&out)?;
    let manifest = open_manifest(&manifest_path)?;
    write_file(&out.join("config.json"), &cfg.to_json())?;

    let model = Model::build(&model_cfg, cfg.seed)?;
    eprintln!(
        "training {} ({} parameters) on {}: {} train / {} valid clips",
        model_cfg.model_id(),
        model.param_count(),
        manifest.dataset_id,
        manifest.count(Split::Train),
        manifest.count(Split::Valid)
    );
    let run = train_observed(model, &manifest, &cfg.train, &out, |h| {
        eprintln!(
            "epoch {:>3}  train {:.5}  val {:.5}  {} lr {:e}",
            h.epoch,
            h.train_loss,
            h.val_loss,
            h.phase.as_str(),
            h.lr
        )
    })?;
    write_file(&out.join("history.tsv"), &history_tsv(&run.history))?;
    println!(
        "best epoch {} of {} ({}), checkpoint {}",
        run.best_epoch,
        run.history.len(),
        run.mode.as_str(),
        run.best_checkpoint.display()
    );
    Ok(())
}

/// File-name form of a deformation id.
fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

fn oracle_report(manifest: &Manifest, split: Split, deformation: &Deformation) -> Result<EvalReport> {
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(tagbench_core::Error::EmptySplit(split.as_str().into()).into());
    }
    let scores: Vec<Vec<f64>> = entries.iter().map(|e| e.tags.iter().map(|&b| b as u8 as f64).collect()).collect();
    Ok(report_from_scores("oracle", manifest, split, deformation, &entries, &scores)?)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.command = "eval".into();
    cfg.checkpoint = a.checkpoint.or(cfg.checkpoint);
    cfg.manifest = a.manifest.or(cfg.manifest);
    cfg.output_dir = a.out.or(cfg.output_dir);
    cfg.split = a.split.or(cfg.split);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if !a.deformations.is_empty() {
        cfg.deformations = a.deformations;
    }
    let deformations: Vec<Deformation> = if a.robustness {
        robustness_grid()
    } else if cfg.deformations.is_empty() {
        vec![Deformation::None]
    } else {
        cfg.deformations.iter().map(|s| parse_deformation(s)).collect::<tagbench_core::Result<_>>()?
    };
    cfg.deformations = deformations.iter().map(|d| d.to_string()).collect();
    let split = parse_split(cfg.split.get_or_insert_with(|| "test".into()))?;
    let out = require(cfg.output_dir.clone(), "--out")?;

    let measuring = a.oracle || cfg.checkpoint.is_some();
    if !measuring && !a.baseline_table {
        return Err(CliError::Config("give --checkpoint, --oracle or --baseline-table".into()));
    }
    let _lock = OutputLock::acquire(&out)?;
    let mut reports = Vec::new();
    if measuring {
        let manifest = open_manifest(&require(cfg.manifest.clone(), "--manifest")?)?;
        let model = match (&cfg.checkpoint, a.oracle) {
            (_, true) => None,
            (Some(path), false) => Some(load_checkpoint(path)?.0),
            (None, false) => unreachable!(),
        };
        write_file(&out.join("config.json"), &cfg.to_json())?;
        for d in &deformations {
            let r = match &model {
                Some(m) => train::evaluate(m, &manifest, split, Some(d), cfg.seed)?,
                None => oracle_report(&manifest, split, d)?,
            };
            let stem = format!("report_{}_{}", slug(&r.model), slug(&r.deformation));
            write_file(&out.join(format!("{stem}.json")), &r.to_json())?;
            write_file(&out.join(format!("{stem}.tsv")), &r.to_tsv())?;
            println!(
                "{}\t{}\tmacro_roc_auc {}\tmacro_pr_auc {}",
                r.model,
                r.deformation,
                r.macro_roc_auc.map_or("NA".into(), |v| format!("{v:.4}")),
                r.macro_pr_auc.map_or("NA".into(), |v| format!("{v:.4}"))
            );
            reports.push(r);
        }
    } else {
        write_file(&out.join("config.json"), &cfg.to_json())?;
    }
    if a.robustness {
        write_file(&out.join("robustness.tsv"), &report::robustness_table(&reports)?)?;
    }
    if a.baseline_table {
        write_file(&out.join("baseline_table.tsv"), &report::baseline_table(&reports))?;
    }
    Ok(())
}

fn cmd_perturb(a: PerturbArgs) -> Result<()> {
    let deformation = parse_deformation(&a.deformation)?;
    let split = parse_split(&a.split)?;
    if a.manifest.is_none() && a.inputs.is_empty() {
        return Err(CliError::Config("give input WAV files or --manifest".into()));
    }
    if split != Split::Test {
        return Err(CliError::Config(format!(
            "deformations apply to the test split only, not {}",
            split.as_str()
        )));
    }
    let _lock = OutputLock::acquire(&a.out)?;
    let cfg = RunConfig {
        command: "perturb".into(),
        manifest: a.manifest.clone(),
        split: Some(a.split.clone()),
        seed: a.seed,
        output_dir: Some(a.out.clone()),
        deformations: vec![deformation.to_string()],
        ..Default::default()
    };
    write_file(&a.out.join("config.json"), &cfg.to_json())?;

    if let Some(path) = &a.manifest {
        let manifest = open_manifest(path)?;
        for id in &a.clips {
            match manifest.get(id) {
                None => return Err(CliError::Data(format!("clip {id} is not in the manifest"))),
                Some(e) if e.split != Split::Test => {
                    return Err(CliError::Config(format!(
                        "refusing to deform {id}: it belongs to the {} split",
                        e.split.as_str()
                    )))
                }
                Some(_) => {}
            }
        }
        let mut out_manifest = Manifest {
            dataset_id: format!("{}_{}", manifest.dataset_id, slug(&deformation.to_string())),
            tag_vocab: manifest.tag_vocab.clone(),
            entries: Vec::new(),
            base_dir: a.out.clone(),
        };
        std::fs::create_dir_all(a.out.join("audio")).map_err(|e| CliError::Data(e.to_string()))?;
        for e in manifest.split(Split::Test) {
            if !a.clips.is_empty() && !a.clips.contains(&e.clip_id) {
                continue;
            }
            let clip = deformation.apply(&manifest.load_audio(e)?, a.seed)?;
            let rel = PathBuf::from("audio").join(format!("{}.wav", slug(&e.clip_id)));
            write_wav(&clip, &a.out.join(&rel))?;
            out_manifest.entries.push(tagbench_core::datasets::ManifestEntry { path: rel, ..e.clone() });
        }
        save_manifest(&out_manifest, &a.out.join("manifest.tsv"))?;
        println!("{} clips deformed with {deformation}", out_manifest.entries.len());
    } else {
        for input in &a.inputs {
            let clip = load_wav(input)?;
            let name = input
                .file_name()
                .ok_or_else(|| CliError::Config(format!("{} is not a file", input.display())))?;
            let target = a.out.join(name);
            if target == *input {
                return Err(CliError::Config(format!("refusing to overwrite input {}", input.display())));
            }
            let out = deformation.apply(&clip, a.seed)?;
            write_wav(&out, &target)?;
            println!("{} -> {} ({} samples)", input.display(), target.display(), out.len());
        }
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    if a.reports.is_empty() {
        return Err(CliError::Config("no report files given".into()));
    }
    let mut reports = Vec::new();
    for path in &a.reports {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        reports.push(EvalReport::from_json(&text)?);
    }
    let wide = report::comparison_tsv(&reports)?;
    let long = report::long_csv(&reports)?;
    let _lock = OutputLock::acquire(&a.out)?;
    let cfg = RunConfig { command: "report".into(), output_dir: Some(a.out.clone()), ..Default::default() };
    write_file(&a.out.join("config.json"), &cfg.to_json())?;
    write_file(&a.out.join("comparison.tsv"), &wide)?;
    write_file(&a.out.join("long.csv"), &long)?;
    print!("{wide}");
    Ok(())
}

#[derive(serde::Serialize)]
struct ModelRow {
    arch: Arch,
    input_samples: usize,
    input_seconds: f64,
    input: &'static str,
    bands: usize,
    training: &'static str,
    parameters: usize,
}

fn model_rows() -> Result<Vec<ModelRow>> {
    Arch::ALL
        .iter()
        .map(|&arch| {
            let c = ModelConfig::new(arch);
            Ok(ModelRow {
                arch,
                input_samples: c.input_length,
                input_seconds: receptive_field(&c).time_seconds,
                input: match arch.input_kind() {
                    InputKind::Waveform => "waveform",
                    InputKind::MelSpectrogram => "mel",
                    InputKind::PowerSpectrogram => "stft_power",
                },
                bands: c.n_mels,
                training: if arch.song_level() { "song_level" } else { "chunk_level" },
                parameters: Model::build(&c, 0)?.param_count(),
            })
        })
        .collect()
}

fn cmd_models(a: ModelsArgs) -> Result<()> {
    let rows = model_rows()?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize"));
        return Ok(());
    }
    println!("arch\tinput_samples\tinput_seconds\tinput\tbands\ttraining\tparameters");
    for r in rows {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.arch, r.input_samples, r.input_seconds, r.input, r.bands, r.training, r.parameters
        );
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => SyntheticSpec::from_json(
            &std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        )?,
        None => SyntheticSpec::default(),
    };
    spec.n_clips = a.n_clips.unwrap_or(spec.n_clips);
    spec.clip_seconds = a.seconds.unwrap_or(spec.clip_seconds);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.validate()?;
    let _lock = OutputLock::acquire(&a.out)?;
    let manifest = generate_synthetic(&spec, &a.out)?;
    write_file(&a.out.join("synth.json"), &(serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n"))?;
    println!(
        "{} clips ({} train / {} valid / {} test) in {}",
        manifest.entries.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Valid),
        manifest.count(Split::Test),
        a.out.join("manifest.tsv").display()
    );
    Ok(())
}
