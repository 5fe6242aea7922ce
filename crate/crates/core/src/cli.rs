//! Command-line front end. Each subcommand runs one pipeline step and leaves a
//! run manifest next to its output.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical abort.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use candle_core::DType;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, SwapPart};
use crate::checkpoint::Checkpoint;
use crate::gridworld::{
    generate_dataset, load_sequence, render_scene, single_agent_world, DatasetManifest, SimConfig, Split,
    MANIFEST_FILE,
};
use crate::hashing::{file_hash, json_hash};
use crate::latent_predict::{
    copy_last_predictions, encode_dataset, predict_ogms, train_predictor, LatentManifest, LatentSource,
    PredictOptions, Predictor, PredictorConfig, LATENT_MANIFEST_FILE,
};
use crate::metrics::{evaluate, load_predictions, summary_table, EvalReport};
use crate::models::{sample_prior as prior_latents, LatentPair, ModelConfig, Stage1Model};
use crate::ogm::{write_sequence, Ogm, ScenarioSequence, Thresholds};
use crate::repr_train::{load_frames, train_from_dataset, ReprTrainConfig, LOG_FILE, MODEL_FILE};
use crate::rng::{stream_rng, streams};
use crate::{html_report, Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "latent-ogm", version, about = "Occupancy grid prediction in a learned latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset of OGM sequences.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the stage-1 encoder and generator.
    TrainRepr {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path; the log and intermediate checkpoints go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every frame of a dataset with a frozen encoder.
    Encode {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store one posterior sample per frame instead of the mean.
        #[arg(long)]
        sample: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the latent predictor on an encoded dataset.
    TrainPred {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        latents: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict future grids for every window of a dataset split.
    Predict {
        #[arg(long)]
        encoder: PathBuf,
        /// Generator checkpoint, when it differs from the encoder's.
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        predictor: PathBuf,
        #[command(flatten)]
        windows: WindowArgs,
    },
    /// Copy-last-frame baseline predictions in the same layout as `predict`.
    CopyLast {
        #[command(flatten)]
        windows: WindowArgs,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Further prediction directories to list in the console summary.
        #[arg(long)]
        compare: Vec<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Latent-space experiments.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Static HTML summary of a directory of runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a default configuration as JSON.
    Config {
        kind: ConfigKind,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        /// Stage-1 checkpoint whose latent dims the predictor config should use.
        #[arg(long)]
        encoder: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct WindowArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Predicted frames per window; defaults to the dataset horizon.
    #[arg(long)]
    rollout: Option<usize>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Spacing of window starts; defaults to history + predicted frames.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args, Debug, Clone, Copy)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 0.25)]
    free_threshold: f32,
    #[arg(long, default_value_t = 0.75)]
    occupied_threshold: f32,
}

impl ThresholdArgs {
    fn get(self) -> Result<Thresholds> {
        Thresholds::new(self.free_threshold, self.occupied_threshold)
    }
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Decode latents drawn from the prior.
    Sample {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Decode with the style or content latent taken from a second frame.
    Swap {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        which: WhichArg,
        /// Where the swapped-in latent comes from.
        #[arg(long, value_enum, default_value_t = DonorArg::Data)]
        donor: DonorArg,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 8)]
        show: usize,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Linear interpolation between two frames of one scene.
    Interpolate {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Scene id; defaults to the first scene of the split.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Render a fresh scene with one agent passing a parked ego instead.
        #[arg(long)]
        single_agent: bool,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 5)]
        gap: usize,
        #[arg(long, default_value_t = 8)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ConfigKind {
    Sim,
    Repr,
    Pred,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Preset {
    Default,
    /// Sim: the 10-scene smoke dataset. Repr: settings tuned for a CPU run on 64×64 grids.
    Desk,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum WhichArg {
    Style,
    Content,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DonorArg {
    Data,
    Prior,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// SHA-256 of input files, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of produced files, keyed by path.
    pub outputs: BTreeMap<String, String>,
}

struct Run {
    command: &'static str,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, argv: &[String]) -> Self {
        Run {
            command,
            argv: argv.to_vec(),
            config: serde_json::Value::Null,
            seed: None,
            inputs: Vec::new(),
        }
    }

    fn config<T: Serialize>(mut self, c: &T) -> Result<Self> {
        self.config = serde_json::to_value(c)?;
        Ok(self)
    }

    fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn input(mut self, p: impl Into<PathBuf>) -> Self {
        self.inputs.push(p.into());
        self
    }

    /// Writes the manifest to `manifest_path`, hashing `outputs`.
    fn finish(self, manifest_path: &Path, outputs: &[PathBuf]) -> Result<()> {
        let hash_all = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths
                .iter()
                .filter(|p| p.is_file())
                .map(|p| Ok((p.display().to_string(), file_hash(p)?)))
                .collect()
        };
        let manifest = RunManifest {
            version: 1,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            argv: self.argv,
            config_hash: json_hash(&self.config),
            config: self.config,
            seed: self.seed,
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(outputs)?,
        };
        write_json(manifest_path, &manifest)
    }

    /// Manifest inside an output directory, hashing every file in it.
    fn finish_dir(self, dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        let manifest_path = dir.join(RUN_MANIFEST_FILE);
        files.retain(|p| p != &manifest_path);
        self.finish(&manifest_path, &files)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// `<file>.run_manifest.json` beside a single-file output.
fn sibling_manifest(out: &Path) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{name}.{RUN_MANIFEST_FILE}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a JSON config whose keys override `defaults`. Unknown keys and
/// wrongly typed values are configuration errors.
pub fn load_config<T: Serialize + DeserializeOwned>(path: Option<&Path>, defaults: T) -> Result<T> {
    let Some(path) = path else { return Ok(defaults) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let overlay: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !overlay.is_object() {
        return Err(Error::Config(format!("{}: expected a JSON object", path.display())));
    }
    let mut value = serde_json::to_value(defaults)?;
    merge(&mut value, overlay);
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } | Error::Tensor(_) => EXIT_NUMERICAL,
        Error::Config(_) | Error::InvalidInput(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli.command, &argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_stage1(encoder: &Path, generator: Option<&Path>) -> Result<Stage1Model> {
    let (mut model, _) = Stage1Model::load(encoder, DType::F32)?;
    if let Some(g) = generator {
        model.use_generator_from(&Checkpoint::load(g)?)?;
    }
    Ok(model)
}

/// Trainers write a fixed file name into a directory; move it to `out` when asked for another name.
fn place(dir: &Path, produced: &str, out: &Path) -> Result<PathBuf> {
    let from = dir.join(produced);
    if from != out {
        std::fs::rename(&from, out).map_err(|e| Error::io(out, e))?;
    }
    Ok(out.to_path_buf())
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(8)]
}

fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Simulate { config, seed, out } => {
            let cfg = load_config(config.as_deref(), SimConfig::default())?;
            let manifest = generate_dataset(&cfg, seed, &out)?;
            eprintln!("wrote {} scenes to {}", manifest.sequences.len(), out.display());
            let mut run = Run::new("simulate", argv).config(&cfg)?.seed(seed);
            if let Some(c) = config {
                run = run.input(c);
            }
            run.finish_dir(&out)
        }
        Command::TrainRepr { config, data, out } => {
            let cfg = load_config(config.as_deref(), ReprTrainConfig::default())?;
            let dir = parent_dir(&out);
            let every = (cfg.steps / 20).max(1);
            let outcome = train_from_dataset(&data, &cfg, Some(&dir), &mut |row| {
                if row.step % every == 0 {
                    eprintln!("step {:>6}  recon {:.5}  kl {:.3}  total {:.5}", row.step, row.recon, row.kl, row.total);
                }
            })?;
            let ckpt = place(&dir, MODEL_FILE, &out)?;
            eprintln!("representation hash {}", outcome.model.representation_hash()?);
            let outputs = vec![ckpt.clone(), dir.join(LOG_FILE), dir.join("repr_config.json")];
            Run::new("train-repr", argv)
                .config(&cfg)?
                .seed(cfg.seed)
                .input(data.join(MANIFEST_FILE))
                .finish(&sibling_manifest(&ckpt), &outputs)
        }
        Command::Encode { encoder, data, out, sample, seed } => {
            let model = load_stage1(&encoder, None)?;
            let source = if sample { LatentSource::Sample } else { LatentSource::Mean };
            let manifest = encode_dataset(&data, &model, source, seed, &out)?;
            eprintln!("encoded {} sequences to {}", manifest.sequences.len(), out.display());
            Run::new("encode", argv)
                .config(&serde_json::json!({ "source": source }))?
                .seed(seed)
                .input(&encoder)
                .input(data.join(MANIFEST_FILE))
                .finish_dir(&out)
        }
        Command::TrainPred { config, latents, out } => {
            let manifest = LatentManifest::load(&latents)?;
            let cfg = load_config(config.as_deref(), pred_defaults(&manifest))?;
            let dir = parent_dir(&out);
            let outcome = train_predictor(&latents, &cfg, Some(&dir), &mut |row| {
                eprintln!("epoch {:>3}  train {:.5}  val {:.5}", row.epoch, row.train_loss, row.val_loss);
            })?;
            let ckpt = outcome
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("predictor training wrote no checkpoint".into()))?;
            let ckpt = place(&parent_dir(ckpt), &ckpt.file_name().unwrap().to_string_lossy(), &out)?;
            eprintln!(
                "best epoch {}  val {:.5}  constant-latent baseline {:.5}",
                outcome.best_epoch, outcome.best_val_loss, outcome.baseline_val_loss
            );
            let outputs = vec![ckpt.clone(), dir.join("pred_log.csv")];
            Run::new("train-pred", argv)
                .config(&cfg)?
                .seed(cfg.seed)
                .input(latents.join(LATENT_MANIFEST_FILE))
                .finish(&sibling_manifest(&ckpt), &outputs)
        }
        Command::Predict { encoder, generator, predictor, windows } => {
            let model = load_stage1(&encoder, generator.as_deref())?;
            let (pred, meta) = Predictor::load(&predictor)?;
            let options = window_options(&windows)?;
            let manifest = predict_ogms(&model, &pred, &meta.stage1_hash, &windows.data, options, &windows.out)?;
            eprintln!("predicted {} windows into {}", manifest.entries.len(), windows.out.display());
            let mut run = Run::new("predict", argv)
                .config(&options)?
                .input(&encoder)
                .input(&predictor)
                .input(windows.data.join(MANIFEST_FILE));
            if let Some(g) = generator {
                run = run.input(g);
            }
            run.finish_dir(&windows.out)
        }
        Command::CopyLast { windows } => {
            let options = window_options(&windows)?;
            let manifest = copy_last_predictions(&windows.data, options, &windows.out)?;
            eprintln!("wrote {} copy-last windows into {}", manifest.entries.len(), windows.out.display());
            Run::new("copy-last", argv)
                .config(&options)?
                .input(windows.data.join(MANIFEST_FILE))
                .finish_dir(&windows.out)
        }
        Command::Evaluate { pred, truth, out, compare, thresholds } => {
            let t = thresholds.get()?;
            let truth_manifest = DatasetManifest::load(&truth)?;
            let score = |dir: &Path| -> Result<EvalReport> {
                evaluate(&load_predictions(dir)?, dir, &truth_manifest, &truth, t)
            };
            let report = score(&pred)?;
            let others = compare.iter().map(|d| score(d)).collect::<Result<Vec<_>>>()?;
            let out_dir = parent_dir(&out);
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            report.save_json(&out)?;
            let csv = out.with_extension("csv");
            report.save_csv(&csv)?;
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let horizon_csv = out.with_file_name(format!("{stem}_horizon.csv"));
            report.save_horizon_csv(&horizon_csv)?;
            let mut all = vec![&report];
            all.extend(others.iter());
            println!("{}", summary_table(&all));
            let mut run = Run::new("evaluate", argv)
                .config(&t)?
                .input(pred.join(crate::metrics::PREDICTIONS_FILE))
                .input(truth.join(MANIFEST_FILE));
            for c in &compare {
                run = run.input(c.join(crate::metrics::PREDICTIONS_FILE));
            }
            run.finish(&sibling_manifest(&out), &[out.clone(), csv, horizon_csv])
        }
        Command::Analyze(a) => analyze(a, argv),
        Command::Report { runs, out } => {
            html_report::write_report(&runs, &out)?;
            eprintln!("wrote {}", out.display());
            Run::new("report", argv).finish(&sibling_manifest(&out), &[out.clone()])
        }
        Command::Config { kind, preset, encoder } => {
            let text = match (kind, preset) {
                (ConfigKind::Sim, Preset::Default) => serde_json::to_string_pretty(&SimConfig::default())?,
                (ConfigKind::Sim, Preset::Desk) => serde_json::to_string_pretty(&SimConfig::smoke())?,
                (ConfigKind::Repr, Preset::Default) => serde_json::to_string_pretty(&ReprTrainConfig::default())?,
                (ConfigKind::Repr, Preset::Desk) => serde_json::to_string_pretty(&ReprTrainConfig::desk())?,
                (ConfigKind::Pred, _) => {
                    let model = match encoder {
                        Some(e) => Stage1Model::load(&e, DType::F32)?.1.model,
                        None => ModelConfig::desk(),
                    };
                    let sim = SimConfig::default();
                    serde_json::to_string_pretty(&PredictorConfig::for_model(&model, sim.history, sim.horizon))?
                }
            };
            println!("{text}");
            Ok(())
        }
    }
}

fn pred_defaults(m: &LatentManifest) -> PredictorConfig {
    let [c, k, _] = m.content_shape;
    let mut model = ModelConfig::desk();
    model.style_dim = m.style_dim;
    model.content_channels = c;
    model.content_size = k;
    PredictorConfig::for_model(&model, m.history, m.horizon)
}

fn window_options(w: &WindowArgs) -> Result<PredictOptions> {
    let manifest = DatasetManifest::load(&w.data)?;
    let mut o = PredictOptions::for_dataset(&manifest, w.split.into());
    if let Some(r) = w.rollout {
        if r == 0 {
            return Err(Error::InvalidInput("--rollout must be at least 1".into()));
        }
        o.steps = r;
        o.stride = manifest.history + r;
    }
    if let Some(s) = w.stride {
        if s == 0 {
            return Err(Error::InvalidInput("--stride must be at least 1".into()));
        }
        o.stride = s;
    }
    Ok(o)
}

fn split_frames(data: &Path, split: Split) -> Result<Vec<Ogm>> {
    let manifest = DatasetManifest::load(data)?;
    let frames = load_frames(data, &manifest, split)?;
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("dataset has no {split:?} frames")));
    }
    Ok(frames)
}

fn analyze(cmd: AnalyzeCommand, argv: &[String]) -> Result<()> {
    match cmd {
        AnalyzeCommand::Sample { generator, n, seed, out, thresholds } => {
            let t = thresholds.get()?;
            let model = load_stage1(&generator, None)?;
            let tag = format!("seed{seed}_{}", short(&model.generator_hash()?));
            let samples = analysis::sample_prior(&model, n, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            analysis::save_montage(&samples, 4, out.join(format!("sample_{tag}.png")))?;
            let spec = model.config().grid;
            let seq = ScenarioSequence::new(spec, samples.clone(), vec![[0.0; 3]; samples.len()], 0, 0)?;
            write_sequence(&seq, out.join(format!("sample_{tag}.ogms")))?;
            let fractions = analysis::class_fractions(&samples, t)?;
            write_json(
                &out.join(format!("sample_{tag}.json")),
                &serde_json::json!({ "n": n, "seed": seed, "class_fractions": fractions }),
            )?;
            Run::new("analyze-sample", argv)
                .config(&serde_json::json!({ "n": n, "thresholds": t }))?
                .seed(seed)
                .input(&generator)
                .finish_dir(&out)
        }
        AnalyzeCommand::Swap { encoder, generator, data, which, donor, pairs, show, split, seed, out, thresholds } => {
            let t = thresholds.get()?;
            let model = load_stage1(&encoder, generator.as_deref())?;
            let frames = split_frames(&data, split.into())?;
            let part = match which {
                WhichArg::Style => SwapPart::Style,
                WhichArg::Content => SwapPart::Content,
            };
            let tag = format!("{}_{:?}_seed{seed}_{}", part_name(part), donor, short(&model.representation_hash()?))
                .to_lowercase();
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

            // Rows of [x_a, donor, reconstruction of x_a, swap].
            let mut rng = stream_rng(seed, streams::SPLIT);
            let mut tiles = Vec::new();
            for _ in 0..show.max(1) {
                use rand::Rng;
                let a = &frames[rng.random_range(0..frames.len())];
                let donor_latent = match donor {
                    DonorArg::Data => analysis::encode_one(&model, &frames[rng.random_range(0..frames.len())])?,
                    DonorArg::Prior => {
                        let z: LatentPair =
                            prior_latents(model.config(), 1, model.dtype(), model.device(), &mut rng)?;
                        z.to_latents()?.remove(0)
                    }
                };
                tiles.push(a.clone());
                tiles.push(analysis::decode_one(&model, &donor_latent)?);
                tiles.push(analysis::reconstruct_one(&model, a)?);
                tiles.push(analysis::swap_with(&model, a, &donor_latent, part)?);
            }
            analysis::save_montage(&tiles, 4, out.join(format!("swap_{tag}.png")))?;
            let stats = match donor {
                DonorArg::Data => Some(analysis::swap_statistics(&model, &frames, pairs, t, seed)?),
                DonorArg::Prior => None,
            };
            if let Some(s) = &stats {
                eprintln!(
                    "content swap closer to donor in {:.0}% of pairs; occupied-count change content {:.1} vs style {:.1}",
                    100.0 * s.content_closer_to_b,
                    s.content_count_change,
                    s.style_count_change
                );
            }
            write_json(&out.join(format!("swap_{tag}.json")), &serde_json::json!({ "stats": stats }))?;
            let mut run = Run::new("analyze-swap", argv)
                .config(&serde_json::json!({ "which": part_name(part), "donor": format!("{donor:?}"), "pairs": pairs, "thresholds": t }))?
                .seed(seed)
                .input(&encoder)
                .input(data.join(MANIFEST_FILE));
            if let Some(g) = generator {
                run = run.input(g);
            }
            run.finish_dir(&out)
        }
        AnalyzeCommand::Interpolate {
            encoder,
            generator,
            data,
            scene,
            split,
            single_agent,
            start,
            gap,
            steps,
            out,
            thresholds,
        } => {
            let t = thresholds.get()?;
            if steps < 2 {
                return Err(Error::InvalidInput("--steps must be at least 2".into()));
            }
            let model = load_stage1(&encoder, generator.as_deref())?;
            let manifest = DatasetManifest::load(&data)?;
            let seq = if single_agent {
                let cfg = &manifest.config;
                let frames = (start + gap + 1).max(cfg.history + cfg.horizon);
                render_scene(cfg, single_agent_world(cfg, 5.0, 6.0)?, frames)?
            } else {
                let split: Split = split.into();
                let entry = match &scene {
                    Some(id) => manifest.sequences.iter().find(|e| &e.id == id),
                    None => manifest.entries(split).next(),
                }
                .ok_or_else(|| Error::MissingSequences(vec![scene.clone().unwrap_or_else(|| format!("{split:?}"))]))?;
                load_sequence(&data, entry)?
            };
            if start + gap >= seq.len() {
                return Err(Error::InvalidInput(format!(
                    "frames {start} and {} do not both exist in a {}-frame scene",
                    start + gap,
                    seq.len()
                )));
            }
            let (a, b) = (&seq.frames()[start], &seq.frames()[start + gap]);
            let frames = analysis::interpolate(&model, a, b, steps)?;
            let stats = analysis::interpolation_stats(&frames, t)?;
            let tag = format!("seed0_{}", short(&model.representation_hash()?));
            let mut tiles = vec![a.clone()];
            tiles.extend(frames.iter().cloned());
            tiles.push(b.clone());
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            analysis::save_montage(&tiles, tiles.len(), out.join(format!("interpolate_{tag}.png")))?;
            write_json(&out.join(format!("interpolate_{tag}.json")), &stats)?;
            eprintln!("centroid columns monotone: {}", stats.monotone_columns);
            let mut run = Run::new("analyze-interpolate", argv)
                .config(&serde_json::json!({
                    "scene": scene, "single_agent": single_agent, "start": start,
                    "gap": gap, "steps": steps, "thresholds": t,
                }))?
                .input(&encoder)
                .input(data.join(MANIFEST_FILE));
            if let Some(g) = generator {
                run = run.input(g);
            }
            run.finish_dir(&out)
        }
    }
}

fn part_name(p: SwapPart) -> &'static str {
    match p {
        SwapPart::Style => "style",
        SwapPart::Content => "content",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(main_with_args(["latent-ogm", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["latent-ogm"]), EXIT_USAGE);
        assert_eq!(main_with_args(["latent-ogm", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::MissingSequences(vec![])), EXIT_DATA);
        assert_eq!(exit_code(&Error::CheckpointMismatch("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::NonFinite { step: 3, what: "loss".into() }), EXIT_NUMERICAL);
    }

    #[test]
    fn config_overlay_keeps_unspecified_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.json");
        std::fs::write(&path, r#"{"n_scenes": 3, "agents": {"max": 2}}"#).unwrap();
        let cfg = load_config(Some(&path), SimConfig::default()).unwrap();
        assert_eq!(cfg.n_scenes, 3);
        assert_eq!(cfg.agents.max, 2);
        assert_eq!(cfg.agents.min, SimConfig::default().agents.min);

        std::fs::write(&path, r#"{"n_scene": 3}"#).unwrap();
        assert!(matches!(load_config(Some(&path), SimConfig::default()), Err(Error::Config(_))));
        std::fs::write(&path, r#"{"n_scenes": "many"}"#).unwrap();
        assert!(matches!(load_config(Some(&path), SimConfig::default()), Err(Error::Config(_))));
        std::fs::write(&path, "[1]").unwrap();
        assert!(matches!(load_config(Some(&path), SimConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nothing");
        let out = dir.path().join("r.json");
        let code = main_with_args([
            "latent-ogm".as_ref(),
            "evaluate".as_ref(),
            "--pred".as_ref(),
            missing.as_os_str(),
            "--truth".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ] as [&std::ffi::OsStr; 8]);
        assert_eq!(code, EXIT_DATA);
    }
}
