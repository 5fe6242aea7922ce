//! Stage-1 representation learning: β-VAE and VAE-GAN objectives and the
//! training loop that produces the encoder/generator later frozen by stage 2.

mod losses;

pub use losses::{
    discriminator_loss, gan_losses, generator_loss, kl_divergence, kl_monte_carlo, kl_per_sample, recon_loss,
    recon_loss_logits, RandomFeatures, ReconMode,
};

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::DType;
use candle_nn::Optimizer;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::gridworld::{load_sequence, DatasetManifest, Split};
use crate::hashing;
use crate::metrics::is_metric;
use crate::models::{reparameterize, ModelConfig, Stage1Model, DISCRIMINATOR_PREFIX, ENCODER_PREFIX, GENERATOR_PREFIX};
use crate::nn::{scalar, sigmoid, AdamConfig};
use crate::ogm::{Ogm, Thresholds};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

pub const LOG_FILE: &str = "train_log.csv";
pub const MODEL_FILE: &str = "stage1.ogmc";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    #[serde(rename = "VAE")]
    Vae,
    #[serde(rename = "VAE-GAN")]
    VaeGan,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "VAE" => Ok(TrainMode::Vae),
            "VAE-GAN" | "VAEGAN" => Ok(TrainMode::VaeGan),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReprTrainConfig {
    pub model: ModelConfig,
    pub mode: TrainMode,
    pub beta: f64,
    pub recon: ReconMode,
    /// Seed of the fixed extractor behind [`ReconMode::RandomFeature`].
    pub feature_seed: u64,
    /// Optimizer for the encoder and generator.
    pub optimizer: AdamConfig,
    pub disc_optimizer: AdamConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Save a checkpoint every this many steps (0 disables intermediate ones).
    pub checkpoint_every: usize,
}

impl Default for ReprTrainConfig {
    fn default() -> Self {
        let adam = AdamConfig {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        ReprTrainConfig {
            model: ModelConfig::desk(),
            mode: TrainMode::VaeGan,
            beta: 1.0,
            recon: ReconMode::Bce,
            feature_seed: RandomFeatures::DEFAULT_SEED,
            optimizer: adam,
            disc_optimizer: adam,
            batch_size: 16,
            steps: 500,
            seed: 0,
            checkpoint_every: 100,
        }
    }
}

impl ReprTrainConfig {
    /// Settings used for the 64×64 desk-scale pipeline. The KL term is a sum
    /// over all 544 latent dimensions while the reconstruction term is a
    /// per-cell mean, so β = 1 drives the posterior onto the prior; a small
    /// β keeps the two terms on comparable scales.
    pub fn desk() -> Self {
        ReprTrainConfig {
            beta: 1e-3,
            batch_size: 8,
            ..ReprTrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a finite value ≥ 0, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        for o in [&self.optimizer, &self.disc_optimizer] {
            if !(o.lr > 0.0 && o.eps > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
                return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hashing::json_hash(self)
    }
}

/// One training-log row. GAN columns are `None` in VAE mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub recon: f64,
    pub kl: f64,
    /// `recon + β·kl`, computed on the tensor graph.
    pub vae: f64,
    pub g_loss: Option<f64>,
    pub d_loss: Option<f64>,
    /// Optimized objective: `vae` in VAE mode, `vae + g_loss` in VAE-GAN mode.
    pub total: f64,
}

impl LogRow {
    fn header(mode: TrainMode) -> &'static [&'static str] {
        match mode {
            TrainMode::Vae => &["step", "recon", "kl", "vae", "total"],
            TrainMode::VaeGan => &["step", "recon", "kl", "vae", "g_loss", "d_loss", "total"],
        }
    }

    fn record(&self) -> Vec<String> {
        let mut r = vec![self.step.to_string(), fmt(self.recon), fmt(self.kl), fmt(self.vae)];
        if let (Some(g), Some(d)) = (self.g_loss, self.d_loss) {
            r.push(fmt(g));
            r.push(fmt(d));
        }
        r.push(fmt(self.total));
        r
    }
}

// Shortest representation that parses back to the same f64.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Reads a training log written by [`train_representation`].
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (g_col, d_col) = (col("g_loss"), col("d_loss"));
    let need = |name: &str| col(name).ok_or_else(|| Error::InvalidInput(format!("{}: missing column {name}", path.display())));
    let (s, r, k, v, t) = (need("step")?, need("recon")?, need("kl")?, need("vae")?, need("total")?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
        };
        rows.push(LogRow {
            step: num(s)? as usize,
            recon: num(r)?,
            kl: num(k)?,
            vae: num(v)?,
            g_loss: g_col.map(num).transpose()?,
            d_loss: d_col.map(num).transpose()?,
            total: num(t)?,
        });
    }
    Ok(rows)
}

/// Every frame of every sequence in `split`, in manifest order.
pub fn load_frames(dataset_dir: impl AsRef<Path>, manifest: &DatasetManifest, split: Split) -> Result<Vec<Ogm>> {
    let dir = dataset_dir.as_ref();
    let mut frames = Vec::new();
    for e in manifest.entries(split) {
        frames.extend(load_sequence(dir, e)?.frames().iter().cloned());
    }
    Ok(frames)
}

pub struct TrainOutcome {
    pub model: Stage1Model,
    pub log: Vec<LogRow>,
    /// Final checkpoint, when an output directory was given.
    pub checkpoint: Option<PathBuf>,
}

struct LogSink {
    writer: Option<csv::Writer<File>>,
}

impl LogSink {
    fn open(out_dir: Option<&Path>, mode: TrainMode) -> Result<Self> {
        let Some(dir) = out_dir else {
            return Ok(LogSink { writer: None });
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOG_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(LogRow::header(mode))?;
        Ok(LogSink { writer: Some(w) })
    }

    fn push(&mut self, row: &LogRow) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.write_record(row.record())?;
            w.flush().map_err(csv::Error::from)?;
        }
        Ok(())
    }
}

/// Deterministic epoch-shuffled batch indices.
struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        let mut b = Batcher {
            order: (0..n).collect(),
            pos: n,
            rng: stream_rng(seed, streams::BATCHES),
        };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.reshuffle();
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

fn finite_or_abort(value: f64, step: usize, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            step,
            what: what.to_string(),
        })
    }
}

/// Trains a fresh stage-1 model on `frames`.
///
/// With an output directory, the log is written row by row to
/// `train_log.csv`, intermediate checkpoints go to `checkpoints/`, and the
/// final model to `stage1.ogmc`. A non-finite loss aborts before the
/// offending update, leaving earlier checkpoints untouched.
pub fn train_representation(
    frames: &[Ogm],
    config: &ReprTrainConfig,
    out_dir: Option<&Path>,
    training_meta: serde_json::Value,
    progress: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("no training frames".into()));
    }
    let model = Stage1Model::new(config.model.clone(), DType::F32, config.seed)?;
    let store = model.store();
    let mut eg_vars = store.vars_with_prefix(ENCODER_PREFIX);
    eg_vars.extend(store.vars_with_prefix(GENERATOR_PREFIX));
    let mut eg_opt = config.optimizer.build(eg_vars)?;
    let mut d_opt = config.disc_optimizer.build(store.vars_with_prefix(DISCRIMINATOR_PREFIX))?;
    let features = match config.recon {
        ReconMode::RandomFeature => Some(RandomFeatures::new(config.feature_seed, DType::F32)?),
        _ => None,
    };
    let mut noise = stream_rng(config.seed, streams::NOISE);
    let mut batcher = Batcher::new(frames.len(), config.seed);
    let mut sink = LogSink::open(out_dir, config.mode)?;
    let meta = serde_json::json!({
        "config": config,
        "config_hash": config.hash(),
        "data": training_meta,
    });
    let mut log = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let idx = batcher.next(config.batch_size);
        let batch: Vec<&Ogm> = idx.iter().map(|&i| &frames[i]).collect();
        let x = model.to_tensor(&batch)?;

        let post = model.encode(&x)?;
        let z = reparameterize(&post, &mut noise)?;
        let logits = model.generate_logits(&z)?;
        let recon = recon_loss_logits(&x, &logits, config.recon, features.as_ref())?;
        let kl = kl_divergence(&post)?;
        let vae = (&recon + (&kl * config.beta)?)?;

        let (total, g_loss, d_loss) = match config.mode {
            TrainMode::Vae => (vae.clone(), None, None),
            TrainMode::VaeGan => {
                let fake = sigmoid(&logits)?;
                let d_loss = discriminator_loss(&model.discriminate(&x)?, &model.discriminate(&fake.detach())?)?;
                let d_val = finite_or_abort(scalar(&d_loss)?, step, "discriminator loss")?;
                d_opt.backward_step(&d_loss)?;
                let g_loss = generator_loss(&model.discriminate(&fake)?)?;
                ((&vae + &g_loss)?, Some(g_loss), Some(d_val))
            }
        };

        let row = LogRow {
            step,
            recon: finite_or_abort(scalar(&recon)?, step, "reconstruction loss")?,
            kl: finite_or_abort(scalar(&kl)?, step, "KL divergence")?,
            vae: finite_or_abort(scalar(&vae)?, step, "VAE loss")?,
            g_loss: g_loss.as_ref().map(scalar).transpose()?,
            d_loss,
            total: finite_or_abort(scalar(&total)?, step, "total loss")?,
        };
        if let Some(g) = row.g_loss {
            finite_or_abort(g, step, "generator loss")?;
        }
        // The closed form is non-negative; allow f32 cancellation noise only.
        if row.kl < -1e-4 {
            return Err(Error::NonFinite {
                step,
                what: format!("negative KL divergence {}", row.kl),
            });
        }
        eg_opt.backward_step(&total)?;
        sink.push(&row)?;
        progress(&row);
        log.push(row);

        let done = step + 1;
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.steps {
                model.save(dir.join(CHECKPOINT_DIR).join(format!("step_{done:06}.ogmc")), done, meta.clone())?;
            }
        }
    }

    let checkpoint = match out_dir {
        Some(dir) => {
            let path = dir.join(MODEL_FILE);
            model.save(&path, config.steps, meta)?;
            let cfg_path = dir.join("repr_config.json");
            let mut f = File::create(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
            f.write_all(serde_json::to_string_pretty(config)?.as_bytes())
                .map_err(|e| Error::io(&cfg_path, e))?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutcome { model, log, checkpoint })
}

/// Trains on the train split of a generated dataset.
pub fn train_from_dataset(
    dataset_dir: impl AsRef<Path>,
    config: &ReprTrainConfig,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&LogRow),
) -> Result<TrainOutcome> {
    let dir = dataset_dir.as_ref();
    let manifest = DatasetManifest::load(dir)?;
    if manifest.grid != config.model.grid {
        return Err(Error::Config(format!(
            "dataset grid {}x{} does not match model grid {}x{}",
            manifest.grid.width, manifest.grid.height, config.model.grid.width, config.model.grid.height
        )));
    }
    let frames = load_frames(dir, &manifest, Split::Train)?;
    let meta = serde_json::json!({ "dataset_config_hash": manifest.config_hash, "dataset_seed": manifest.seed });
    train_representation(&frames, config, out_dir, meta, progress)
}

/// Decodes posterior means for every frame, in batches.
pub fn reconstruct_all(model: &Stage1Model, frames: &[Ogm], batch: usize) -> Result<Vec<Ogm>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(batch.max(1)) {
        let refs: Vec<&Ogm> = chunk.iter().collect();
        let x = model.to_tensor(&refs)?;
        out.extend(crate::models::tensor_to_ogms(&model.reconstruct(&x)?, model.config().grid)?);
    }
    Ok(out)
}

/// Held-out reconstruction quality against a mismatched-pair control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconComparison {
    pub frames: usize,
    /// Mean IS between each frame and its own reconstruction.
    pub reconstruction_is: f64,
    /// Mean IS between each reconstruction and a different, randomly paired frame.
    pub shuffled_is: f64,
}

pub fn compare_reconstructions(model: &Stage1Model, frames: &[Ogm], thresholds: Thresholds, seed: u64) -> Result<ReconComparison> {
    if frames.len() < 2 {
        return Err(Error::InvalidInput("need at least two frames for a shuffled control".into()));
    }
    let recon = reconstruct_all(model, frames, 32)?;
    let n = frames.len();
    let mut own = 0.0;
    for (r, x) in recon.iter().zip(frames) {
        own += is_metric(r, x, thresholds)?;
    }
    // A shuffled cycle pairs every frame with a different one.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, streams::SPLIT));
    let mut shuffled = 0.0;
    for k in 0..n {
        let (a, b) = (order[k], order[(k + 1) % n]);
        shuffled += is_metric(&recon[a], &frames[b], thresholds)?;
    }
    Ok(ReconComparison {
        frames: n,
        reconstruction_is: own / n as f64,
        shuffled_is: shuffled / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, max_rel_error};
    use candle_core::{Device, Tensor, Var};
    use rand::Rng;

    fn tiny_frames(n: usize, seed: u64) -> Vec<Ogm> {
        let grid = ModelConfig::tiny().grid;
        let mut rng = stream_rng(seed, 50);
        (0..n)
            .map(|_| {
                let v = (0..grid.cells()).map(|_| [0.0f32, 0.5, 1.0][rng.random_range(0..3)]).collect();
                Ogm::new(grid, v).unwrap()
            })
            .collect()
    }

    fn tiny_config(mode: TrainMode) -> ReprTrainConfig {
        ReprTrainConfig {
            model: ModelConfig::tiny(),
            mode,
            batch_size: 4,
            steps: 6,
            seed: 2,
            checkpoint_every: 2,
            ..ReprTrainConfig::default()
        }
    }

    #[test]
    fn vae_mode_logs_no_gan_columns() {
        let dir = tempfile::tempdir().unwrap();
        let frames = tiny_frames(10, 1);
        let cfg = tiny_config(TrainMode::Vae);
        let out = train_representation(&frames, &cfg, Some(dir.path()), serde_json::Value::Null, &mut |_| {}).unwrap();
        let text = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "step,recon,kl,vae,total");
        assert!(!text.contains("d_loss"));
        let back = read_log(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(back, out.log);
        for r in &back {
            assert!((r.total - (r.recon + cfg.beta * r.kl)).abs() < 1e-6);
            assert!(r.kl >= 0.0);
        }
        assert!(dir.path().join(CHECKPOINT_DIR).join("step_000004.ogmc").exists());
        assert!(dir.path().join(MODEL_FILE).exists());
    }

    #[test]
    fn training_is_deterministic_and_decomposes() {
        let frames = tiny_frames(12, 3);
        let cfg = tiny_config(TrainMode::VaeGan);
        let a = train_representation(&frames, &cfg, None, serde_json::Value::Null, &mut |_| {}).unwrap();
        let b = train_representation(&frames, &cfg, None, serde_json::Value::Null, &mut |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.representation_hash().unwrap(), b.model.representation_hash().unwrap());
        for r in &a.log {
            let g = r.g_loss.unwrap();
            assert!(r.d_loss.is_some());
            assert!((r.total - (r.vae + g)).abs() < 1e-6);
        }
    }

    #[test]
    fn beta_zero_total_is_recon() {
        let frames = tiny_frames(8, 4);
        let cfg = ReprTrainConfig {
            beta: 0.0,
            ..tiny_config(TrainMode::Vae)
        };
        let out = train_representation(&frames, &cfg, None, serde_json::Value::Null, &mut |_| {}).unwrap();
        for r in &out.log {
            assert_eq!(r.total, r.recon);
        }
    }

    #[test]
    fn non_finite_loss_aborts_and_keeps_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let frames = tiny_frames(8, 5);
        let cfg = ReprTrainConfig {
            optimizer: AdamConfig {
                lr: 1e30,
                ..ReprTrainConfig::default().optimizer
            },
            steps: 40,
            ..tiny_config(TrainMode::Vae)
        };
        let err = train_representation(&frames, &cfg, Some(dir.path()), serde_json::Value::Null, &mut |_| {});
        match err {
            Err(Error::NonFinite { step, .. }) => assert!(step > 0),
            other => panic!("expected a numerical abort, got {:?}", other.map(|o| o.log.len())),
        }
        assert!(!dir.path().join(MODEL_FILE).exists());
        let first = dir.path().join(CHECKPOINT_DIR).join("step_000002.ogmc");
        if first.exists() {
            Stage1Model::load(first, DType::F32).unwrap();
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut c = ReprTrainConfig::default();
        c.beta = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ReprTrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        assert_eq!("vae-gan".parse::<TrainMode>().unwrap(), TrainMode::VaeGan);
    }

    #[test]
    fn gan_gradients_match_finite_differences() {
        let m = Stage1Model::new(ModelConfig::tiny(), DType::F64, 6).unwrap();
        let g = m.config().grid;
        let mut rng = stream_rng(6, 1);
        let mut rand = |n: usize| -> Tensor {
            let v: Vec<f64> = (0..n * g.cells()).map(|_| rng.random_range(0.05..0.95)).collect();
            Tensor::from_vec(v, (n, 1, g.height, g.width), &Device::Cpu).unwrap()
        };
        let real = rand(2);
        let fake = Var::from_tensor(&rand(2)).unwrap();
        let idx = [0, 11, 40, 77, 127];
        let checks = gradient_check(&fake, &idx, 1e-5, &|| generator_loss(&m.discriminate(fake.as_tensor())?)).unwrap();
        assert!(max_rel_error(&checks) < 1e-4, "{checks:?}");
        let d = || discriminator_loss(&m.discriminate(&real)?, &m.discriminate(fake.as_tensor())?);
        let checks = gradient_check(&fake, &idx, 1e-5, &d).unwrap();
        assert!(max_rel_error(&checks) < 1e-4, "{checks:?}");
        let w = m.store().get("disc.s1.conv0.weight").unwrap().clone();
        let checks = gradient_check(&w, &[0, 3, 8, 15], 1e-5, &d).unwrap();
        assert!(max_rel_error(&checks) < 1e-4, "{checks:?}");
    }

    #[test]
    fn shuffled_control_pairs_distinct_frames() {
        let frames = tiny_frames(6, 9);
        let m = Stage1Model::new(ModelConfig::tiny(), DType::F32, 1).unwrap();
        let c = compare_reconstructions(&m, &frames, Thresholds::default(), 0).unwrap();
        assert_eq!(c.frames, 6);
        assert!(c.reconstruction_is.is_finite() && c.shuffled_is.is_finite());
        assert!(compare_reconstructions(&m, &frames[..1], Thresholds::default(), 0).is_err());
    }
}
