use std::fs::File;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::Optimizer;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::predictor::{prediction_loss, Predictor, PredictorConfig, PredictorMeta, PREDICTOR_KIND, PREDICTOR_PREFIX};
use super::{LatentManifest, LatentSequence};
use crate::gridworld::Split;
use crate::models::LatentPair;
use crate::nn::scalar;
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

pub const PRED_LOG_FILE: &str = "pred_log.csv";
pub const PREDICTOR_FILE: &str = "predictor.ogmc";

/// All length-`H + P` windows of a set of latent sequences, stacked into
/// one frame table so a batch at time `t` is a single gather.
pub struct Windows {
    style: Tensor,
    content: Tensor,
    starts: Vec<usize>,
    len: usize,
}

impl Windows {
    pub fn new(seqs: &[LatentSequence], len: usize, stride: usize, device: &Device) -> Result<Self> {
        let mut style = Vec::new();
        let mut content = Vec::new();
        let mut starts = Vec::new();
        let mut offset = 0;
        let (mut s_dim, mut shape) = (0, [0; 3]);
        for s in seqs {
            if offset > 0 && (s.style_dim() != s_dim || s.content_shape() != shape) {
                return Err(Error::Shape(format!("sequence {} has different latent dims", s.id())));
            }
            (s_dim, shape) = (s.style_dim(), s.content_shape());
            for l in s.latents() {
                style.extend_from_slice(&l.style);
                content.extend_from_slice(&l.content);
            }
            if s.len() >= len {
                starts.extend((0..=s.len() - len).step_by(stride.max(1)).map(|i| offset + i));
            }
            offset += s.len();
        }
        let [c, h, w] = shape;
        Ok(Windows {
            style: Tensor::from_vec(style, (offset, s_dim), device)?,
            content: Tensor::from_vec(content, (offset, c, h, w), device)?,
            starts,
            len,
        })
    }

    pub fn count(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Latents at offset `t` of the windows selected by `ids`.
    pub fn at(&self, ids: &[usize], t: usize) -> Result<LatentPair> {
        let rows: Vec<u32> = ids.iter().map(|&i| (self.starts[i] + t) as u32).collect();
        let idx = Tensor::from_vec(rows, ids.len(), self.style.device())?;
        Ok(LatentPair {
            style: self.style.index_select(&idx, 0)?,
            content: self.content.index_select(&idx, 0)?,
        })
    }

    /// The whole window `[0, len)` for a batch.
    pub fn batch(&self, ids: &[usize]) -> Result<Vec<LatentPair>> {
        (0..self.len).map(|t| self.at(ids, t)).collect()
    }

    /// Largest Euclidean norm of any single latent in the table.
    pub fn max_latent_norm(&self) -> Result<f64> {
        let s = self.style.sqr()?.sum(1)?;
        let c = self.content.sqr()?.flatten_from(1)?.sum(1)?;
        Ok((s + c)?.max(0)?.to_dtype(DType::F64)?.to_scalar::<f64>()?.sqrt())
    }
}

fn chunks(n: usize, size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).step_by(size).map(move |s| (s..(s + size).min(n)).collect())
}

/// Mean autoregressive prediction loss over every window.
pub fn validation_loss(p: &Predictor, w: &Windows) -> Result<f64> {
    let h = p.config().history;
    let mut total = 0.0;
    for ids in chunks(w.count(), 64) {
        let seq = w.batch(&ids)?;
        let pred = p.predict(&seq[..h])?;
        total += scalar(&prediction_loss(&pred, &seq[h..])?)? * ids.len() as f64;
    }
    Ok(total / w.count().max(1) as f64)
}

/// Loss of predicting `ẑ_t = z_{H−1}` for every future step.
pub fn constant_latent_loss(w: &Windows, history: usize) -> Result<f64> {
    let mut total = 0.0;
    for ids in chunks(w.count(), 64) {
        let seq = w.batch(&ids)?;
        let pred = vec![seq[history - 1].clone(); seq.len() - history];
        total += scalar(&prediction_loss(&pred, &seq[history..])?)? * ids.len() as f64;
    }
    Ok(total / w.count().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub struct PredictorOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub predictor: Predictor,
    pub log: Vec<PredLogRow>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub baseline_val_loss: f64,
    /// Largest latent norm in the training windows.
    pub max_train_norm: f64,
    pub checkpoint: Option<PathBuf>,
}

fn non_finite(step: usize, what: &str) -> Error {
    Error::NonFinite {
        step,
        what: what.to_string(),
    }
}

/// Trains the predictor on the train split and early-stops on the val split.
///
/// With an output directory, the per-epoch log goes to `pred_log.csv` and
/// the best parameters so far to `predictor.ogmc`, rewritten on every
/// improvement, so an abort leaves the last good checkpoint in place.
pub fn train_predictor(
    latent_dir: impl AsRef<Path>,
    config: &PredictorConfig,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&PredLogRow),
) -> Result<PredictorOutcome> {
    config.validate()?;
    let latent_dir = latent_dir.as_ref();
    let manifest = LatentManifest::load(latent_dir)?;
    let [c, k, _] = manifest.content_shape;
    if (manifest.style_dim, c, k) != (config.style_dim, config.content_channels, config.content_size) {
        return Err(Error::Config("predictor latent dims do not match the latent dataset".into()));
    }
    let device = Device::Cpu;
    let len = config.history + config.horizon;
    let train = Windows::new(&manifest.load_split(latent_dir, Split::Train)?, len, config.window_stride, &device)?;
    let val = Windows::new(&manifest.load_split(latent_dir, Split::Val)?, len, 1, &device)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "latent dataset has {} training and {} validation windows of length {len}; both must be non-empty",
            train.count(),
            val.count()
        )));
    }

    let predictor = Predictor::new(config.clone(), DType::F32)?;
    let mut opt = config.optimizer.build(predictor.store().vars_with_prefix(PREDICTOR_PREFIX))?;
    let mut order: Vec<usize> = (0..train.count()).collect();
    let mut batch_rng = stream_rng(config.seed, streams::BATCHES);
    let mut tf_rng = stream_rng(config.seed, streams::TEACHER_FORCING);
    let baseline = constant_latent_loss(&val, config.history)?;
    let mut best = (0usize, validation_loss(&predictor, &val)?);
    let mut best_params = predictor.store().export(PREDICTOR_PREFIX)?;
    let mut log = Vec::new();
    let mut writer = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let path = d.join(PRED_LOG_FILE);
            let mut w = csv::Writer::from_writer(File::create(&path).map_err(|e| Error::io(&path, e))?);
            w.write_record(["epoch", "train_loss", "val_loss"])?;
            Some(w)
        }
        None => None,
    };
    let meta = |epoch: usize, val_loss: f64| PredictorMeta {
        kind: PREDICTOR_KIND.into(),
        config: config.clone(),
        config_hash: config.hash(),
        stage1_hash: manifest.stage1_hash.clone(),
        epoch,
        val_loss,
        baseline_val_loss: baseline,
    };
    let checkpoint = out_dir.map(|d| d.join(PREDICTOR_FILE));
    let mut step = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut batch_rng);
        let mut epoch_loss = 0.0;
        for ids in order.chunks(config.batch_size) {
            let seq = train.batch(ids)?;
            let h = config.history;
            let flips: Vec<bool> = (0..config.horizon).map(|_| tf_rng.random_bool(config.teacher_forcing)).collect();
            let pred = predictor.unroll(&seq[..h], config.horizon, &mut |k| flips[k].then(|| seq[h + k - 1].clone()))?;
            let loss = prediction_loss(&pred, &seq[h..])?;
            let v = scalar(&loss)?;
            if !v.is_finite() {
                return Err(non_finite(step, "prediction loss"));
            }
            opt.backward_step(&loss)?;
            epoch_loss += v * ids.len() as f64;
            step += 1;
        }
        let val_loss = validation_loss(&predictor, &val)?;
        if !val_loss.is_finite() {
            return Err(non_finite(step, "validation loss"));
        }
        let row = PredLogRow {
            epoch,
            train_loss: epoch_loss / train.count() as f64,
            val_loss,
        };
        if let Some(w) = &mut writer {
            w.write_record([row.epoch.to_string(), format!("{:?}", row.train_loss), format!("{:?}", row.val_loss)])?;
            w.flush().map_err(csv::Error::from)?;
        }
        progress(&row);
        log.push(row);
        if val_loss < best.1 {
            best = (epoch, val_loss);
            best_params = predictor.store().export(PREDICTOR_PREFIX)?;
            if let Some(path) = &checkpoint {
                predictor.to_checkpoint(&meta(epoch, val_loss))?.save(path)?;
            }
        } else if epoch - best.0 >= config.patience {
            break;
        }
    }

    predictor.store().import(PREDICTOR_PREFIX, &best_params)?;
    if let (Some(path), 0) = (&checkpoint, best.0) {
        // Training never beat the initial parameters; still leave a checkpoint.
        predictor.to_checkpoint(&meta(0, best.1))?.save(path)?;
    }
    Ok(PredictorOutcome {
        max_train_norm: train.max_latent_norm()?,
        predictor,
        log,
        best_epoch: best.0,
        best_val_loss: best.1,
        baseline_val_loss: baseline,
        checkpoint,
    })
}
