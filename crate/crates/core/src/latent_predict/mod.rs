//! Stage 2: prediction in the frozen latent space.
//!
//! [`encode_dataset`] converts every scene to a `LATS` file of posterior
//! means, [`train_predictor`] fits the recurrent predictor on windows of
//! `H + P` latents, and [`predict_ogms`] decodes predictions back to grids
//! for [`crate::metrics::evaluate`].

mod lats;
mod pipeline;
mod predictor;
mod train;

pub use lats::{decode_latents, encode_latents, read_latents, write_latents, LatentSequence};
pub use pipeline::{copy_last_predictions, predict_ogms, window_starts, PredictOptions};
pub use predictor::{prediction_loss, Predictor, PredictorConfig, PredictorMeta, PREDICTOR_KIND, PREDICTOR_PREFIX};
pub use train::{constant_latent_loss, train_predictor, validation_loss, PredLogRow, PredictorOutcome, Windows};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gridworld::{load_sequence, DatasetManifest, Split};
use crate::models::{reparameterize, LatentPair, Stage1Model};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

pub const LATENT_MANIFEST_FILE: &str = "latents.json";

/// Which latent each frame is mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSource {
    /// Posterior means (deterministic).
    Mean,
    /// One reparameterized sample per frame from the noise stream.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentEntry {
    pub id: String,
    pub path: String,
    pub split: Split,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentManifest {
    pub version: u32,
    pub source: LatentSource,
    pub dataset_config_hash: String,
    pub stage1_hash: String,
    pub style_dim: usize,
    pub content_shape: [usize; 3],
    pub history: usize,
    pub horizon: usize,
    pub sequences: Vec<LatentEntry>,
}

impl LatentManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(LATENT_MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(LATENT_MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &LatentEntry> {
        self.sequences.iter().filter(move |e| e.split == split)
    }

    /// Reads every sequence of `split`, in manifest order.
    pub fn load_split(&self, dir: impl AsRef<Path>, split: Split) -> Result<Vec<LatentSequence>> {
        let dir = dir.as_ref();
        self.entries(split).map(|e| read_latents(dir.join(&e.path))).collect()
    }
}

/// Encodes every frame of a dataset with a frozen stage-1 encoder.
pub fn encode_dataset(
    dataset_dir: impl AsRef<Path>,
    model: &Stage1Model,
    source: LatentSource,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<LatentManifest> {
    let (dataset_dir, out_dir) = (dataset_dir.as_ref(), out_dir.as_ref());
    let manifest = DatasetManifest::load(dataset_dir)?;
    if manifest.grid != model.config().grid {
        return Err(Error::Config(format!(
            "dataset grid {:?} does not match the encoder grid {:?}",
            manifest.grid,
            model.config().grid
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg = model.config();
    let content_shape = [cfg.content_channels, cfg.content_size, cfg.content_size];
    let mut noise = stream_rng(seed, streams::NOISE);
    let mut entries = Vec::with_capacity(manifest.sequences.len());
    for e in &manifest.sequences {
        let seq = load_sequence(dataset_dir, e)?;
        let mut latents = Vec::with_capacity(seq.len());
        for chunk in seq.frames().chunks(32) {
            let refs: Vec<_> = chunk.iter().collect();
            let post = model.encode_ogms(&refs)?;
            let z: LatentPair = match source {
                LatentSource::Mean => post.means(),
                LatentSource::Sample => reparameterize(&post, &mut noise)?,
            };
            latents.extend(z.to_latents()?);
        }
        let lat = LatentSequence::new(&e.id, cfg.style_dim, content_shape, manifest.history, manifest.horizon, latents)?;
        let path = format!("{}.lats", e.id);
        write_latents(&lat, out_dir.join(&path))?;
        entries.push(LatentEntry {
            id: e.id.clone(),
            path,
            split: e.split,
            frames: lat.len(),
        });
    }
    let out = LatentManifest {
        version: 1,
        source,
        dataset_config_hash: manifest.config_hash.clone(),
        stage1_hash: model.representation_hash()?,
        style_dim: cfg.style_dim,
        content_shape,
        history: manifest.history,
        horizon: manifest.horizon,
        sequences: entries,
    };
    out.save(out_dir)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_dataset, SimConfig};
    use crate::metrics::evaluate;
    use crate::models::ModelConfig;
    use crate::ogm::{read_sequence, Thresholds};
    use candle_core::DType;

    fn tiny_dataset(dir: &Path) -> DatasetManifest {
        let cfg = SimConfig {
            grid: ModelConfig::tiny().grid,
            n_scenes: 8,
            frames_per_scene: 14,
            history: 3,
            horizon: 4,
            n_rays: 90,
            ..SimConfig::smoke()
        };
        generate_dataset(&cfg, 1, dir).unwrap()
    }

    fn tiny_predictor(model: &ModelConfig) -> PredictorConfig {
        PredictorConfig {
            hidden: 8,
            style_features: 4,
            content_features: 2,
            max_epochs: 3,
            batch_size: 8,
            ..PredictorConfig::for_model(model, 3, 4)
        }
    }

    #[test]
    fn stage_two_end_to_end() {
        let root = tempfile::tempdir().unwrap();
        let (data, lat, lat2, pred_dir, preds, base) =
            ["data", "lat", "lat2", "pred", "preds", "base"].map(|d| root.path().join(d)).into();
        let dataset = tiny_dataset(&data);
        let stage1 = Stage1Model::new(ModelConfig::tiny(), DType::F32, 0).unwrap();
        let before = stage1.representation_hash().unwrap();

        let m = encode_dataset(&data, &stage1, LatentSource::Mean, 0, &lat).unwrap();
        encode_dataset(&data, &stage1, LatentSource::Mean, 0, &lat2).unwrap();
        assert_eq!(m.sequences.len(), 8);
        for e in &m.sequences {
            let a = std::fs::read(lat.join(&e.path)).unwrap();
            assert_eq!(a, std::fs::read(lat2.join(&e.path)).unwrap());
            let s = read_latents(lat.join(&e.path)).unwrap();
            assert_eq!((s.len(), s.style_dim(), s.content_shape()), (14, 3, [2, 2, 2]));
        }

        let cfg = tiny_predictor(stage1.config());
        let out = train_predictor(&lat, &cfg, Some(&pred_dir), &mut |_| {}).unwrap();
        let again = train_predictor(&lat, &cfg, None, &mut |_| {}).unwrap();
        assert_eq!(out.log, again.log);
        assert!(out.best_val_loss.is_finite() && out.baseline_val_loss >= 0.0);
        assert_eq!(stage1.representation_hash().unwrap(), before);

        let (p, meta) = Predictor::load(pred_dir.join("predictor.ogmc")).unwrap();
        let opts = PredictOptions::for_dataset(&dataset, Split::Test);
        let manifest = predict_ogms(&stage1, &p, &meta.stage1_hash, &data, opts, &preds).unwrap();
        assert!(!manifest.entries.is_empty());
        for e in &manifest.entries {
            let s = read_sequence(preds.join(&e.path)).unwrap();
            assert_eq!(s.len(), 3 + 4);
            assert!(s.frames().iter().flat_map(|f| f.values()).all(|v| (0.0..=1.0).contains(v)));
        }
        let report = evaluate(&manifest, &preds, &dataset, &data, Thresholds::default()).unwrap();
        assert_eq!(report.per_horizon.len(), 4);
        let baseline = copy_last_predictions(&data, opts, &base).unwrap();
        assert_eq!(baseline.entries.len(), manifest.entries.len());

        assert!(matches!(
            predict_ogms(&stage1, &p, "deadbeef", &data, opts, &preds),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn teacher_forcing_extremes_train() {
        let root = tempfile::tempdir().unwrap();
        let (data, lat) = (root.path().join("d"), root.path().join("l"));
        tiny_dataset(&data);
        let stage1 = Stage1Model::new(ModelConfig::tiny(), DType::F32, 0).unwrap();
        encode_dataset(&data, &stage1, LatentSource::Sample, 4, &lat).unwrap();
        for tf in [0.0, 1.0] {
            let cfg = PredictorConfig {
                teacher_forcing: tf,
                max_epochs: 1,
                ..tiny_predictor(stage1.config())
            };
            let out = train_predictor(&lat, &cfg, None, &mut |_| {}).unwrap();
            assert!(out.log[0].train_loss.is_finite());
        }
    }

    #[test]
    fn grid_mismatch_and_empty_data_are_config_errors() {
        let root = tempfile::tempdir().unwrap();
        let data = root.path().join("d");
        tiny_dataset(&data);
        let desk = Stage1Model::new(ModelConfig::desk(), DType::F32, 0).unwrap();
        assert!(matches!(
            encode_dataset(&data, &desk, LatentSource::Mean, 0, root.path().join("l")),
            Err(Error::Config(_))
        ));
        let empty = root.path().join("empty");
        std::fs::create_dir_all(&empty).unwrap();
        let m = LatentManifest {
            version: 1,
            source: LatentSource::Mean,
            dataset_config_hash: String::new(),
            stage1_hash: String::new(),
            style_dim: 3,
            content_shape: [2, 2, 2],
            history: 3,
            horizon: 4,
            sequences: vec![],
        };
        m.save(&empty).unwrap();
        let cfg = tiny_predictor(&ModelConfig::tiny());
        assert!(matches!(train_predictor(&empty, &cfg, None, &mut |_| {}), Err(Error::Config(_))));
    }
}
