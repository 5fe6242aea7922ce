use std::path::Path;

use serde::{Deserialize, Serialize};

use super::predictor::Predictor;
use crate::gridworld::{load_sequence, DatasetManifest, Split};
use crate::metrics::{PredictionEntry, PredictionManifest};
use crate::models::{LatentPair, Stage1Model};
use crate::ogm::{write_sequence, Ogm, ScenarioSequence};
use crate::{Error, Result};

/// Which windows to predict and how far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictOptions {
    pub split: Split,
    /// Predicted frames per window (the horizon, or longer for rollouts).
    pub steps: usize,
    /// Spacing between window starts within a scene.
    pub stride: usize,
}

impl PredictOptions {
    /// Non-overlapping windows of the dataset's own horizon.
    pub fn for_dataset(manifest: &DatasetManifest, split: Split) -> Self {
        PredictOptions {
            split,
            steps: manifest.horizon,
            stride: manifest.history + manifest.horizon,
        }
    }
}

/// Window starts `0, stride, 2·stride, …` that leave room for `history + steps` frames.
pub fn window_starts(len: usize, history: usize, steps: usize, stride: usize) -> Vec<usize> {
    let need = history + steps;
    if len < need {
        return Vec::new();
    }
    (0..=len - need).step_by(stride.max(1)).collect()
}

/// Writes one predicted window: the observed frames followed by the
/// predictions, so predicted frame `k` sits at offset `history + k`.
fn write_window(
    out_dir: &Path,
    scene: &ScenarioSequence,
    scene_id: &str,
    start: usize,
    predicted: Vec<Ogm>,
) -> Result<PredictionEntry> {
    let history = scene.history();
    let steps = predicted.len();
    let mut frames: Vec<Ogm> = scene.frames()[start..start + history].to_vec();
    frames.extend(predicted);
    let poses = scene.ego_poses()[start..start + history + steps].to_vec();
    let seq = ScenarioSequence::new(scene.spec(), frames, poses, history, steps)?;
    let id = format!("{scene_id}_w{start:04}");
    let path = format!("{id}.ogms");
    write_sequence(&seq, out_dir.join(&path))?;
    Ok(PredictionEntry {
        id,
        scene_id: scene_id.to_string(),
        start,
        path,
        offset: history,
    })
}

fn finish(
    out_dir: &Path,
    method: &str,
    dataset: &DatasetManifest,
    steps: usize,
    hashes: Vec<String>,
    entries: Vec<PredictionEntry>,
) -> Result<PredictionManifest> {
    let manifest = PredictionManifest {
        version: 1,
        method: method.to_string(),
        grid: dataset.grid,
        history: dataset.history,
        frames: steps,
        checkpoint_hashes: hashes,
        entries,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Encodes the observed frames of each window, predicts in latent space and
/// decodes the predictions.
pub fn predict_ogms(
    stage1: &Stage1Model,
    predictor: &Predictor,
    stage1_hash_expected: &str,
    dataset_dir: impl AsRef<Path>,
    options: PredictOptions,
    out_dir: impl AsRef<Path>,
) -> Result<PredictionManifest> {
    let (dataset_dir, out_dir) = (dataset_dir.as_ref(), out_dir.as_ref());
    let stage1_hash = stage1.representation_hash()?;
    if stage1_hash != stage1_hash_expected {
        return Err(Error::CheckpointMismatch(format!(
            "predictor was trained on latents of stage-1 model {stage1_hash_expected}, got {stage1_hash}"
        )));
    }
    if !predictor.config().matches_model(stage1.config()) {
        return Err(Error::CheckpointMismatch("predictor latent dims differ from the stage-1 model".into()));
    }
    let dataset = DatasetManifest::load(dataset_dir)?;
    let history = predictor.config().history;
    if dataset.history != history {
        return Err(Error::Config(format!(
            "dataset history {} differs from predictor history {history}",
            dataset.history
        )));
    }
    if options.steps == 0 {
        return Err(Error::InvalidInput("need at least one predicted step".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::new();
    for e in dataset.entries(options.split) {
        let scene = load_sequence(dataset_dir, e)?;
        for start in window_starts(scene.len(), history, options.steps, options.stride) {
            let observed: Vec<&Ogm> = scene.frames()[start..start + history].iter().collect();
            // Each observed frame becomes one step of a batch-of-one prefix.
            let post = stage1.encode_ogms(&observed)?;
            let means = post.means();
            let prefix: Vec<LatentPair> = (0..history)
                .map(|t| {
                    Ok(LatentPair {
                        style: means.style.narrow(0, t, 1)?,
                        content: means.content.narrow(0, t, 1)?,
                    })
                })
                .collect::<Result<_>>()?;
            let preds = predictor.rollout(&prefix, options.steps)?;
            let style: Vec<_> = preds.iter().map(|p| p.style.clone()).collect();
            let content: Vec<_> = preds.iter().map(|p| p.content.clone()).collect();
            let z = LatentPair {
                style: candle_core::Tensor::cat(&style, 0)?,
                content: candle_core::Tensor::cat(&content, 0)?,
            };
            let frames = stage1.generate_ogms(&z)?;
            entries.push(write_window(out_dir, &scene, &e.id, start, frames)?);
        }
    }
    let hashes = vec![stage1_hash, predictor.hash()?];
    finish(out_dir, "latent-predictor", &dataset, options.steps, hashes, entries)
}

/// Baseline that repeats the last observed frame for every future step.
pub fn copy_last_predictions(
    dataset_dir: impl AsRef<Path>,
    options: PredictOptions,
    out_dir: impl AsRef<Path>,
) -> Result<PredictionManifest> {
    let (dataset_dir, out_dir) = (dataset_dir.as_ref(), out_dir.as_ref());
    let dataset = DatasetManifest::load(dataset_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let history = dataset.history;
    let mut entries = Vec::new();
    for e in dataset.entries(options.split) {
        let scene = load_sequence(dataset_dir, e)?;
        for start in window_starts(scene.len(), history, options.steps, options.stride) {
            let last = scene.frames()[start + history - 1].clone();
            entries.push(write_window(out_dir, &scene, &e.id, start, vec![last; options.steps])?);
        }
    }
    finish(out_dir, "copy-last", &dataset, options.steps, vec![], entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_fit_inside_the_scene() {
        assert_eq!(window_starts(100, 5, 15, 20), vec![0, 20, 40, 60, 80]);
        assert_eq!(window_starts(100, 5, 35, 40), vec![0, 40]);
        assert_eq!(window_starts(19, 5, 15, 20), Vec::<usize>::new());
        assert_eq!(window_starts(20, 5, 15, 1), vec![0]);
    }
}
