//! Batch evaluation of predicted sequences against ground truth.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image_similarity::{is_metric, mse};
use crate::gridworld::{DatasetManifest, Split};
use crate::ogm::{read_sequence, GridSpec, Thresholds};
use crate::{Error, Result};

pub const PREDICTIONS_FILE: &str = "predictions.json";

/// One predicted window. Predicted frame `k` (0-based) is frame `offset + k`
/// of the file at `path` and corresponds to ground-truth frame
/// `start + history + k` of scene `scene_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub id: String,
    pub scene_id: String,
    pub start: usize,
    pub path: String,
    #[serde(default)]
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub version: u32,
    pub method: String,
    pub grid: GridSpec,
    pub history: usize,
    /// Predicted frames per entry.
    pub frames: usize,
    #[serde(default)]
    pub checkpoint_hashes: Vec<String>,
    pub entries: Vec<PredictionEntry>,
}

impl PredictionManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(PREDICTIONS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(PREDICTIONS_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Treats the first window of every sequence in a dataset as a "prediction"
    /// of itself (frames `H..H+P`). Useful as a sanity check: it scores 0.
    pub fn from_dataset(dataset: &DatasetManifest, split: Option<Split>) -> Self {
        PredictionManifest {
            version: 1,
            method: "dataset".into(),
            grid: dataset.grid,
            history: dataset.history,
            frames: dataset.horizon,
            checkpoint_hashes: vec![],
            entries: dataset
                .sequences
                .iter()
                .filter(|e| split.is_none_or(|s| e.split == s))
                .map(|e| PredictionEntry {
                    id: format!("{}_w0000", e.id),
                    scene_id: e.id.clone(),
                    start: 0,
                    path: e.path.clone(),
                    offset: dataset.history,
                })
                .collect(),
        }
    }
}

/// Loads `predictions.json` from `dir`, or wraps a dataset directory via
/// [`PredictionManifest::from_dataset`].
pub fn load_predictions(dir: impl AsRef<Path>) -> Result<PredictionManifest> {
    let dir = dir.as_ref();
    if dir.join(PREDICTIONS_FILE).exists() {
        PredictionManifest::load(dir)
    } else {
        Ok(PredictionManifest::from_dataset(&DatasetManifest::load(dir)?, None))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub sequence_id: String,
    /// Horizon step, 1-based.
    pub t: usize,
    pub is_value: f64,
    pub mse_value: f64,
}

/// Sample mean and standard error (`std / √n`, with the `n − 1` sample std).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanSe {
                n,
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        MeanSe { n, mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonAggregate {
    pub t: usize,
    pub is: MeanSe,
    pub mse: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub thresholds: Thresholds,
    pub per_frame: Vec<FrameScore>,
    pub per_horizon: Vec<HorizonAggregate>,
    pub overall_is: MeanSe,
    pub overall_mse: MeanSe,
}

impl EvalReport {
    pub fn from_scores(method: &str, thresholds: Thresholds, per_frame: Vec<FrameScore>) -> Self {
        let steps = per_frame.iter().map(|r| r.t).max().unwrap_or(0);
        let per_horizon = (1..=steps)
            .map(|t| {
                let rows: Vec<_> = per_frame.iter().filter(|r| r.t == t).collect();
                HorizonAggregate {
                    t,
                    is: MeanSe::of(&rows.iter().map(|r| r.is_value).collect::<Vec<_>>()),
                    mse: MeanSe::of(&rows.iter().map(|r| r.mse_value).collect::<Vec<_>>()),
                }
            })
            .collect();
        let overall_is = MeanSe::of(&per_frame.iter().map(|r| r.is_value).collect::<Vec<_>>());
        let overall_mse = MeanSe::of(&per_frame.iter().map(|r| r.mse_value).collect::<Vec<_>>());
        EvalReport {
            method: method.to_string(),
            thresholds,
            per_frame,
            per_horizon,
            overall_is,
            overall_mse,
        }
    }

    pub fn horizon(&self, t: usize) -> Option<&HorizonAggregate> {
        self.per_horizon.iter().find(|h| h.t == t)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// Per-frame rows: `sequence_id,t,is,mse`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["sequence_id", "t", "is", "mse"])?;
        for r in &self.per_frame {
            w.write_record([
                r.sequence_id.clone(),
                r.t.to_string(),
                format!("{:.6}", r.is_value),
                format!("{:.6}", r.mse_value),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    /// Per-horizon rows: `t,n,is_mean,is_se,mse_mean,mse_se`.
    pub fn save_horizon_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["t", "n", "is_mean", "is_se", "mse_mean", "mse_se"])?;
        for h in &self.per_horizon {
            w.write_record([
                h.t.to_string(),
                h.is.n.to_string(),
                format!("{:.6}", h.is.mean),
                format!("{:.6}", h.is.se),
                format!("{:.6}", h.mse.mean),
                format!("{:.6}", h.mse.se),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// Console table in the usual "mean ± standard error" style, one row per report.
pub fn summary_table(reports: &[&EvalReport]) -> String {
    let steps = reports
        .iter()
        .map(|r| r.per_horizon.len())
        .max()
        .unwrap_or(0);
    let mut cols: Vec<usize> = [1, 5, 10, 15].into_iter().filter(|&t| t <= steps).collect();
    if steps > 0 && !cols.contains(&steps) {
        cols.push(steps);
    }
    let mut out = String::new();
    let _ = write!(out, "{:<16} {:>18}", "method", "IS (all)");
    for t in &cols {
        let _ = write!(out, " {:>16}", format!("IS t={t}"));
    }
    let _ = writeln!(out, " {:>18}", "MSE (all)");
    for r in reports {
        let _ = write!(
            out,
            "{:<16} {:>18}",
            r.method,
            format!("{:.3} ± {:.3}", r.overall_is.mean, r.overall_is.se)
        );
        for &t in &cols {
            let cell = r
                .horizon(t)
                .map(|h| format!("{:.3} ± {:.3}", h.is.mean, h.is.se))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell:>16}");
        }
        let _ = writeln!(
            out,
            " {:>18}",
            format!("{:.4} ± {:.4}", r.overall_mse.mean, r.overall_mse.se)
        );
    }
    out
}

/// Scores every predicted frame against its ground-truth counterpart.
///
/// Rows are ordered by prediction entry, then horizon step, independent of
/// how the work is scheduled.
pub fn evaluate(
    predictions: &PredictionManifest,
    pred_dir: impl AsRef<Path>,
    truth: &DatasetManifest,
    truth_dir: impl AsRef<Path>,
    thresholds: Thresholds,
) -> Result<EvalReport> {
    thresholds.validate()?;
    let (pred_dir, truth_dir) = (pred_dir.as_ref(), truth_dir.as_ref());
    if predictions.grid != truth.grid {
        return Err(Error::Shape(format!(
            "prediction grid {:?} differs from ground truth {:?}",
            predictions.grid, truth.grid
        )));
    }
    let by_id: HashMap<&str, _> = truth.sequences.iter().map(|e| (e.id.as_str(), e)).collect();
    let missing: Vec<String> = predictions
        .entries
        .iter()
        .filter(|e| !by_id.contains_key(e.scene_id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSequences(missing));
    }

    // Load each ground-truth scene once.
    let mut scene_ids: Vec<&str> = predictions.entries.iter().map(|e| e.scene_id.as_str()).collect();
    scene_ids.sort_unstable();
    scene_ids.dedup();
    let scenes: HashMap<&str, _> = scene_ids
        .par_iter()
        .map(|id| Ok((*id, read_sequence(truth_dir.join(&by_id[id].path))?)))
        .collect::<Result<_>>()?;

    let history = predictions.history;
    let rows = predictions
        .entries
        .par_iter()
        .map(|entry| {
            let pred = read_sequence(pred_dir.join(&entry.path))?;
            let gt = &scenes[entry.scene_id.as_str()];
            let needed = entry.start + history + predictions.frames;
            if gt.len() < needed || pred.len() < entry.offset + predictions.frames {
                return Err(Error::Shape(format!(
                    "entry {} needs {needed} ground-truth frames (have {}) and {} predicted frames (have {})",
                    entry.id,
                    gt.len(),
                    entry.offset + predictions.frames,
                    pred.len()
                )));
            }
            (0..predictions.frames)
                .map(|k| {
                    let p = &pred.frames()[entry.offset + k];
                    let g = &gt.frames()[entry.start + history + k];
                    Ok(FrameScore {
                        sequence_id: entry.id.clone(),
                        t: k + 1,
                        is_value: is_metric(p, g, thresholds)?,
                        mse_value: mse(p, g)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_scores(
        &predictions.method,
        thresholds,
        rows.into_iter().flatten().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_error_definition() {
        let m = MeanSe::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((m.se - sd / 2.0).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[7.0]).se, 0.0);
    }

    #[test]
    fn aggregates_per_horizon() {
        let rows = (0..3)
            .flat_map(|s| {
                (1..=4).map(move |t| FrameScore {
                    sequence_id: format!("s{s}"),
                    t,
                    is_value: (s * t) as f64,
                    mse_value: 0.1,
                })
            })
            .collect();
        let r = EvalReport::from_scores("x", Thresholds::default(), rows);
        assert_eq!(r.per_horizon.len(), 4);
        assert_eq!(r.horizon(2).unwrap().is.mean, 2.0);
        assert_eq!(r.overall_is.n, 12);
        let table = summary_table(&[&r]);
        assert!(table.contains("IS t=1"));
    }
}
