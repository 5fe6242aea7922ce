//! Grid comparison metrics and batch evaluation.

mod image_similarity;
mod report;

pub use image_similarity::{is_metric, is_metric_classes, is_metric_oracle, mse, ORACLE_MAX_SIDE};
pub use report::{
    evaluate, load_predictions, summary_table, EvalReport, FrameScore, HorizonAggregate, MeanSe,
    PredictionEntry, PredictionManifest, PREDICTIONS_FILE,
};
