//! Stage 2 on top of a trained stage-1 checkpoint: encode the dataset, fit the
//! latent predictor, decode test-split predictions and score them against the
//! copy-last baseline.
//!
//!     cargo run --release --example train_representation -- 500
//!     cargo run --release -- simulate --out target/example-out/data100
//!     cargo run --release --example latent_prediction -- \
//!         target/example-out/repr/stage1.ogmc target/example-out/data100
//!
//! The 10-scene smoke set is enough for stage 1 but leaves the predictor
//! six training scenes, which it overfits within a couple of epochs. The
//! default 100-scene set is where it starts to beat copy-last at the last step.

use std::path::PathBuf;

use candle_core::DType;
use latent_ogm::gridworld::{DatasetManifest, Split};
use latent_ogm::latent_predict::{
    copy_last_predictions, encode_dataset, predict_ogms, train_predictor, LatentSource, PredictOptions, Predictor,
    PredictorConfig,
};
use latent_ogm::metrics::{evaluate, summary_table};
use latent_ogm::models::Stage1Model;
use latent_ogm::ogm::Thresholds;

fn main() -> latent_ogm::Result<()> {
    let mut args = std::env::args().skip(1);
    let stage1_path = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/repr/stage1.ogmc".into()));
    let data = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/repr/data".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/pred".into()));

    let (stage1, _) = Stage1Model::load(&stage1_path, DType::F32)?;
    let dataset = DatasetManifest::load(&data)?;
    let hash_before = stage1.representation_hash()?;

    let latents = out.join("latents");
    encode_dataset(&data, &stage1, LatentSource::Mean, 0, &latents)?;
    let config = PredictorConfig::for_model(stage1.config(), dataset.history, dataset.horizon);
    let outcome = train_predictor(&latents, &config, Some(&out), &mut |row| {
        println!("epoch {:>3}  train {:.5}  val {:.5}", row.epoch, row.train_loss, row.val_loss);
    })?;
    println!(
        "best val {:.5} at epoch {} (constant-latent baseline {:.5})",
        outcome.best_val_loss, outcome.best_epoch, outcome.baseline_val_loss
    );
    assert_eq!(stage1.representation_hash()?, hash_before, "stage 2 must not touch stage 1");

    let (predictor, meta) = Predictor::load(outcome.checkpoint.as_ref().unwrap())?;
    let options = PredictOptions::for_dataset(&dataset, Split::Test);
    let preds = predict_ogms(&stage1, &predictor, &meta.stage1_hash, &data, options, out.join("predictions"))?;
    let copies = copy_last_predictions(&data, options, out.join("copy_last"))?;
    let t = Thresholds::default();
    let ours = evaluate(&preds, out.join("predictions"), &dataset, &data, t)?;
    let base = evaluate(&copies, out.join("copy_last"), &dataset, &data, t)?;
    println!("{}", summary_table(&[&ours, &base]));
    ours.save_json(out.join("report.json"))?;
    base.save_json(out.join("report_copy_last.json"))?;

    // Rolling out past the training horizon.
    let long = PredictOptions {
        steps: 35,
        stride: dataset.history + 35,
        ..options
    };
    let rolled = predict_ogms(&stage1, &predictor, &meta.stage1_hash, &data, long, out.join("rollout_35"))?;
    println!("rolled {} windows out to 35 steps", rolled.entries.len());
    Ok(())
}
