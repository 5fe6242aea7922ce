//! Drives every subcommand end to end on an 8×8 world with a tiny model.

use std::path::Path;

use latent_ogm::cli::{main_with_args, RunManifest, EXIT_DATA, EXIT_OK, EXIT_USAGE, RUN_MANIFEST_FILE};
use latent_ogm::metrics::EvalReport;
use latent_ogm::models::ModelConfig;
use serde_json::json;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["latent-ogm"];
    argv.extend_from_slice(args);
    main_with_args(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(path: &Path, value: serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

fn manifest(path: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (sim, repr, pred) = (root.join("sim.json"), root.join("repr.json"), root.join("pred.json"));
    let tiny = ModelConfig::tiny();
    write(
        &sim,
        json!({
            "grid": tiny.grid, "n_scenes": 6, "frames_per_scene": 24,
            "history": 3, "horizon": 4, "n_rays": 90
        }),
    );
    write(
        &repr,
        json!({ "model": tiny, "beta": 0.001, "steps": 6, "batch_size": 4, "checkpoint_every": 3 }),
    );
    write(
        &pred,
        json!({ "hidden": 8, "style_features": 4, "content_features": 2, "max_epochs": 2, "batch_size": 8 }),
    );
    let data = root.join("data");
    let stage1 = root.join("repr/model.ogmc");
    let latents = root.join("latents");
    let predictor = root.join("pred/predictor_final.ogmc");
    let (preds, copies) = (root.join("preds"), root.join("copies"));
    let report = root.join("eval/report.json");

    assert_eq!(run(&["simulate", "--config", s(&sim), "--seed", "3", "--out", s(&data)]), EXIT_OK);
    let m = manifest(&data.join(RUN_MANIFEST_FILE));
    assert_eq!(m.seed, Some(3));
    assert_eq!(m.command, "simulate");
    assert!(m.outputs.keys().any(|k| k.ends_with("manifest.json")));
    assert!(m.outputs.keys().filter(|k| k.ends_with(".ogms")).count() == 6);

    std::fs::create_dir_all(stage1.parent().unwrap()).unwrap();
    assert_eq!(run(&["train-repr", "--config", s(&repr), "--data", s(&data), "--out", s(&stage1)]), EXIT_OK);
    assert!(stage1.exists());
    assert!(root.join("repr/train_log.csv").exists());
    assert!(root.join("repr/checkpoints/step_000003.ogmc").exists());
    let m = manifest(&root.join("repr/model.ogmc.run_manifest.json"));
    assert_eq!(m.config["steps"], 6);
    assert!(m.outputs.contains_key(s(&stage1)));

    assert_eq!(run(&["encode", "--encoder", s(&stage1), "--data", s(&data), "--out", s(&latents)]), EXIT_OK);
    std::fs::create_dir_all(predictor.parent().unwrap()).unwrap();
    assert_eq!(
        run(&["train-pred", "--config", s(&pred), "--latents", s(&latents), "--out", s(&predictor)]),
        EXIT_OK
    );
    assert!(predictor.exists());
    assert!(root.join("pred/pred_log.csv").exists());

    assert_eq!(
        run(&[
            "predict", "--encoder", s(&stage1), "--generator", s(&stage1), "--predictor", s(&predictor),
            "--data", s(&data), "--out", s(&preds),
        ]),
        EXIT_OK
    );
    assert_eq!(run(&["copy-last", "--data", s(&data), "--out", s(&copies)]), EXIT_OK);
    assert_eq!(
        run(&["evaluate", "--pred", s(&preds), "--truth", s(&data), "--out", s(&report), "--compare", s(&copies)]),
        EXIT_OK
    );
    let r: EvalReport = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.method, "latent-predictor");
    assert_eq!(r.per_horizon.len(), 4);
    assert!(r.overall_is.mean.is_finite());
    assert!(root.join("eval/report.csv").exists());
    assert!(root.join("eval/report_horizon.csv").exists());

    // Rollouts past the horizon use the same command.
    let long = root.join("rollout");
    assert_eq!(
        run(&[
            "predict", "--encoder", s(&stage1), "--predictor", s(&predictor), "--data", s(&data),
            "--rollout", "9", "--split", "train", "--out", s(&long),
        ]),
        EXIT_OK
    );

    let analysis = root.join("analysis");
    assert_eq!(run(&["analyze", "sample", "--generator", s(&stage1), "--n", "4", "--out", s(&analysis)]), EXIT_OK);
    assert_eq!(
        run(&[
            "analyze", "swap", "--encoder", s(&stage1), "--data", s(&data), "--which", "content",
            "--pairs", "4", "--show", "2", "--split", "train", "--out", s(&analysis),
        ]),
        EXIT_OK
    );
    assert_eq!(
        run(&[
            "analyze", "swap", "--encoder", s(&stage1), "--data", s(&data), "--which", "style",
            "--donor", "prior", "--show", "2", "--out", s(&analysis),
        ]),
        EXIT_OK
    );
    assert_eq!(
        run(&[
            "analyze", "interpolate", "--encoder", s(&stage1), "--data", s(&data), "--single-agent",
            "--gap", "2", "--steps", "3", "--out", s(&analysis),
        ]),
        EXIT_OK
    );
    let pngs = std::fs::read_dir(&analysis)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 4);

    let html = root.join("report.html");
    assert_eq!(run(&["report", "--runs", s(root), "--out", s(&html)]), EXIT_OK);
    let page = std::fs::read_to_string(&html).unwrap();
    assert!(page.contains("Representation training"));
    assert!(page.contains("Prediction quality"));
    assert!(page.contains("<img"));

    // A predictor trained on one stage-1 model refuses another.
    let other = root.join("other/model.ogmc");
    std::fs::create_dir_all(other.parent().unwrap()).unwrap();
    write(&repr, json!({ "model": tiny, "beta": 0.001, "steps": 2, "batch_size": 4, "seed": 9 }));
    assert_eq!(run(&["train-repr", "--config", s(&repr), "--data", s(&data), "--out", s(&other)]), EXIT_OK);
    assert_eq!(
        run(&[
            "predict", "--encoder", s(&other), "--predictor", s(&predictor), "--data", s(&data),
            "--out", s(&root.join("bad")),
        ]),
        EXIT_DATA
    );
}

#[test]
fn evaluating_truth_against_itself_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let sim = root.join("sim.json");
    write(&sim, json!({ "grid": ModelConfig::tiny().grid, "n_scenes": 3, "frames_per_scene": 20, "n_rays": 90 }));
    let data = root.join("data");
    assert_eq!(run(&["simulate", "--config", s(&sim), "--out", s(&data)]), EXIT_OK);
    let out = root.join("self.json");
    assert_eq!(run(&["evaluate", "--pred", s(&data), "--truth", s(&data), "--out", s(&out)]), EXIT_OK);
    let r: EvalReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.overall_is.mean, 0.0);
    assert_eq!(r.overall_mse.mean, 0.0);
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(run(&["no-such-command"]), EXIT_USAGE);
    assert_eq!(run(&["simulate"]), EXIT_USAGE);
    assert_eq!(run(&["analyze", "swap", "--which", "both"]), EXIT_USAGE);

    let bad = root.join("bad.json");
    write(&bad, json!({ "n_scenes": 2, "unknown_knob": true }));
    assert_eq!(run(&["simulate", "--config", s(&bad), "--out", s(&root.join("x"))]), EXIT_USAGE);
    write(&bad, json!({ "frames_per_scene": 10 }));
    assert_eq!(run(&["simulate", "--config", s(&bad), "--out", s(&root.join("y"))]), EXIT_USAGE);

    std::fs::write(root.join("garbage.ogmc"), b"not a checkpoint").unwrap();
    assert_eq!(
        run(&["encode", "--encoder", s(&root.join("garbage.ogmc")), "--data", s(root), "--out", s(&root.join("z"))]),
        EXIT_DATA
    );
}
