//! Latent-space experiments on a trained stage-1 model: prior samples,
//! style/content swaps and interpolation between frames of one scene.
//!
//!     cargo run --release --example latent_analysis -- [stage1.ogmc] [data_dir] [out_dir]

use std::path::PathBuf;

use candle_core::DType;
use latent_ogm::analysis::{
    class_fractions, interpolate, interpolation_stats, sample_prior, save_montage, swap_latents, swap_statistics,
    SwapPart,
};
use latent_ogm::gridworld::{render_scene, single_agent_world, DatasetManifest, SimConfig, Split};
use latent_ogm::models::Stage1Model;
use latent_ogm::ogm::Thresholds;
use latent_ogm::repr_train::load_frames;

fn main() -> latent_ogm::Result<()> {
    let mut args = std::env::args().skip(1);
    let stage1_path = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/repr/stage1.ogmc".into()));
    let data = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/repr/data".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/analysis".into()));
    std::fs::create_dir_all(&out).expect("create output directory");

    let (model, _) = Stage1Model::load(&stage1_path, DType::F32)?;
    let t = Thresholds::default();
    let manifest = DatasetManifest::load(&data)?;
    let train = load_frames(&data, &manifest, Split::Train)?;
    let test = load_frames(&data, &manifest, Split::Test)?;

    let samples = sample_prior(&model, 16, 0)?;
    save_montage(&samples, 4, out.join("prior_samples.png"))?;
    let [f, o, c] = class_fractions(&samples, t)?;
    let [tf, to, tc] = class_fractions(&train, t)?;
    println!("prior samples: free {f:.3} occluded {o:.3} occupied {c:.3}");
    println!("training data: free {tf:.3} occluded {to:.3} occupied {tc:.3}");

    let (a, b) = (&test[0], &test[test.len() / 2]);
    let tiles = vec![
        a.clone(),
        b.clone(),
        swap_latents(&model, a, b, SwapPart::Content)?,
        swap_latents(&model, a, b, SwapPart::Style)?,
    ];
    save_montage(&tiles, 4, out.join("swap.png"))?;
    let stats = swap_statistics(&model, &test, 100, t, 0)?;
    println!(
        "content swaps closer to the donor in {:.0}% of {} pairs; mean occupied-count change content {:.1}, style {:.1}",
        100.0 * stats.content_closer_to_b,
        stats.centroid_pairs,
        stats.content_count_change,
        stats.style_count_change
    );

    // One agent passing a parked ego: frames five apart.
    let sim = SimConfig { grid: model.config().grid, ..SimConfig::smoke() };
    let scene = render_scene(&sim, single_agent_world(&sim, 5.0, 6.0)?, 12)?;
    let (x0, x1) = (&scene.frames()[2], &scene.frames()[7]);
    let path = interpolate(&model, x0, x1, 8)?;
    save_montage(&path, 8, out.join("interpolation.png"))?;
    let s = interpolation_stats(&path, t)?;
    println!("interpolated centroid columns {:?}, monotone: {}", s.columns, s.monotone_columns);
    Ok(())
}
