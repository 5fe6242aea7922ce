//! Trains the stage-1 VAE-GAN on the smoke dataset and compares held-out
//! reconstructions against a shuffled-pair control.
//!
//!     cargo run --release --example train_representation -- [steps] [out_dir]
//!
//! 500 steps take roughly ten minutes on one CPU core.

use std::path::PathBuf;

use latent_ogm::gridworld::{generate_dataset, DatasetManifest, SimConfig, Split, MANIFEST_FILE};
use latent_ogm::ogm::Thresholds;
use latent_ogm::repr_train::{compare_reconstructions, load_frames, train_from_dataset, ReprTrainConfig};

fn main() -> latent_ogm::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map(|s| s.parse().expect("steps must be an integer")).unwrap_or(200);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/repr".into()));
    let data = out.join("data");
    if !data.join(MANIFEST_FILE).exists() {
        generate_dataset(&SimConfig::smoke(), 0, &data)?;
    }

    let config = ReprTrainConfig {
        steps,
        ..ReprTrainConfig::desk()
    };
    let every = (steps / 10).max(1);
    let outcome = train_from_dataset(&data, &config, Some(&out), &mut |row| {
        if row.step % every == 0 {
            println!(
                "step {:>4}  recon {:.4}  kl {:>7.2}  g {:.3}  d {:.3}",
                row.step,
                row.recon,
                row.kl,
                row.g_loss.unwrap_or(f64::NAN),
                row.d_loss.unwrap_or(f64::NAN)
            );
        }
    })?;

    let first = outcome.log.first().map(|r| r.recon).unwrap_or(f64::NAN);
    let tail: Vec<f64> = outcome.log.iter().rev().take(10).map(|r| r.recon).collect();
    let last = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    println!("reconstruction loss {first:.4} -> {last:.4} ({:.1}% of initial)", 100.0 * last / first);

    let manifest = DatasetManifest::load(&data)?;
    let held_out = load_frames(&data, &manifest, Split::Val)?;
    let cmp = compare_reconstructions(&outcome.model, &held_out, Thresholds::default(), 0)?;
    println!(
        "held-out IS over {} frames: reconstruction {:.2}, shuffled control {:.2}",
        cmp.frames, cmp.reconstruction_is, cmp.shuffled_is
    );
    println!("checkpoint {}", outcome.checkpoint.unwrap().display());
    Ok(())
}
