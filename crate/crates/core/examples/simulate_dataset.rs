//! Generates the 10-scene smoke dataset and prints per-split class statistics.
//!
//!     cargo run --release --example simulate_dataset -- [out_dir] [seed]

use std::path::PathBuf;

use latent_ogm::gridworld::{generate_dataset, load_sequence, SimConfig, Split};
use latent_ogm::ogm::{write_sequence, Thresholds};

fn main() -> latent_ogm::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/smoke".into()));
    let seed: u64 = args.next().map(|s| s.parse().expect("seed must be an integer")).unwrap_or(0);

    let config = SimConfig::smoke();
    let manifest = generate_dataset(&config, seed, &out)?;
    println!("{} scenes of {} frames in {}", manifest.sequences.len(), config.frames_per_scene, out.display());
    println!("config hash {}", manifest.config_hash);

    for split in [Split::Train, Split::Val, Split::Test] {
        let mut counts = [0usize; 3];
        let mut scenes = 0;
        for entry in manifest.entries(split) {
            let seq = load_sequence(&out, entry)?;
            for frame in seq.frames() {
                let h = frame.classify(Thresholds::default())?.histogram();
                for (c, n) in counts.iter_mut().zip(h) {
                    *c += n;
                }
            }
            scenes += 1;
        }
        let total: usize = counts.iter().sum::<usize>().max(1);
        println!(
            "{split:?}: {scenes} scenes, free {:.1}%  occluded {:.1}%  occupied {:.1}%",
            100.0 * counts[0] as f64 / total as f64,
            100.0 * counts[1] as f64 / total as f64,
            100.0 * counts[2] as f64 / total as f64,
        );
    }

    // A montage of the first scene's first 20 frames for a quick look.
    let first = load_sequence(&out, &manifest.sequences[0])?;
    let frames: Vec<_> = first.frames().iter().take(20).cloned().collect();
    latent_ogm::analysis::save_montage(&frames, 10, out.join("scene_0000_montage.png"))?;
    write_sequence(&first, out.join("copy_of_scene_0000.ogms"))?;
    println!("wrote {}", out.join("scene_0000_montage.png").display());
    Ok(())
}
