//! The IS metric on a rendered scene: how quickly the last observed grid
//! stops describing the future, step by step.
//!
//!     cargo run --release --example image_similarity

use latent_ogm::gridworld::{render_scene, scene_world, SimConfig};
use latent_ogm::metrics::{is_metric, is_metric_oracle, mse};
use latent_ogm::ogm::{Ogm, Thresholds};

fn main() -> latent_ogm::Result<()> {
    let config = SimConfig::smoke();
    let scene = render_scene(&config, scene_world(&config, 0, 0)?, config.history + config.horizon)?;
    let t = Thresholds::default();
    let last = &scene.frames()[config.history - 1];

    println!("copy-last baseline on one window of scene 0");
    println!("{:>4} {:>8} {:>8}", "t", "IS", "MSE");
    for k in 1..=config.horizon {
        let future = &scene.frames()[config.history - 1 + k];
        println!("{k:>4} {:>8.3} {:>8.5}", is_metric(last, future, t)?, mse(last, future)?);
    }

    // The fast distance-transform path agrees with the all-pairs definition.
    let spec = latent_ogm::ogm::GridSpec::new(16, 16, 1.0)?;
    let crop = |o: &Ogm| -> latent_ogm::Result<Ogm> {
        let vals = (0..16).flat_map(|r| (0..16).map(move |c| (r, c))).map(|(r, c)| o.get(r + 24, c + 24)).collect();
        Ogm::new(spec, vals)
    };
    let (a, b) = (crop(last)?, crop(&scene.frames()[config.history + 9])?);
    println!(
        "16x16 crop: fast IS {:.4}, all-pairs IS {:.4}",
        is_metric(&a, &b, t)?,
        is_metric_oracle(&a, &b, t)?
    );
    Ok(())
}
