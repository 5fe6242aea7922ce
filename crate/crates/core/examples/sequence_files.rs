//! Reading and writing the binary containers: `OGMS` grid sequences and
//! `LATS` latent sequences, including what a corrupted file looks like.
//!
//!     cargo run --release --example sequence_files

use latent_ogm::gridworld::{render_scene, scene_world, SimConfig};
use latent_ogm::latent_predict::{decode_latents, encode_latents, LatentSequence};
use latent_ogm::models::Latent;
use latent_ogm::ogm::{decode_sequence, encode_sequence};

fn main() -> latent_ogm::Result<()> {
    let config = SimConfig::smoke();
    let scene = render_scene(&config, scene_world(&config, 3, 0)?, 20)?;
    let bytes = encode_sequence(&scene);
    println!("OGMS: {} frames of {}x{} in {} bytes", scene.len(), scene.spec().width, scene.spec().height, bytes.len());
    assert_eq!(decode_sequence(&bytes).expect("valid file"), scene);

    let mut damaged = bytes.clone();
    damaged[100] ^= 0x10;
    match decode_sequence(&damaged) {
        Err(e) => println!("flipped one payload bit: {e}"),
        Ok(_) => unreachable!("the checksum covers the payload"),
    }

    let latents: Vec<Latent> = (0..20)
        .map(|t| Latent {
            style: vec![t as f32 * 0.1; 4],
            content: vec![-(t as f32); 2 * 2 * 2],
        })
        .collect();
    let seq = LatentSequence::new("scene_0000", 4, [2, 2, 2], 5, 15, latents)?;
    let buf = encode_latents(&seq);
    println!("LATS: {} latents in {} bytes", seq.len(), buf.len());
    assert_eq!(decode_latents(&buf).expect("valid file"), seq);
    match decode_latents(&buf[..buf.len() - 1]) {
        Err(e) => println!("truncated by one byte: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
