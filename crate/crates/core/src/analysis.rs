//! Latent-space experiments: prior samples, style/content swaps and
//! interpolation, with centroid and class-count statistics so the
//! qualitative claims can be checked numerically.

use std::path::Path;

use candle_core::Tensor;
use image::{GrayImage, Luma};
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::models::{sample_prior as draw_prior, Latent, LatentPair, Stage1Model};
use crate::ogm::{Class, Ogm, Thresholds};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

/// Which latent a swap takes from the second frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapPart {
    Style,
    Content,
}

impl std::str::FromStr for SwapPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "style" => Ok(SwapPart::Style),
            "content" => Ok(SwapPart::Content),
            other => Err(Error::Config(format!("swap part must be style or content, got {other:?}"))),
        }
    }
}

/// Decodes `n` latents drawn from N(0, I) with the prior stream of `seed`.
pub fn sample_prior(model: &Stage1Model, n: usize, seed: u64) -> Result<Vec<Ogm>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = stream_rng(seed, streams::PRIOR);
    let z = draw_prior(model.config(), n, model.dtype(), model.device(), &mut rng)?;
    model.generate_ogms(&z)
}

/// Posterior mean of a single frame.
pub fn encode_one(model: &Stage1Model, x: &Ogm) -> Result<Latent> {
    let mut l = model.encode_ogms(&[x])?.means().to_latents()?;
    Ok(l.remove(0))
}

/// Decodes a single latent. Every decode in this module goes through here
/// with a batch of one, so results are comparable bit for bit.
pub fn decode_one(model: &Stage1Model, z: &Latent) -> Result<Ogm> {
    let pair = LatentPair::from_latents(std::slice::from_ref(z), model.config(), model.dtype(), model.device())?;
    let mut out = model.generate_ogms(&pair)?;
    Ok(out.remove(0))
}

/// `decode(encode(x))` using posterior means.
pub fn reconstruct_one(model: &Stage1Model, x: &Ogm) -> Result<Ogm> {
    decode_one(model, &encode_one(model, x)?)
}

/// Decodes `x_a`'s latents with the `which` part replaced by `x_b`'s.
pub fn swap_latents(model: &Stage1Model, x_a: &Ogm, x_b: &Ogm, which: SwapPart) -> Result<Ogm> {
    let b = encode_one(model, x_b)?;
    swap_with(model, x_a, &b, which)
}

/// Like [`swap_latents`], with the donor latent given directly (for example
/// drawn from the prior).
pub fn swap_with(model: &Stage1Model, x_a: &Ogm, donor: &Latent, which: SwapPart) -> Result<Ogm> {
    let mut z = encode_one(model, x_a)?;
    match which {
        SwapPart::Style => z.style = donor.style.clone(),
        SwapPart::Content => z.content = donor.content.clone(),
    }
    decode_one(model, &z)
}

/// Interpolation weights `k / (n − 1)` for `k = 0..n`.
pub fn alphas(n_steps: usize) -> Vec<f32> {
    (0..n_steps).map(|k| k as f32 / (n_steps - 1) as f32).collect()
}

/// Linear interpolation of both latents between two frames. The endpoints
/// are decoded from the unmodified latents, so they equal the
/// reconstructions of `x_a` and `x_b` bit for bit.
pub fn interpolate(model: &Stage1Model, x_a: &Ogm, x_b: &Ogm, n_steps: usize) -> Result<Vec<Ogm>> {
    if n_steps < 2 {
        return Err(Error::InvalidInput("interpolation needs at least two steps".into()));
    }
    let a = encode_one(model, x_a)?;
    let b = encode_one(model, x_b)?;
    let last = n_steps - 1;
    alphas(n_steps)
        .into_iter()
        .enumerate()
        .map(|(k, alpha)| {
            let z = if k == 0 {
                a.clone()
            } else if k == last {
                b.clone()
            } else {
                a.lerp(&b, alpha)
            };
            decode_one(model, &z)
        })
        .collect()
}

/// Centroid (row, col) of the cells classified as occupied.
pub fn occupied_centroid(x: &Ogm, thresholds: Thresholds) -> Result<Option<(f64, f64)>> {
    Ok(x.classify(thresholds)?.centroid(Class::Occupied))
}

/// Fraction of cells per class, in [`Class::ALL`] order.
pub fn class_fractions(frames: &[Ogm], thresholds: Thresholds) -> Result<[f64; 3]> {
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for f in frames {
        let h = f.classify(thresholds)?.histogram();
        for (c, v) in counts.iter_mut().zip(h) {
            *c += v;
        }
        total += f.spec().cells();
    }
    Ok(counts.map(|c| c as f64 / total.max(1) as f64))
}

/// Whether the sequence never decreases, or never increases.
pub fn is_monotone(xs: &[f64]) -> bool {
    let up = xs.windows(2).all(|w| w[1] >= w[0]);
    let down = xs.windows(2).all(|w| w[1] <= w[0]);
    up || down
}

/// Summary of an interpolation along one grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationStats {
    pub alphas: Vec<f32>,
    /// Occupied-cell centroids, `None` where a frame has no occupied cell.
    pub centroids: Vec<Option<(f64, f64)>>,
    /// Column coordinates of the centroids (the motion axis for agents driving along x).
    pub columns: Vec<f64>,
    pub monotone_columns: bool,
}

pub fn interpolation_stats(frames: &[Ogm], thresholds: Thresholds) -> Result<InterpolationStats> {
    let centroids = frames
        .iter()
        .map(|f| occupied_centroid(f, thresholds))
        .collect::<Result<Vec<_>>>()?;
    let complete = centroids.iter().all(Option::is_some);
    let columns: Vec<f64> = centroids.iter().flatten().map(|c| c.1).collect();
    Ok(InterpolationStats {
        alphas: alphas(frames.len()),
        monotone_columns: complete && is_monotone(&columns),
        centroids,
        columns,
    })
}

/// Averages over random frame pairs of how much a swap moves the output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapStats {
    pub pairs: usize,
    /// Pairs where both frames and the content-swap output have occupied cells.
    pub centroid_pairs: usize,
    /// Share of those where the content-swap centroid is closer (Manhattan) to `x_b`'s than to `x_a`'s.
    pub content_closer_to_b: f64,
    /// Mean |occupied count(swap) − occupied count(reconstruction of x_a)|.
    pub content_count_change: f64,
    pub style_count_change: f64,
}

fn occupied_count(x: &Ogm, t: Thresholds) -> Result<usize> {
    Ok(x.classify(t)?.histogram()[Class::Occupied.index()])
}

fn manhattan(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).abs() + (a.1 - b.1).abs()
}

pub fn swap_statistics(model: &Stage1Model, frames: &[Ogm], pairs: usize, thresholds: Thresholds, seed: u64) -> Result<SwapStats> {
    if frames.len() < 2 {
        return Err(Error::InvalidInput("need at least two frames".into()));
    }
    let mut rng = stream_rng(seed, streams::PRIOR);
    let idx: Vec<usize> = (0..frames.len()).collect();
    let (mut closer, mut with_centroids) = (0usize, 0usize);
    let (mut content_change, mut style_change) = (0.0, 0.0);
    for _ in 0..pairs {
        let pick: Vec<&usize> = idx.choose_multiple(&mut rng, 2).collect();
        let (a, b) = (&frames[*pick[0]], &frames[*pick[1]]);
        let za = encode_one(model, a)?;
        let zb = encode_one(model, b)?;
        let recon_a = decode_one(model, &za)?;
        let content = decode_one(model, &Latent { style: za.style.clone(), content: zb.content.clone() })?;
        let style = decode_one(model, &Latent { style: zb.style.clone(), content: za.content.clone() })?;
        let base = occupied_count(&recon_a, thresholds)? as f64;
        content_change += (occupied_count(&content, thresholds)? as f64 - base).abs();
        style_change += (occupied_count(&style, thresholds)? as f64 - base).abs();
        if let (Some(ca), Some(cb), Some(cs)) = (
            occupied_centroid(a, thresholds)?,
            occupied_centroid(b, thresholds)?,
            occupied_centroid(&content, thresholds)?,
        ) {
            with_centroids += 1;
            if manhattan(cs, cb) < manhattan(cs, ca) {
                closer += 1;
            }
        }
    }
    let n = pairs.max(1) as f64;
    Ok(SwapStats {
        pairs,
        centroid_pairs: with_centroids,
        content_closer_to_b: closer as f64 / with_centroids.max(1) as f64,
        content_count_change: content_change / n,
        style_count_change: style_change / n,
    })
}

/// Grayscale montage: free cells white, occupied black, occluded grey,
/// with a one-pixel separator between tiles.
pub fn montage(frames: &[Ogm], columns: usize) -> Result<GrayImage> {
    let first = frames.first().ok_or_else(|| Error::InvalidInput("montage of zero frames".into()))?;
    let spec = first.spec();
    let cols = columns.clamp(1, frames.len());
    let rows = frames.len().div_ceil(cols);
    let (w, h) = (spec.width as u32, spec.height as u32);
    let mut img = GrayImage::from_pixel(cols as u32 * (w + 1) + 1, rows as u32 * (h + 1) + 1, Luma([96]));
    for (i, f) in frames.iter().enumerate() {
        if f.spec() != spec {
            return Err(Error::Shape("montage frames must share one grid".into()));
        }
        let (x0, y0) = ((i % cols) as u32 * (w + 1) + 1, (i / cols) as u32 * (h + 1) + 1);
        for r in 0..spec.height {
            for c in 0..spec.width {
                let v = ((1.0 - f.get(r, c)) * 255.0).round() as u8;
                img.put_pixel(x0 + c as u32, y0 + r as u32, Luma([v]));
            }
        }
    }
    Ok(img)
}

pub fn save_montage(frames: &[Ogm], columns: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    montage(frames, columns)?.save(path)?;
    Ok(())
}

/// Stacks decoded frames into one tensor, for callers that want batch math.
pub fn frames_tensor(model: &Stage1Model, frames: &[Ogm]) -> Result<Tensor> {
    model.to_tensor(&frames.iter().collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use candle_core::DType;

    fn model() -> Stage1Model {
        Stage1Model::new(ModelConfig::tiny(), DType::F32, 2).unwrap()
    }

    fn frame(seed: u64) -> Ogm {
        use rand::Rng;
        let g = ModelConfig::tiny().grid;
        let mut rng = stream_rng(seed, 9);
        Ogm::new(g, (0..g.cells()).map(|_| [0.0, 0.5, 1.0][rng.random_range(0..3)]).collect()).unwrap()
    }

    #[test]
    fn prior_samples_are_valid_and_seeded() {
        let m = model();
        let a = sample_prior(&m, 16, 3).unwrap();
        assert_eq!(a.len(), 16);
        assert!(a.iter().flat_map(|o| o.values()).all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, sample_prior(&m, 16, 3).unwrap());
        assert_ne!(a, sample_prior(&m, 16, 4).unwrap());
        assert!(sample_prior(&m, 0, 3).is_err());
    }

    #[test]
    fn identity_swap_is_reconstruction() {
        let m = model();
        let x = frame(1);
        let r = reconstruct_one(&m, &x).unwrap();
        assert_eq!(swap_latents(&m, &x, &x, SwapPart::Style).unwrap(), r);
        assert_eq!(swap_latents(&m, &x, &x, SwapPart::Content).unwrap(), r);
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let m = model();
        let (a, b) = (frame(2), frame(3));
        let path = interpolate(&m, &a, &b, 5).unwrap();
        assert_eq!(path.len(), 5);
        let bits = |o: &Ogm| o.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&path[0]), bits(&reconstruct_one(&m, &a).unwrap()));
        assert_eq!(bits(&path[4]), bits(&reconstruct_one(&m, &b).unwrap()));
        assert!(interpolate(&m, &a, &b, 1).is_err());
        assert_eq!(alphas(3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn monotone_and_centroid_helpers() {
        assert!(is_monotone(&[1.0, 2.0, 2.0, 5.0]));
        assert!(is_monotone(&[3.0, 1.0]));
        assert!(!is_monotone(&[1.0, 3.0, 2.0]));
        let g = ModelConfig::tiny().grid;
        let mut v = vec![0.0; g.cells()];
        v[2 * 8 + 3] = 1.0;
        v[2 * 8 + 5] = 1.0;
        let o = Ogm::new(g, v).unwrap();
        assert_eq!(occupied_centroid(&o, Thresholds::default()).unwrap(), Some((2.0, 4.0)));
        let f = class_fractions(&[o], Thresholds::default()).unwrap();
        assert_eq!(f, [62.0 / 64.0, 0.0, 2.0 / 64.0]);
        let stats = interpolation_stats(&[Ogm::filled(g, 0.0).unwrap(), Ogm::filled(g, 1.0).unwrap()], Thresholds::default()).unwrap();
        assert!(!stats.monotone_columns);
    }

    #[test]
    fn montage_layout() {
        let g = ModelConfig::tiny().grid;
        let frames = vec![Ogm::filled(g, 0.0).unwrap(), Ogm::filled(g, 1.0).unwrap(), Ogm::filled(g, 0.5).unwrap()];
        let img = montage(&frames, 2).unwrap();
        assert_eq!(img.dimensions(), (2 * 9 + 1, 2 * 9 + 1));
        assert_eq!(img.get_pixel(1, 1).0, [255]);
        assert_eq!(img.get_pixel(10, 1).0, [0]);
        assert_eq!(img.get_pixel(1, 10).0, [128]);
        let dir = tempfile::tempdir().unwrap();
        save_montage(&frames, 2, dir.path().join("m.png")).unwrap();
        assert!(dir.path().join("m.png").exists());
    }

    #[test]
    fn swap_statistics_run() {
        let m = model();
        let frames: Vec<Ogm> = (0..6).map(frame).collect();
        let s = swap_statistics(&m, &frames, 5, Thresholds::default(), 0).unwrap();
        assert_eq!(s.pairs, 5);
        assert!(s.content_count_change >= 0.0);
    }
}
