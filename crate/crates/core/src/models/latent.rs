use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::{Error, Result};

/// Clamp applied to every encoder log-variance.
pub const LOGVAR_RANGE: (f64, f64) = (-10.0, 10.0);

/// A batch of factorized latents: `style` is `[N, S]`, `content` is `[N, C, h, w]`.
#[derive(Debug, Clone)]
pub struct LatentPair {
    pub style: Tensor,
    pub content: Tensor,
}

/// Diagonal-Gaussian posterior for a batch.
#[derive(Debug, Clone)]
pub struct PosteriorParams {
    pub mu_style: Tensor,
    pub logvar_style: Tensor,
    pub mu_content: Tensor,
    pub logvar_content: Tensor,
}

impl PosteriorParams {
    pub fn means(&self) -> LatentPair {
        LatentPair {
            style: self.mu_style.clone(),
            content: self.mu_content.clone(),
        }
    }

    pub fn batch_size(&self) -> Result<usize> {
        Ok(self.mu_style.dim(0)?)
    }
}

/// One latent, flattened to host memory (content in C·h·w row-major order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub style: Vec<f32>,
    pub content: Vec<f32>,
}

impl Latent {
    pub fn zeros(config: &ModelConfig) -> Self {
        Latent {
            style: vec![0.0; config.style_dim],
            content: vec![0.0; config.content_len()],
        }
    }

    /// Euclidean norm over both parts.
    pub fn norm(&self) -> f64 {
        self.style
            .iter()
            .chain(&self.content)
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.style.iter().chain(&self.content).all(|v| v.is_finite())
    }

    /// `(1 − α)·self + α·other`, elementwise in f32.
    pub fn lerp(&self, other: &Latent, alpha: f32) -> Latent {
        let mix = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(&x, &y)| (1.0 - alpha) * x + alpha * y).collect();
        Latent {
            style: mix(&self.style, &other.style),
            content: mix(&self.content, &other.content),
        }
    }
}

impl LatentPair {
    pub fn from_latents(latents: &[Latent], config: &ModelConfig, dtype: DType, device: &Device) -> Result<Self> {
        let n = latents.len();
        let (s, cl) = (config.style_dim, config.content_len());
        let mut style = Vec::with_capacity(n * s);
        let mut content = Vec::with_capacity(n * cl);
        for l in latents {
            if l.style.len() != s || l.content.len() != cl {
                return Err(Error::Shape(format!(
                    "latent has {}+{} entries, model expects {s}+{cl}",
                    l.style.len(),
                    l.content.len()
                )));
            }
            style.extend_from_slice(&l.style);
            content.extend_from_slice(&l.content);
        }
        let k = config.content_size;
        Ok(LatentPair {
            style: Tensor::from_vec(style, (n, s), device)?.to_dtype(dtype)?,
            content: Tensor::from_vec(content, (n, config.content_channels, k, k), device)?.to_dtype(dtype)?,
        })
    }

    pub fn to_latents(&self) -> Result<Vec<Latent>> {
        let style = self.style.to_dtype(DType::F32)?.to_vec2::<f32>()?;
        let content = self.content.to_dtype(DType::F32)?.flatten_from(1)?.to_vec2::<f32>()?;
        Ok(style
            .into_iter()
            .zip(content)
            .map(|(style, content)| Latent { style, content })
            .collect())
    }

    pub fn batch_size(&self) -> Result<usize> {
        Ok(self.style.dim(0)?)
    }

    pub fn detach(&self) -> Self {
        LatentPair {
            style: self.style.detach(),
            content: self.content.detach(),
        }
    }
}

/// Standard-normal noise of the given shape drawn from `rng`.
pub fn standard_normal(shape: &[usize], dtype: DType, device: &Device, rng: &mut impl Rng) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(v, shape, device)?.to_dtype(dtype)?)
}

/// `z = μ + exp(logvar / 2) ⊙ ε` with `ε ~ N(0, I)` drawn from `rng`.
pub fn reparameterize(p: &PosteriorParams, rng: &mut impl Rng) -> Result<LatentPair> {
    let sample = |mu: &Tensor, logvar: &Tensor, rng: &mut dyn rand::RngCore| -> Result<Tensor> {
        let eps = standard_normal(mu.dims(), mu.dtype(), mu.device(), &mut RngWrap(rng))?;
        Ok((mu + (logvar * 0.5)?.exp()?.mul(&eps)?)?)
    };
    Ok(LatentPair {
        style: sample(&p.mu_style, &p.logvar_style, rng)?,
        content: sample(&p.mu_content, &p.logvar_content, rng)?,
    })
}

/// Draws a latent batch from the N(0, I) prior.
pub fn sample_prior(config: &ModelConfig, n: usize, dtype: DType, device: &Device, rng: &mut impl Rng) -> Result<LatentPair> {
    let k = config.content_size;
    Ok(LatentPair {
        style: standard_normal(&[n, config.style_dim], dtype, device, rng)?,
        content: standard_normal(&[n, config.content_channels, k, k], dtype, device, rng)?,
    })
}

struct RngWrap<'a>(&'a mut dyn rand::RngCore);

impl rand::RngCore for RngWrap<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn params(mu: f64, logvar: f64, s: usize, c: usize) -> PosteriorParams {
        let d = Device::Cpu;
        PosteriorParams {
            mu_style: Tensor::full(mu, (1, s), &d).unwrap(),
            logvar_style: Tensor::full(logvar, (1, s), &d).unwrap(),
            mu_content: Tensor::full(mu, (1, c, 2, 2), &d).unwrap(),
            logvar_content: Tensor::full(logvar, (1, c, 2, 2), &d).unwrap(),
        }
    }

    #[test]
    fn vanishing_variance_returns_the_mean() {
        let p = params(1.5, -10.0, 4, 2);
        let mut rng = stream_rng(1, 0);
        let z = reparameterize(&p, &mut rng).unwrap();
        let mut noise = stream_rng(1, 0);
        let eps = standard_normal(&[1, 4], DType::F64, &Device::Cpu, &mut noise).unwrap();
        let eps_norm = eps.sqr().unwrap().sum_all().unwrap().sqrt().unwrap().to_scalar::<f64>().unwrap();
        let diff = (z.style - 1.5).unwrap().sqr().unwrap().sum_all().unwrap().sqrt().unwrap().to_scalar::<f64>().unwrap();
        assert!(diff <= 1e-2 * eps_norm, "{diff} vs {eps_norm}");
    }

    #[test]
    fn standard_posterior_has_zero_mean_samples() {
        let n = 10_000;
        let p = params(0.0, 0.0, 3, 1);
        let mut rng = stream_rng(9, 0);
        let mut sums = [0.0f64; 3];
        for _ in 0..n {
            let z = reparameterize(&p, &mut rng).unwrap();
            let v = z.style.to_vec2::<f64>().unwrap();
            for (s, x) in sums.iter_mut().zip(&v[0]) {
                *s += x;
            }
        }
        // 5σ/√n with σ = 1
        let bound = 5.0 / (n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64).abs() < bound);
        }
    }

    #[test]
    fn fixed_seed_is_repeatable() {
        let p = params(0.3, 0.2, 5, 2);
        let a = reparameterize(&p, &mut stream_rng(4, 4)).unwrap();
        let b = reparameterize(&p, &mut stream_rng(4, 4)).unwrap();
        assert_eq!(
            a.content.flatten_all().unwrap().to_vec1::<f64>().unwrap(),
            b.content.flatten_all().unwrap().to_vec1::<f64>().unwrap()
        );
    }

    #[test]
    fn host_round_trip_and_lerp() {
        let cfg = ModelConfig::tiny();
        let a = Latent {
            style: vec![1.0, 2.0, 3.0],
            content: vec![0.5; cfg.content_len()],
        };
        let b = Latent::zeros(&cfg);
        let pair = LatentPair::from_latents(&[a.clone(), b.clone()], &cfg, DType::F32, &Device::Cpu).unwrap();
        assert_eq!(pair.to_latents().unwrap(), vec![a.clone(), b.clone()]);
        assert_eq!(a.lerp(&b, 0.0), a);
        assert_eq!(a.lerp(&b, 1.0), b);
        assert!((a.norm() - (14.0f64 + 0.25 * 8.0).sqrt()).abs() < 1e-12);
    }
}
