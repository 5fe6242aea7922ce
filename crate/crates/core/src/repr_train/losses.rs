use candle_core::{DType, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::PosteriorParams;
use crate::nn::{leaky_relu, log_sigmoid, sigmoid, softplus, Conv2d, ParamStore};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

/// Reconstruction term of the stage-1 objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReconMode {
    Bce,
    Mse,
    RandomFeature,
}

impl std::str::FromStr for ReconMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "BCE" => Ok(ReconMode::Bce),
            "MSE" => Ok(ReconMode::Mse),
            "RANDOM_FEATURE" => Ok(ReconMode::RandomFeature),
            other => Err(Error::Config(format!("unknown reconstruction loss {other:?}"))),
        }
    }
}

/// Per-sample KL of the diagonal Gaussian posterior to N(0, I), summed over
/// style and content dimensions: `½ Σ (μ² + σ² − 1 − log σ²)`. Shape `[N]`.
pub fn kl_per_sample(p: &PosteriorParams) -> Result<Tensor> {
    let term = |mu: &Tensor, logvar: &Tensor| -> Result<Tensor> {
        let e = ((mu.sqr()? + logvar.exp()?)? - logvar)?;
        Ok(((e - 1.0)?.flatten_from(1)?.sum(1)? * 0.5)?)
    };
    Ok((term(&p.mu_style, &p.logvar_style)? + term(&p.mu_content, &p.logvar_content)?)?)
}

/// Batch mean of [`kl_per_sample`].
pub fn kl_divergence(p: &PosteriorParams) -> Result<Tensor> {
    Ok(kl_per_sample(p)?.mean_all()?)
}

/// Fixed, randomly initialised 3-layer conv extractor used as a stand-in for
/// a perceptual network. Its weights never train.
pub struct RandomFeatures {
    layers: Vec<Conv2d>,
}

impl RandomFeatures {
    pub const DEFAULT_SEED: u64 = 0x0f0e_a7u64;

    pub fn new(seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = stream_rng(seed, streams::FEATURES);
        let mut store = ParamStore::new(dtype);
        let layers = vec![
            Conv2d::new(&mut store, "f0", 1, 8, 3, 1, 1, &mut rng)?,
            Conv2d::new(&mut store, "f1", 8, 16, 3, 2, 1, &mut rng)?,
            Conv2d::new(&mut store, "f2", 16, 16, 3, 2, 1, &mut rng)?,
        ];
        Ok(RandomFeatures { layers })
    }

    pub fn activations(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            h = leaky_relu(&l.forward(&h)?)?;
            out.push(h.clone());
        }
        Ok(out)
    }

    /// Mean over layers of the mean squared activation difference.
    pub fn distance(&self, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        let a = self.activations(x)?;
        let b = self.activations(y)?;
        let mut total: Option<Tensor> = None;
        for (u, v) in a.iter().zip(&b) {
            let d = (u - v)?.sqr()?.mean_all()?;
            total = Some(match total {
                Some(t) => (t + d)?,
                None => d,
            });
        }
        Ok((total.expect("three layers") / a.len() as f64)?)
    }
}

fn check_same_shape(x: &Tensor, y: &Tensor) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::Shape(format!("target {:?} vs reconstruction {:?}", x.dims(), y.dims())));
    }
    Ok(())
}

/// Reconstruction loss from probabilities `x_hat ∈ (0, 1)`.
///
/// BCE is the mean per-cell binary cross-entropy, with `x_hat` clamped one
/// ulp-ish away from 0 and 1 so the logarithms stay finite.
pub fn recon_loss(x: &Tensor, x_hat: &Tensor, mode: ReconMode, features: Option<&RandomFeatures>) -> Result<Tensor> {
    check_same_shape(x, x_hat)?;
    match mode {
        ReconMode::Bce => {
            let p = x_hat.clamp(1e-12, 1.0 - 1e-12)?;
            let pos = (x * p.log()?)?;
            let neg = ((1.0 - x)? * (1.0 - &p)?.log()?)?;
            Ok((pos + neg)?.mean_all()?.neg()?)
        }
        ReconMode::Mse => Ok((x - x_hat)?.sqr()?.mean_all()?),
        ReconMode::RandomFeature => features_or_err(features)?.distance(x, x_hat),
    }
}

/// Same losses computed from generator logits. BCE uses the stable form
/// `softplus(l) − x·l`, which equals the probability form exactly in real
/// arithmetic.
pub fn recon_loss_logits(x: &Tensor, logits: &Tensor, mode: ReconMode, features: Option<&RandomFeatures>) -> Result<Tensor> {
    check_same_shape(x, logits)?;
    match mode {
        ReconMode::Bce => Ok((softplus(logits)? - (x * logits)?)?.mean_all()?),
        _ => recon_loss(x, &sigmoid(logits)?, mode, features),
    }
}

fn features_or_err(f: Option<&RandomFeatures>) -> Result<&RandomFeatures> {
    f.ok_or_else(|| Error::Config("RANDOM_FEATURE loss needs a feature extractor".into()))
}

fn mean_over_scales(maps: &[Tensor], f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Tensor> {
    if maps.is_empty() {
        return Err(Error::Shape("discriminator returned no logit maps".into()));
    }
    let mut total: Option<Tensor> = None;
    for m in maps {
        let v = f(m)?;
        total = Some(match total {
            Some(t) => (t + v)?,
            None => v,
        });
    }
    Ok((total.expect("non-empty") / maps.len() as f64)?)
}

/// Non-saturating generator loss `−½·mean log σ(D(fake))`, averaged over scales.
pub fn generator_loss(fake_logits: &[Tensor]) -> Result<Tensor> {
    let m = mean_over_scales(fake_logits, |l| Ok(log_sigmoid(l)?.mean_all()?))?;
    Ok((m * -0.5)?)
}

/// `−mean log σ(D(real)) − mean log(1 − σ(D(fake)))`, averaged over scales.
pub fn discriminator_loss(real_logits: &[Tensor], fake_logits: &[Tensor]) -> Result<Tensor> {
    if real_logits.len() != fake_logits.len() {
        return Err(Error::Shape("real and fake scale counts differ".into()));
    }
    let real = mean_over_scales(real_logits, |l| Ok(log_sigmoid(l)?.mean_all()?))?;
    // log(1 − σ(l)) = log σ(−l)
    let fake = mean_over_scales(fake_logits, |l| Ok(log_sigmoid(&l.neg()?)?.mean_all()?))?;
    Ok((real + fake)?.neg()?)
}

/// `(g_loss, d_loss)` from discriminator logits on real and generated grids.
pub fn gan_losses(real_logits: &[Tensor], fake_logits: &[Tensor]) -> Result<(Tensor, Tensor)> {
    Ok((generator_loss(fake_logits)?, discriminator_loss(real_logits, fake_logits)?))
}

/// Monte-Carlo estimate of KL(q ‖ N(0, I)) for a single posterior, with its
/// standard error. Used as an independent check of the closed form.
pub fn kl_monte_carlo(mu: &[f64], logvar: &[f64], samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    use rand_distr::StandardNormal;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for (&m, &lv) in mu.iter().zip(logvar) {
            let eps: f64 = rng.sample(StandardNormal);
            let z = m + (0.5 * lv).exp() * eps;
            // log q(z) − log p(z); the 2π terms cancel
            log_ratio += -0.5 * (lv + eps * eps) + 0.5 * z * z;
        }
        sum += log_ratio;
        sum_sq += log_ratio * log_ratio;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, max_rel_error, scalar};
    use candle_core::{Device, Var};
    use proptest::prelude::*;
    use rand::Rng;

    fn posterior(mu: &[f64], logvar: &[f64]) -> PosteriorParams {
        let d = Device::Cpu;
        let n = mu.len();
        PosteriorParams {
            mu_style: Tensor::from_slice(mu, (1, n), &d).unwrap(),
            logvar_style: Tensor::from_slice(logvar, (1, n), &d).unwrap(),
            mu_content: Tensor::zeros((1, 1, 1, 1), DType::F64, &d).unwrap(),
            logvar_content: Tensor::zeros((1, 1, 1, 1), DType::F64, &d).unwrap(),
        }
    }

    fn rand_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
        let mut rng = stream_rng(seed, 77);
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn kl_closed_form_examples() {
        assert_eq!(scalar(&kl_divergence(&posterior(&[0.0, 0.0], &[0.0, 0.0])).unwrap()).unwrap(), 0.0);
        assert_eq!(scalar(&kl_divergence(&posterior(&[1.0], &[0.0])).unwrap()).unwrap(), 0.5);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let mut rng = stream_rng(3, 0);
        let mu = [0.4, -1.2, 0.0];
        let lv = [0.3, -0.7, 1.1];
        let closed = scalar(&kl_divergence(&posterior(&mu, &lv)).unwrap()).unwrap();
        let (est, se) = kl_monte_carlo(&mu, &lv, 100_000, &mut rng);
        assert!((closed - est).abs() < 3.0 * se, "{closed} vs {est} ± {se}");
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(mu in prop::collection::vec(-5.0f64..5.0, 4), lv in prop::collection::vec(-10.0f64..10.0, 4)) {
            let k = scalar(&kl_divergence(&posterior(&mu, &lv)).unwrap()).unwrap();
            prop_assert!(k >= 0.0);
        }
    }

    #[test]
    fn recon_examples() {
        let d = Device::Cpu;
        let one = Tensor::ones((1, 1, 1, 1), DType::F64, &d).unwrap();
        let half = Tensor::full(0.5f64, (1, 1, 1, 1), &d).unwrap();
        let bce = scalar(&recon_loss(&one, &half, ReconMode::Bce, None).unwrap()).unwrap();
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-15);
        let zero_logit = Tensor::zeros((1, 1, 1, 1), DType::F64, &d).unwrap();
        let bce_l = scalar(&recon_loss_logits(&one, &zero_logit, ReconMode::Bce, None).unwrap()).unwrap();
        assert!((bce_l - std::f64::consts::LN_2).abs() < 1e-15);
        let x = rand_tensor(&[2, 1, 8, 8], 1, 0.0, 1.0);
        assert_eq!(scalar(&recon_loss(&x, &x, ReconMode::Mse, None).unwrap()).unwrap(), 0.0);
        let f = RandomFeatures::new(RandomFeatures::DEFAULT_SEED, DType::F64).unwrap();
        assert_eq!(scalar(&recon_loss(&x, &x, ReconMode::RandomFeature, Some(&f)).unwrap()).unwrap(), 0.0);
        assert!(matches!(recon_loss(&x, &x, ReconMode::RandomFeature, None), Err(Error::Config(_))));
        assert!("perceptual".parse::<ReconMode>().is_err());
        assert_eq!("random-feature".parse::<ReconMode>().unwrap(), ReconMode::RandomFeature);
    }

    #[test]
    fn logit_and_probability_forms_agree() {
        let x = rand_tensor(&[1, 1, 8, 8], 2, 0.0, 1.0);
        let l = rand_tensor(&[1, 1, 8, 8], 3, -4.0, 4.0);
        let a = scalar(&recon_loss_logits(&x, &l, ReconMode::Bce, None).unwrap()).unwrap();
        let b = scalar(&recon_loss(&x, &sigmoid(&l).unwrap(), ReconMode::Bce, None).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gan_closed_forms() {
        let d = Device::Cpu;
        let zeros = vec![
            Tensor::zeros((2, 1, 4, 4), DType::F64, &d).unwrap(),
            Tensor::zeros((2, 1, 2, 2), DType::F64, &d).unwrap(),
        ];
        let (g, dl) = gan_losses(&zeros, &zeros).unwrap();
        assert!((scalar(&g).unwrap() - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((scalar(&dl).unwrap() - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        let real = vec![Tensor::full(20.0f64, (1, 1, 4, 4), &d).unwrap()];
        let fake = vec![Tensor::full(-20.0f64, (1, 1, 4, 4), &d).unwrap()];
        assert!(scalar(&discriminator_loss(&real, &fake).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn recon_gradients_all_modes() {
        let x = rand_tensor(&[1, 1, 8, 8], 4, 0.0, 1.0);
        let xh = Var::from_tensor(&rand_tensor(&[1, 1, 8, 8], 5, 0.05, 0.95)).unwrap();
        let f = RandomFeatures::new(7, DType::F64).unwrap();
        let idx = [0, 5, 17, 38, 63];
        for mode in [ReconMode::Bce, ReconMode::Mse, ReconMode::RandomFeature] {
            let checks = gradient_check(&xh, &idx, 1e-5, &|| recon_loss(&x, xh.as_tensor(), mode, Some(&f))).unwrap();
            assert!(max_rel_error(&checks) < 1e-4, "{mode:?}: {checks:?}");
        }
    }
}
