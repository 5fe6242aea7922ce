use candle_core::{Tensor, D};
use rand::Rng;

use super::latent::{LatentPair, PosteriorParams, LOGVAR_RANGE};
use super::ModelConfig;
use crate::nn::{leaky_relu, sigmoid, Conv2d, Init, Linear, ParamStore, StyleModulation};
use crate::Result;

/// Two 3×3 convolutions plus a 1×1 skip, averaged with unit-variance
/// scaling and then halved spatially.
struct ResDown {
    conv1: Conv2d,
    conv2: Conv2d,
    skip: Conv2d,
}

impl ResDown {
    fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(ResDown {
            conv1: Conv2d::same3(store, &format!("{name}.conv1"), c_in, c_out, rng)?,
            conv2: Conv2d::same3(store, &format!("{name}.conv2"), c_out, c_out, rng)?,
            skip: Conv2d::new(store, &format!("{name}.skip"), c_in, c_out, 1, 1, 0, rng)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = leaky_relu(&self.conv1.forward(x)?)?;
        let h = leaky_relu(&self.conv2.forward(&h)?)?;
        let sum = ((h + self.skip.forward(x)?)? * std::f64::consts::FRAC_1_SQRT_2)?;
        Ok(sum.avg_pool2d(2)?)
    }
}

/// Maps an OGM batch `[N, 1, H, W]` to posterior parameters for style and content.
pub struct Encoder {
    stem: Conv2d,
    stages: Vec<ResDown>,
    content_head: Conv2d,
    style_head: Linear,
    style_dim: usize,
    content_channels: usize,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let first = config.encoder_channels[0];
        let stem = Conv2d::same3(store, "enc.stem", 1, first, rng)?;
        let mut stages = Vec::new();
        let mut c_in = first;
        for (i, &c) in config.encoder_channels.iter().enumerate() {
            stages.push(ResDown::new(store, &format!("enc.stage{i}"), c_in, c, rng)?);
            c_in = c;
        }
        let content_head = Conv2d::same3(store, "enc.content", c_in, 2 * config.content_channels, rng)?;
        let style_head = Linear::new(store, "enc.style", c_in, 2 * config.style_dim, 1.0, rng)?;
        Ok(Encoder {
            stem,
            stages,
            content_head,
            style_head,
            style_dim: config.style_dim,
            content_channels: config.content_channels,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<PosteriorParams> {
        let mut h = leaky_relu(&self.stem.forward(x)?)?;
        for s in &self.stages {
            h = s.forward(&h)?;
        }
        let (lo, hi) = LOGVAR_RANGE;
        let content = self.content_head.forward(&h)?;
        let c = self.content_channels;
        let pooled = h.mean(D::Minus1)?.mean(D::Minus1)?;
        let style = self.style_head.forward(&pooled)?;
        let s = self.style_dim;
        Ok(PosteriorParams {
            mu_style: style.narrow(1, 0, s)?,
            logvar_style: style.narrow(1, s, s)?.clamp(lo, hi)?,
            mu_content: content.narrow(1, 0, c)?,
            logvar_content: content.narrow(1, c, c)?.clamp(lo, hi)?,
        })
    }
}

/// Style-modulated decoder: `z_content` is projected and concatenated with a
/// learned constant tensor, then upsampled to the grid while every block is
/// modulated by `z_style`.
pub struct Generator {
    constant: Tensor,
    content_proj: Conv2d,
    base_conv: Conv2d,
    base_mod: StyleModulation,
    ups: Vec<(Conv2d, StyleModulation)>,
    to_grid: Conv2d,
}

impl Generator {
    pub fn new(store: &mut ParamStore, config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let k = config.content_size;
        let constant = store.create("gen.const", &[1, config.const_channels, k, k], Init::Normal(0.02), rng)?;
        let content_proj = Conv2d::same3(store, "gen.content_proj", config.content_channels, config.content_proj_channels, rng)?;
        let base = config.generator_channels[0];
        let base_conv = Conv2d::same3(
            store,
            "gen.base.conv",
            config.const_channels + config.content_proj_channels,
            base,
            rng,
        )?;
        let base_mod = StyleModulation::new(store, "gen.base.mod", config.style_dim, base, rng)?;
        let mut ups = Vec::new();
        let mut c_in = base;
        for (i, &c) in config.generator_channels.iter().enumerate() {
            let conv = Conv2d::same3(store, &format!("gen.up{i}.conv"), c_in, c, rng)?;
            let m = StyleModulation::new(store, &format!("gen.up{i}.mod"), config.style_dim, c, rng)?;
            ups.push((conv, m));
            c_in = c;
        }
        let to_grid = Conv2d::new(store, "gen.to_grid", c_in, 1, 1, 1, 0, rng)?;
        Ok(Generator {
            constant,
            content_proj,
            base_conv,
            base_mod,
            ups,
            to_grid,
        })
    }

    /// Pre-sigmoid logits `[N, 1, H, W]`.
    pub fn logits(&self, z: &LatentPair) -> Result<Tensor> {
        let content = leaky_relu(&self.content_proj.forward(&z.content)?)?;
        let (n, _, h, w) = content.dims4()?;
        let c = self.constant.dim(1)?;
        let constant = self.constant.broadcast_as((n, c, h, w))?;
        let x = Tensor::cat(&[&constant, &content], 1)?;
        let mut x = leaky_relu(&self.base_mod.forward(&self.base_conv.forward(&x)?, &z.style)?)?;
        for (conv, m) in &self.ups {
            let (_, _, h, w) = x.dims4()?;
            let up = x.upsample_nearest2d(2 * h, 2 * w)?;
            x = leaky_relu(&m.forward(&conv.forward(&up)?, &z.style)?)?;
        }
        self.to_grid.forward(&x)
    }

    /// Occupancy values in [0, 1].
    pub fn forward(&self, z: &LatentPair) -> Result<Tensor> {
        sigmoid(&self.logits(z)?)
    }
}

/// Multi-scale patch discriminator returning one logit map per scale.
pub struct Discriminator {
    scales: Vec<(Vec<Conv2d>, Conv2d)>,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut scales = Vec::new();
        for s in 0..config.disc_scales {
            let mut layers = Vec::new();
            let mut c_in = 1;
            for (i, &c) in config.disc_channels.iter().enumerate() {
                layers.push(Conv2d::new(store, &format!("disc.s{s}.conv{i}"), c_in, c, 4, 2, 1, rng)?);
                c_in = c;
            }
            let out = Conv2d::same3(store, &format!("disc.s{s}.out"), c_in, 1, rng)?;
            scales.push((layers, out));
        }
        Ok(Discriminator { scales })
    }

    /// Logit maps `[N, 1, h_s, w_s]`, finest scale first.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut input = x.clone();
        let mut out = Vec::with_capacity(self.scales.len());
        for (i, (layers, head)) in self.scales.iter().enumerate() {
            if i > 0 {
                input = input.avg_pool2d(2)?;
            }
            let mut h = input.clone();
            for l in layers {
                h = leaky_relu(&l.forward(&h)?)?;
            }
            out.push(head.forward(&h)?);
        }
        Ok(out)
    }
}
