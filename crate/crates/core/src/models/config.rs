use serde::{Deserialize, Serialize};

use crate::hashing;
use crate::ogm::GridSpec;
use crate::{Error, Result};

/// Architecture of the encoder, generator and discriminator.
///
/// The encoder halves the grid once per entry of `encoder_channels` until it
/// reaches `content_size × content_size`; the generator mirrors this with one
/// upsampling block per entry of `generator_channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub grid: GridSpec,
    pub style_dim: usize,
    pub content_channels: usize,
    pub content_size: usize,
    pub encoder_channels: Vec<usize>,
    pub generator_channels: Vec<usize>,
    /// Channels of the learned constant input tensor.
    pub const_channels: usize,
    /// Channels of the convolution applied to `z_content` before concatenation.
    pub content_proj_channels: usize,
    pub disc_scales: usize,
    pub disc_channels: Vec<usize>,
}

impl ModelConfig {
    /// 64×64 grids, 32-dim style, 32×4×4 content.
    pub fn desk() -> Self {
        ModelConfig {
            grid: GridSpec::desk(),
            style_dim: 32,
            content_channels: 32,
            content_size: 4,
            encoder_channels: vec![8, 16, 32, 64],
            generator_channels: vec![64, 32, 16, 8],
            const_channels: 64,
            content_proj_channels: 32,
            disc_scales: 2,
            disc_channels: vec![16, 32],
        }
    }

    /// 128×128 grids, 128-dim style, 128×4×4 content, 4×4×512 constant.
    pub fn full() -> Self {
        ModelConfig {
            grid: GridSpec::full(),
            style_dim: 128,
            content_channels: 128,
            content_size: 4,
            encoder_channels: vec![16, 32, 64, 128, 256],
            generator_channels: vec![256, 128, 64, 32, 16],
            const_channels: 512,
            content_proj_channels: 128,
            disc_scales: 3,
            disc_channels: vec![32, 64],
        }
    }

    /// 8×8 grids with a handful of channels, for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            grid: GridSpec {
                width: 8,
                height: 8,
                resolution: 1.0,
            },
            style_dim: 3,
            content_channels: 2,
            content_size: 2,
            encoder_channels: vec![3, 4],
            generator_channels: vec![4, 3],
            const_channels: 3,
            content_proj_channels: 2,
            disc_scales: 2,
            disc_channels: vec![3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let err = |m: String| Err(Error::Config(m));
        if self.style_dim == 0 || self.content_channels == 0 || self.content_size == 0 {
            return err("latent dimensions must be positive".into());
        }
        let stages = self.encoder_channels.len();
        if stages == 0 || self.generator_channels.len() != stages {
            return err(format!(
                "encoder ({stages}) and generator ({}) need the same non-zero number of stages",
                self.generator_channels.len()
            ));
        }
        let side = self.content_size << stages;
        if side != self.grid.width || side != self.grid.height {
            return err(format!(
                "{} stages from {}x{} content produce {side}x{side}, grid is {}x{}",
                stages, self.content_size, self.content_size, self.grid.width, self.grid.height
            ));
        }
        if self.disc_scales < 1 || self.disc_channels.is_empty() {
            return err("discriminator needs at least one scale and one layer".into());
        }
        let smallest = self.grid.width >> (self.disc_scales - 1 + self.disc_channels.len());
        if smallest < 1 {
            return err("discriminator downsamples below one cell".into());
        }
        let all = self
            .encoder_channels
            .iter()
            .chain(&self.generator_channels)
            .chain(&self.disc_channels)
            .chain([&self.const_channels, &self.content_proj_channels]);
        if all.into_iter().any(|&c| c == 0) {
            return err("channel widths must be positive".into());
        }
        Ok(())
    }

    pub fn content_len(&self) -> usize {
        self.content_channels * self.content_size * self.content_size
    }

    /// Spatial size of each discriminator logit map, finest scale first.
    pub fn disc_output_sizes(&self) -> Vec<(usize, usize)> {
        (0..self.disc_scales)
            .map(|s| {
                let shift = s + self.disc_channels.len();
                (self.grid.height >> shift, self.grid.width >> shift)
            })
            .collect()
    }

    pub fn hash(&self) -> String {
        hashing::json_hash(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_consistent() {
        for c in [ModelConfig::desk(), ModelConfig::full(), ModelConfig::tiny()] {
            c.validate().unwrap();
        }
        assert_eq!(ModelConfig::desk().disc_output_sizes(), vec![(16, 16), (8, 8)]);
        assert_eq!(ModelConfig::full().content_len(), 128 * 16);
    }

    #[test]
    fn mismatched_stage_count_is_rejected() {
        let mut c = ModelConfig::desk();
        c.encoder_channels.pop();
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.grid = GridSpec::full();
        assert!(c.validate().is_err());
    }
}
