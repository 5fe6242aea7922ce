//! Encoder, style/content generator and multi-scale discriminator.
//!
//! All three networks share one [`ParamStore`] under the `enc.`, `gen.` and
//! `disc.` prefixes. Tensors are NCHW; an OGM batch is `[N, 1, H, W]`.

mod config;
mod latent;
mod networks;

pub use config::ModelConfig;
pub use latent::{reparameterize, sample_prior, standard_normal, Latent, LatentPair, PosteriorParams, LOGVAR_RANGE};
pub use networks::{Discriminator, Encoder, Generator};

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, NamedTensor};
use crate::nn::{hash_tensors, ParamStore};
use crate::ogm::{GridSpec, Ogm};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

pub const ENCODER_PREFIX: &str = "enc.";
pub const GENERATOR_PREFIX: &str = "gen.";
pub const DISCRIMINATOR_PREFIX: &str = "disc.";
pub const STAGE1_KIND: &str = "stage1";

/// Metadata stored alongside stage-1 parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Meta {
    pub kind: String,
    pub model: ModelConfig,
    pub model_hash: String,
    pub step: usize,
    pub encoder_hash: String,
    pub generator_hash: String,
    /// Training configuration and dataset fingerprint, opaque to this module.
    #[serde(default)]
    pub training: serde_json::Value,
}

pub struct Stage1Model {
    config: ModelConfig,
    store: ParamStore,
    encoder: Encoder,
    generator: Generator,
    discriminator: Discriminator,
}

impl Stage1Model {
    /// Freshly initialised model; every weight is drawn from the seed's init stream.
    pub fn new(config: ModelConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, streams::INIT);
        let mut store = ParamStore::new(dtype);
        let encoder = Encoder::new(&mut store, &config, &mut rng)?;
        let generator = Generator::new(&mut store, &config, &mut rng)?;
        let discriminator = Discriminator::new(&mut store, &config, &mut rng)?;
        Ok(Stage1Model {
            config,
            store,
            encoder,
            generator,
            discriminator,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4().map_err(|_| Error::Shape(format!("expected [N, 1, H, W], got {:?}", x.dims())))?;
        let g = self.config.grid;
        if c != 1 || h != g.height || w != g.width {
            return Err(Error::Shape(format!(
                "expected [N, 1, {}, {}], got {:?}",
                g.height,
                g.width,
                x.dims()
            )));
        }
        Ok(())
    }

    fn check_latent(&self, z: &LatentPair) -> Result<()> {
        let k = self.config.content_size;
        let n = z.batch_size()?;
        let style_ok = z.style.dims() == [n, self.config.style_dim];
        let content_ok = z.content.dims() == [n, self.config.content_channels, k, k];
        if !(style_ok && content_ok) {
            return Err(Error::Shape(format!(
                "latent shapes {:?} / {:?} do not match the model",
                z.style.dims(),
                z.content.dims()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<PosteriorParams> {
        self.check_input(x)?;
        self.encoder.forward(x)
    }

    /// Generator logits, before the sigmoid.
    pub fn generate_logits(&self, z: &LatentPair) -> Result<Tensor> {
        self.check_latent(z)?;
        self.generator.logits(z)
    }

    pub fn generate(&self, z: &LatentPair) -> Result<Tensor> {
        self.check_latent(z)?;
        self.generator.forward(z)
    }

    pub fn discriminate(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        self.discriminator.forward(x)
    }

    /// Decodes the posterior means, without sampling.
    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.generate(&self.encode(x)?.means())
    }

    pub fn to_tensor(&self, ogms: &[&Ogm]) -> Result<Tensor> {
        ogms_to_tensor(ogms, self.config.grid, self.dtype(), self.device())
    }

    pub fn encode_ogms(&self, ogms: &[&Ogm]) -> Result<PosteriorParams> {
        self.encode(&self.to_tensor(ogms)?)
    }

    pub fn generate_ogms(&self, z: &LatentPair) -> Result<Vec<Ogm>> {
        tensor_to_ogms(&self.generate(z)?, self.config.grid)
    }

    pub fn encoder_hash(&self) -> Result<String> {
        self.store.hash(ENCODER_PREFIX)
    }

    pub fn generator_hash(&self) -> Result<String> {
        self.store.hash(GENERATOR_PREFIX)
    }

    /// Hash over the encoder and generator, the parts stage 2 must not touch.
    pub fn representation_hash(&self) -> Result<String> {
        let mut t = self.store.export(ENCODER_PREFIX)?;
        t.extend(self.store.export(GENERATOR_PREFIX)?);
        Ok(hash_tensors(&t))
    }

    pub fn to_checkpoint(&self, step: usize, training: serde_json::Value) -> Result<Checkpoint> {
        let meta = Stage1Meta {
            kind: STAGE1_KIND.into(),
            model: self.config.clone(),
            model_hash: self.config.hash(),
            step,
            encoder_hash: self.encoder_hash()?,
            generator_hash: self.generator_hash()?,
            training,
        };
        let tensors: Vec<NamedTensor> = self.store.export("")?;
        Checkpoint::new(&meta, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>, step: usize, training: serde_json::Value) -> Result<()> {
        self.to_checkpoint(step, training)?.save(path)
    }

    pub fn from_checkpoint(ck: &Checkpoint, dtype: DType) -> Result<(Self, Stage1Meta)> {
        if ck.kind() != Some(STAGE1_KIND) {
            return Err(Error::CheckpointMismatch(format!(
                "expected a {STAGE1_KIND} checkpoint, found {:?}",
                ck.kind()
            )));
        }
        let meta: Stage1Meta = ck.meta()?;
        if meta.model.hash() != meta.model_hash {
            return Err(Error::CheckpointMismatch("model config hash does not match its config".into()));
        }
        let model = Stage1Model::new(meta.model.clone(), dtype, 0)?;
        model.store.import("", &ck.tensors)?;
        Ok((model, meta))
    }

    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<(Self, Stage1Meta)> {
        Self::from_checkpoint(&Checkpoint::load(path)?, dtype)
    }

    /// Replaces the generator with the one stored in another stage-1
    /// checkpoint of the same architecture.
    pub fn use_generator_from(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.kind() != Some(STAGE1_KIND) {
            return Err(Error::CheckpointMismatch(format!(
                "expected a {STAGE1_KIND} checkpoint, found {:?}",
                ck.kind()
            )));
        }
        let meta: Stage1Meta = ck.meta()?;
        if meta.model_hash != self.config.hash() {
            return Err(Error::CheckpointMismatch(
                "generator checkpoint has a different architecture than the encoder".into(),
            ));
        }
        self.store.import(GENERATOR_PREFIX, &ck.tensors)?;
        if self.generator_hash()? != meta.generator_hash {
            return Err(Error::CheckpointMismatch("generator parameters do not match their recorded hash".into()));
        }
        Ok(())
    }
}

/// Stacks OGMs into a `[N, 1, H, W]` tensor.
pub fn ogms_to_tensor(ogms: &[&Ogm], grid: GridSpec, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = Vec::with_capacity(ogms.len() * grid.cells());
    for o in ogms {
        if o.spec() != grid {
            return Err(Error::Shape(format!(
                "OGM is {}x{}, model expects {}x{}",
                o.spec().width,
                o.spec().height,
                grid.width,
                grid.height
            )));
        }
        data.extend_from_slice(o.values());
    }
    let t = Tensor::from_vec(data, (ogms.len(), 1, grid.height, grid.width), device)?;
    Ok(t.to_dtype(dtype)?)
}

/// Splits a `[N, 1, H, W]` tensor of values in [0, 1] into OGMs.
pub fn tensor_to_ogms(t: &Tensor, grid: GridSpec) -> Result<Vec<Ogm>> {
    let rows = t.to_dtype(DType::F32)?.flatten_from(1)?.to_vec2::<f32>()?;
    rows.into_iter()
        .map(|mut v| {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    step: 0,
                    what: "generated grid".into(),
                });
            }
            for x in &mut v {
                *x = x.clamp(0.0, 1.0);
            }
            Ogm::new(grid, v)
        })
        .collect()
}
