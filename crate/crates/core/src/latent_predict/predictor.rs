use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::hashing;
use crate::models::{LatentPair, ModelConfig};
use crate::nn::{leaky_relu, AdamConfig, Conv2d, Linear, LstmCell, LstmState, ParamStore};
use crate::rng::{stream_rng, streams};
use crate::{Error, Result};

pub const PREDICTOR_PREFIX: &str = "pred.";
pub const PREDICTOR_KIND: &str = "predictor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub style_dim: usize,
    pub content_channels: usize,
    pub content_size: usize,
    /// LSTM hidden size; each output head reads one half of the hidden state.
    pub hidden: usize,
    pub style_features: usize,
    /// Channels of the content input/output heads.
    pub content_features: usize,
    pub history: usize,
    pub horizon: usize,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Probability of feeding the ground-truth latent instead of the model's
    /// own prediction at each predicted step during training.
    pub teacher_forcing: f64,
    /// Spacing between training window starts.
    pub window_stride: usize,
}

impl PredictorConfig {
    pub fn for_model(model: &ModelConfig, history: usize, horizon: usize) -> Self {
        PredictorConfig {
            style_dim: model.style_dim,
            content_channels: model.content_channels,
            content_size: model.content_size,
            hidden: 256,
            style_features: 64,
            content_features: 16,
            history,
            horizon,
            optimizer: AdamConfig {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.98,
                eps: 1e-9,
            },
            batch_size: 32,
            max_epochs: 40,
            patience: 5,
            seed: 0,
            teacher_forcing: 0.5,
            window_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.history < 1 || self.horizon < 1 {
            return err("history and horizon must both be at least 1");
        }
        if self.hidden < 2 || self.hidden % 2 != 0 {
            return err("hidden size must be even and at least 2");
        }
        if [self.style_dim, self.content_channels, self.content_size, self.style_features, self.content_features]
            .contains(&0)
        {
            return err("predictor widths must be positive");
        }
        if self.batch_size == 0 || self.window_stride == 0 || self.max_epochs == 0 {
            return err("batch size, window stride and epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing) {
            return err("teacher forcing ratio must lie in [0, 1]");
        }
        if !(self.optimizer.lr > 0.0) {
            return err("learning rate must be positive");
        }
        Ok(())
    }

    pub fn matches_model(&self, model: &ModelConfig) -> bool {
        (self.style_dim, self.content_channels, self.content_size)
            == (model.style_dim, model.content_channels, model.content_size)
    }

    pub fn hash(&self) -> String {
        hashing::json_hash(self)
    }
}

/// Checkpoint metadata for a trained predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMeta {
    pub kind: String,
    pub config: PredictorConfig,
    pub config_hash: String,
    /// Encoder+generator hash of the stage-1 model whose latents were used.
    pub stage1_hash: String,
    pub epoch: usize,
    pub val_loss: f64,
    pub baseline_val_loss: f64,
}

/// Recurrent latent predictor: input heads for style (affine) and content
/// (conv, flattened) feed an LSTM whose hidden state is split between an
/// affine style head and a reshaped convolutional content head. Each step
/// predicts the change from the current latent.
pub struct Predictor {
    config: PredictorConfig,
    store: ParamStore,
    style_in: Linear,
    content_in: Conv2d,
    lstm: LstmCell,
    style_out: Linear,
    content_out_fc: Linear,
    content_out_conv: Conv2d,
}

impl Predictor {
    pub fn new(config: PredictorConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, streams::INIT);
        let mut store = ParamStore::new(dtype);
        let c = &config;
        let k2 = c.content_size * c.content_size;
        let half = c.hidden / 2;
        let style_in = Linear::new(&mut store, "pred.style_in", c.style_dim, c.style_features, 1.0, &mut rng)?;
        let content_in = Conv2d::same3(&mut store, "pred.content_in", c.content_channels, c.content_features, &mut rng)?;
        let lstm = LstmCell::new(&mut store, "pred.lstm", c.style_features + c.content_features * k2, c.hidden, &mut rng)?;
        // Small output gains start the model close to "latent stays put".
        let style_out = Linear::new(&mut store, "pred.style_out", half, c.style_dim, 0.1, &mut rng)?;
        let content_out_fc = Linear::new(&mut store, "pred.content_out_fc", half, c.content_features * k2, 1.0, &mut rng)?;
        let content_out_conv = Conv2d::new(&mut store, "pred.content_out", c.content_features, c.content_channels, 3, 1, 1, &mut rng)?;
        let w = content_out_conv_weight(&store)?;
        w.set(&(w.as_tensor() * 0.1)?)?;
        Ok(Predictor {
            config,
            store,
            style_in,
            content_in,
            lstm,
            style_out,
            content_out_fc,
            content_out_conv,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn hash(&self) -> Result<String> {
        self.store.hash(PREDICTOR_PREFIX)
    }

    fn check(&self, z: &LatentPair) -> Result<()> {
        let c = &self.config;
        let n = z.batch_size()?;
        if z.style.dims() != [n, c.style_dim] || z.content.dims() != [n, c.content_channels, c.content_size, c.content_size] {
            return Err(Error::Shape(format!(
                "latent shapes {:?} / {:?} do not match the predictor",
                z.style.dims(),
                z.content.dims()
            )));
        }
        Ok(())
    }

    /// One recurrent step: consumes `z_t` and returns `ẑ_{t+1}`.
    pub fn step(&self, z: &LatentPair, state: &LstmState) -> Result<(LatentPair, LstmState)> {
        let c = &self.config;
        let n = z.batch_size()?;
        let fs = leaky_relu(&self.style_in.forward(&z.style)?)?;
        let fc = leaky_relu(&self.content_in.forward(&z.content)?)?.flatten_from(1)?;
        let state = self.lstm.step(&Tensor::cat(&[&fs, &fc], 1)?, state)?;
        let half = c.hidden / 2;
        let h_style = state.h.narrow(1, 0, half)?;
        let h_content = state.h.narrow(1, half, half)?;
        let d_style = self.style_out.forward(&h_style)?;
        let grid = self
            .content_out_fc
            .forward(&h_content)?
            .reshape((n, c.content_features, c.content_size, c.content_size))?;
        let d_content = self.content_out_conv.forward(&leaky_relu(&grid)?)?;
        let next = LatentPair {
            style: (&z.style + d_style)?,
            content: (&z.content + d_content)?,
        };
        Ok((next, state))
    }

    /// Runs the observed prefix and `steps` predicted steps. For predicted
    /// step `k ≥ 1`, `teacher(k)` returns the ground-truth latent to feed
    /// instead of the previous prediction, or `None` to feed the prediction.
    pub fn unroll(
        &self,
        prefix: &[LatentPair],
        steps: usize,
        teacher: &mut dyn FnMut(usize) -> Option<LatentPair>,
    ) -> Result<Vec<LatentPair>> {
        if prefix.len() != self.config.history {
            return Err(Error::InvalidInput(format!(
                "prefix has {} latents, predictor history is {}",
                prefix.len(),
                self.config.history
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("rollout needs at least one step".into()));
        }
        for z in prefix {
            self.check(z)?;
        }
        let n = prefix[0].batch_size()?;
        let mut state = self.lstm.zero_state(n, &prefix[0].style)?;
        let mut out = None;
        for z in prefix {
            let (o, s) = self.step(z, &state)?;
            out = Some(o);
            state = s;
        }
        let mut preds = vec![out.expect("history ≥ 1")];
        for k in 1..steps {
            let input = match teacher(k) {
                Some(z) => z,
                None => preds[k - 1].clone(),
            };
            let (o, s) = self.step(&input, &state)?;
            preds.push(o);
            state = s;
        }
        Ok(preds)
    }

    /// Autoregressive prediction of the configured horizon.
    pub fn predict(&self, prefix: &[LatentPair]) -> Result<Vec<LatentPair>> {
        self.rollout(prefix, self.config.horizon)
    }

    /// Autoregressive continuation for `steps`, which may exceed the horizon.
    pub fn rollout(&self, prefix: &[LatentPair], steps: usize) -> Result<Vec<LatentPair>> {
        self.unroll(prefix, steps, &mut |_| None)
    }

    pub fn to_checkpoint(&self, meta: &PredictorMeta) -> Result<Checkpoint> {
        Checkpoint::new(meta, self.store.export(PREDICTOR_PREFIX)?)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, PredictorMeta)> {
        if ck.kind() != Some(PREDICTOR_KIND) {
            return Err(Error::CheckpointMismatch(format!(
                "expected a {PREDICTOR_KIND} checkpoint, found {:?}",
                ck.kind()
            )));
        }
        let meta: PredictorMeta = ck.meta()?;
        if meta.config.hash() != meta.config_hash {
            return Err(Error::CheckpointMismatch("predictor config hash does not match its config".into()));
        }
        let p = Predictor::new(meta.config.clone(), DType::F32)?;
        p.store.import(PREDICTOR_PREFIX, &ck.tensors)?;
        Ok((p, meta))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(Self, PredictorMeta)> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn content_out_conv_weight(store: &ParamStore) -> Result<candle_core::Var> {
    store
        .get("pred.content_out.weight")
        .cloned()
        .ok_or_else(|| Error::Config("content output head missing".into()))
}

/// Mean squared error over every predicted latent entry and step, the
/// negative log-likelihood of a fixed-variance Gaussian up to constants.
pub fn prediction_loss(pred: &[LatentPair], target: &[LatentPair]) -> Result<Tensor> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::InvalidInput(format!(
            "prediction has {} steps, target has {}",
            pred.len(),
            target.len()
        )));
    }
    let mut sum: Option<Tensor> = None;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if p.style.dims() != t.style.dims() || p.content.dims() != t.content.dims() {
            return Err(Error::Shape("prediction and target latent shapes differ".into()));
        }
        let s = ((&p.style - &t.style)?.sqr()?.sum_all()? + (&p.content - &t.content)?.sqr()?.sum_all()?)?;
        count += p.style.elem_count() + p.content.elem_count();
        sum = Some(match sum {
            Some(acc) => (acc + s)?,
            None => s,
        });
    }
    Ok((sum.expect("non-empty") / count as f64)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_prior, Latent};
    use crate::nn::scalar;
    use candle_core::Device;

    fn tiny_config() -> PredictorConfig {
        let mut c = PredictorConfig::for_model(&ModelConfig::tiny(), 3, 4);
        c.hidden = 8;
        c.style_features = 4;
        c.content_features = 2;
        c
    }

    fn prefix(c: &PredictorConfig, n: usize, seed: u64) -> Vec<LatentPair> {
        let mut rng = stream_rng(seed, 0);
        (0..c.history)
            .map(|_| sample_prior(&ModelConfig::tiny(), n, DType::F32, &Device::Cpu, &mut rng).unwrap())
            .collect()
    }

    fn host(z: &[LatentPair]) -> Vec<Vec<Latent>> {
        z.iter().map(|p| p.to_latents().unwrap()).collect()
    }

    #[test]
    fn predict_shapes_and_determinism() {
        let c = PredictorConfig::for_model(&ModelConfig::desk(), 5, 15);
        let p = Predictor::new(c.clone(), DType::F32).unwrap();
        let mut rng = stream_rng(1, 0);
        let pre: Vec<LatentPair> = (0..5)
            .map(|_| sample_prior(&ModelConfig::desk(), 2, DType::F32, &Device::Cpu, &mut rng).unwrap())
            .collect();
        let out = p.predict(&pre).unwrap();
        assert_eq!(out.len(), 15);
        assert_eq!(out[0].style.dims(), &[2, 32]);
        assert_eq!(out[14].content.dims(), &[2, 32, 4, 4]);
        assert_eq!(host(&out), host(&p.predict(&pre).unwrap()));
        assert_eq!(host(&out), host(&p.rollout(&pre, 15).unwrap()));
    }

    #[test]
    fn rollout_extends_prediction() {
        let c = tiny_config();
        let p = Predictor::new(c.clone(), DType::F32).unwrap();
        let pre = prefix(&c, 2, 2);
        let long = p.rollout(&pre, 9).unwrap();
        assert_eq!(long.len(), 9);
        assert_eq!(host(&long[..4]), host(&p.predict(&pre).unwrap()));
        assert_eq!(p.rollout(&pre, 1).unwrap().len(), 1);
        assert!(p.rollout(&pre, 0).is_err());
        assert!(p.predict(&pre[..2]).is_err());
    }

    #[test]
    fn loss_examples() {
        let c = tiny_config();
        let z = prefix(&c, 2, 3);
        assert_eq!(scalar(&prediction_loss(&z, &z).unwrap()).unwrap(), 0.0);
        let shifted: Vec<LatentPair> = z
            .iter()
            .map(|p| LatentPair {
                style: (&p.style + 1.0).unwrap(),
                content: (&p.content + 1.0).unwrap(),
            })
            .collect();
        assert!((scalar(&prediction_loss(&shifted, &z).unwrap()).unwrap() - 1.0).abs() < 1e-6);
        assert!(prediction_loss(&z[..1], &z).is_err());
    }

    #[test]
    fn loss_matches_recount() {
        let c = tiny_config();
        let a = prefix(&c, 3, 4);
        let b = prefix(&c, 3, 5);
        let (ha, hb) = (host(&a), host(&b));
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for (xa, xb) in ha.iter().flatten().zip(hb.iter().flatten()) {
            for (u, v) in xa.style.iter().chain(&xa.content).zip(xb.style.iter().chain(&xb.content)) {
                sum += ((u - v) as f64).powi(2);
                n += 1;
            }
        }
        let got = scalar(&prediction_loss(&a, &b).unwrap()).unwrap();
        assert!((got - sum / n as f64).abs() < 1e-5 * (sum / n as f64));
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = tiny_config();
        let p = Predictor::new(c.clone(), DType::F32).unwrap();
        let meta = PredictorMeta {
            kind: PREDICTOR_KIND.into(),
            config_hash: c.hash(),
            config: c.clone(),
            stage1_hash: "abc".into(),
            epoch: 1,
            val_loss: 0.5,
            baseline_val_loss: 0.6,
        };
        let ck = p.to_checkpoint(&meta).unwrap();
        let (back, m) = Predictor::from_checkpoint(&Checkpoint::decode(&ck.encode()).unwrap()).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back.hash().unwrap(), p.hash().unwrap());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.horizon = 0;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.teacher_forcing = 1.5;
        assert!(c.validate().is_err());
    }
}
