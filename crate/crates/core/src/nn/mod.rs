//! Minimal neural-network building blocks on top of `candle-core` autograd.
//!
//! Parameters live in a [`ParamStore`] keyed by dotted names; layers keep
//! handles to their tensors so gradients flow back to the stored variables.

mod gradcheck;
mod layers;
mod params;

pub use gradcheck::{gradient_check, max_rel_error, GradCheck, REL_FLOOR};
pub use layers::{leaky_relu, log_sigmoid, sigmoid, softplus, Conv2d, Linear, LstmCell, LstmState, StyleModulation};
pub use params::{hash_tensors, Init, ParamStore};

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};

use crate::Result;

/// Adam settings (no weight decay).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn build(&self, vars: Vec<candle_core::Var>) -> Result<AdamW> {
        Ok(AdamW::new(
            vars,
            ParamsAdamW {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: 0.0,
            },
        )?)
    }
}

/// Reads a scalar tensor as f64.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
