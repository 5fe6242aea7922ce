use candle_core::{Tensor, D};
use rand::Rng;

use super::params::{Init, ParamStore};
use crate::Result;

const LEAK: f64 = 0.2;

pub fn leaky_relu(x: &Tensor) -> Result<Tensor> {
    Ok(x.maximum(&(x * LEAK)?)?)
}

/// Logistic function written through `tanh`, which is stable for large |x|.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// `log(1 + exp(x))`, stable for either sign.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = (x.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// `log σ(x) = −softplus(−x)`.
pub fn log_sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(softplus(&x.neg()?)?.neg()?)
}

pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Conv2d {
            weight: store.create(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::Fan(2f64.sqrt()), rng)?,
            bias: store.create(&format!("{name}.bias"), &[c_out], Init::Zeros, rng)?,
            stride,
            padding,
        })
    }

    /// 3×3, stride 1, "same" padding.
    pub fn same3(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new(store, name, c_in, c_out, 3, 1, 1, rng)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, c, 1, 1))?)?)
    }
}

pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, gain: f64, rng: &mut impl Rng) -> Result<Self> {
        Ok(Linear {
            weight: store.create(&format!("{name}.weight"), &[d_out, d_in], Init::Fan(gain), rng)?,
            bias: store.create(&format!("{name}.bias"), &[d_out], Init::Zeros, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

/// Adaptive instance normalisation: each channel is normalised over its
/// spatial extent, then scaled by `1 + γ` and shifted by `β`, where
/// `(γ, β)` is an affine function of the style vector.
pub struct StyleModulation {
    affine: Linear,
    channels: usize,
}

impl StyleModulation {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, style_dim: usize, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(StyleModulation {
            affine: Linear::new(store, &format!("{name}.affine"), style_dim, 2 * channels, 0.5, rng)?,
            channels,
        })
    }

    /// `x`: `[N, C, H, W]`, `style`: `[N, S]`.
    pub fn forward(&self, x: &Tensor, style: &Tensor) -> Result<Tensor> {
        let (n, c, _, _) = x.dims4()?;
        let flat = x.flatten_from(2)?;
        let mean = flat.mean_keepdim(D::Minus1)?;
        let centered = flat.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + Self::EPS)?.sqrt()?)?.reshape(x.shape())?;
        let params = self.affine.forward(style)?;
        let gamma = params.narrow(1, 0, self.channels)?.reshape((n, c, 1, 1))?;
        let beta = params.narrow(1, self.channels, self.channels)?.reshape((n, c, 1, 1))?;
        Ok(normed.broadcast_mul(&(gamma + 1.0)?)?.broadcast_add(&beta)?)
    }
}

/// A single LSTM cell with input, forget, cell and output gates.
pub struct LstmCell {
    w_ih: Linear,
    w_hh: Tensor,
    forget_bias: Tensor,
    hidden: usize,
}

#[derive(Clone)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let w_ih = Linear::new(store, &format!("{name}.ih"), d_in, 4 * hidden, 1.0, rng)?;
        let w_hh = store.create(&format!("{name}.hh.weight"), &[4 * hidden, hidden], Init::Fan(1.0), rng)?;
        let forget_bias = store.create(&format!("{name}.forget_bias"), &[hidden], Init::Const(1.0), rng)?;
        Ok(LstmCell {
            w_ih,
            w_hh,
            forget_bias,
            hidden,
        })
    }

    pub fn zero_state(&self, batch: usize, like: &Tensor) -> Result<LstmState> {
        let z = Tensor::zeros((batch, self.hidden), like.dtype(), like.device())?;
        Ok(LstmState { h: z.clone(), c: z })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, x: &Tensor, state: &LstmState) -> Result<LstmState> {
        let gates = (self.w_ih.forward(x)? + state.h.matmul(&self.w_hh.t()?)?)?;
        let hsz = self.hidden;
        let i = sigmoid(&gates.narrow(1, 0, hsz)?)?;
        let f = sigmoid(&gates.narrow(1, hsz, hsz)?.broadcast_add(&self.forget_bias)?)?;
        let g = gates.narrow(1, 2 * hsz, hsz)?.tanh()?;
        let o = sigmoid(&gates.narrow(1, 3 * hsz, hsz)?)?;
        let c = ((f * &state.c)? + (i * g)?)?;
        let h = (o * c.tanh()?)?;
        Ok(LstmState { h, c })
    }
}
