use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::checkpoint::NamedTensor;
use crate::{Error, Result};

/// Weight initialisation schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// N(0, std²).
    Normal(f64),
    /// N(0, gain² / fan_in), fan_in taken from all but the first dimension.
    Fan(f64),
}

/// Named trainable tensors. Every value is drawn from the caller's RNG, so
/// initialisation is reproducible from the run seed.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        ParamStore {
            vars: BTreeMap::new(),
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn create(&mut self, name: &str, shape: &[usize], init: Init, rng: &mut impl Rng) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        let n: usize = shape.iter().product();
        let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c; n],
            Init::Normal(std) => (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
            Init::Fan(gain) => {
                let std = gain / (fan_in as f64).sqrt();
                (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
            }
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Variables whose names start with `prefix`, in name order.
    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn num_params(&self, prefix: &str) -> usize {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Snapshot of every parameter under `prefix` as f32.
    pub fn export(&self, prefix: &str) -> Result<Vec<NamedTensor>> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| {
                Ok(NamedTensor {
                    name: k.clone(),
                    dims: v.dims().to_vec(),
                    values: v.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?,
                })
            })
            .collect()
    }

    /// Overwrites parameters from a snapshot. Every parameter under `prefix`
    /// must be present with a matching shape.
    pub fn import(&self, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
        let by_name: BTreeMap<&str, &NamedTensor> = tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for (name, var) in self.vars.iter().filter(|(k, _)| k.starts_with(prefix)) {
            let t = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::CheckpointMismatch(format!("parameter {name} missing")))?;
            if t.dims != var.dims() {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    t.dims,
                    var.dims()
                )));
            }
            let value = Tensor::from_slice(&t.values, t.dims.as_slice(), &self.device)?.to_dtype(self.dtype)?;
            var.set(&value)?;
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and f32 little-endian values of every
    /// parameter under `prefix`.
    pub fn hash(&self, prefix: &str) -> Result<String> {
        Ok(hash_tensors(&self.export(prefix)?))
    }
}

pub fn hash_tensors(tensors: &[NamedTensor]) -> String {
    let mut h = Sha256::new();
    for t in tensors {
        h.update((t.name.len() as u32).to_le_bytes());
        h.update(t.name.as_bytes());
        for d in &t.dims {
            h.update((*d as u32).to_le_bytes());
        }
        for v in &t.values {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
