use candle_core::{DType, Tensor, Var};

use crate::Result;

/// Relative errors below this denominator are measured against it instead,
/// so entries whose gradient is numerically zero do not blow up the ratio.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(REL_FLOOR);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Compares the autograd gradient of the scalar `f()` with respect to `var`
/// against central differences of step `h` at the given flat indices.
/// `var` is restored to its original value before returning.
pub fn gradient_check(var: &Var, indices: &[usize], h: f64, f: &dyn Fn() -> Result<Tensor>) -> Result<Vec<GradCheck>> {
    let loss = f()?;
    let grads = loss.backward()?;
    let analytic: Vec<f64> = match grads.get(var.as_tensor()) {
        Some(g) => g.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?,
        None => vec![0.0; var.elem_count()],
    };
    let original = var.as_tensor().copy()?;
    let base: Vec<f64> = original.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    let eval_at = |idx: usize, value: f64| -> Result<f64> {
        let mut v = base.clone();
        v[idx] = value;
        let t = Tensor::from_vec(v, var.shape(), var.device())?.to_dtype(var.dtype())?;
        var.set(&t)?;
        crate::nn::scalar(&f()?)
    };
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let plus = eval_at(i, base[i] + h)?;
        let minus = eval_at(i, base[i] - h)?;
        out.push(GradCheck {
            index: i,
            analytic: analytic[i],
            numeric: (plus - minus) / (2.0 * h),
        });
    }
    var.set(&original)?;
    Ok(out)
}

/// Largest relative error over a set of checks.
pub fn max_rel_error(checks: &[GradCheck]) -> f64 {
    checks.iter().map(GradCheck::rel_error).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn cubic_matches_closed_form() {
        let x = Var::new(&[0.5f64, -1.25, 2.0], &Device::Cpu).unwrap();
        let checks = gradient_check(&x, &[0, 1, 2], 1e-5, &|| Ok(x.as_tensor().powf(3.0)?.sum_all()?)).unwrap();
        for c in &checks {
            let v = [0.5, -1.25, 2.0][c.index];
            assert!((c.analytic - 3.0 * v * v).abs() < 1e-12);
        }
        assert!(max_rel_error(&checks) < 1e-8);
        assert_eq!(x.as_tensor().to_vec1::<f64>().unwrap(), vec![0.5, -1.25, 2.0]);
    }
}
