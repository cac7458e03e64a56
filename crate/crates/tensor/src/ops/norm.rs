//! Per-sample layer normalization that also hands back the removed
//! statistics, so a block can re-inject them after its residual branch.

use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-6;

pub struct NormOutput<F: Float> {
    /// `(x - mean) / std * weight + bias`.
    pub normalized: Tensor<F>,
    /// `[N, 1, 1, 1]`.
    pub mean: Tensor<F>,
    /// `[N, 1, 1, 1]`, `sqrt(var + eps)`.
    pub std: Tensor<F>,
}

impl<F: Float> Tensor<F> {
    /// Normalizes each sample of `[N, C, H, W]` over (C, H, W). `weight` and
    /// `bias` are per-channel with shape `[1, C, 1, 1]`.
    pub fn rescaled_layer_norm(&self, weight: &Tensor<F>, bias: &Tensor<F>) -> Result<NormOutput<F>> {
        let s = self.shape();
        if s.len() != 4 || s[1] * s[2] * s[3] < 2 {
            return Err(TensorError::invalid("rescaled_layer_norm", format!("unsupported shape {s:?}")));
        }
        let c = s[1];
        for p in [weight, bias] {
            if p.shape() != [1, c, 1, 1] {
                return Err(TensorError::shape("rescaled_layer_norm", p.shape(), &[1, c, 1, 1]));
            }
        }
        let mean = self.mean_dims(&[1, 2, 3], true)?;
        let centered = self.sub(&mean)?;
        let var = centered.square()?.mean_dims(&[1, 2, 3], true)?;
        let std = var.add_scalar(F::of(NORM_EPS))?.sqrt()?;
        let normalized = centered.div(&std)?.mul(weight)?.add(bias)?;
        Ok(NormOutput { normalized, mean, std })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(c: usize) -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::ones(&[1, c, 1, 1]), Tensor::zeros(&[1, c, 1, 1]))
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = Tensor::<f64>::full(&[2, 3, 4, 4], 0.7);
        let (w, b) = affine(3);
        let out = x.rescaled_layer_norm(&w, &b).unwrap();
        assert!(out.normalized.data().iter().all(|v| v.abs() < 1e-9));
        assert!(out.mean.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn zero_mean_unit_variance() {
        let vals: Vec<f64> = (0..2 * 3 * 5 * 5).map(|i| ((i * 13 % 29) as f64).sin() * 3.0 + 1.0).collect();
        let x = Tensor::from_vec(&[2, 3, 5, 5], vals).unwrap();
        let (w, b) = affine(3);
        let out = x.rescaled_layer_norm(&w, &b).unwrap();
        for sample in out.normalized.data().chunks(75) {
            let m: f64 = sample.iter().sum::<f64>() / 75.0;
            let v: f64 = sample.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 75.0;
            assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-5);
        }
    }
}
