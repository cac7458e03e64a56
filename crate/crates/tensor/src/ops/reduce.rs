use crate::broadcast::{broadcast_strides, contiguous_strides, zip2};
use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl<F: Float> Tensor<F> {
    pub fn sum(&self) -> Result<Tensor<F>> {
        let total: F = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![], vec![total], vec![self.clone()], move |ctx| {
            vec![Some(vec![ctx.grad[0]; n])]
        })
    }

    pub fn mean(&self) -> Result<Tensor<F>> {
        let n = self.numel();
        if n == 0 {
            return Err(TensorError::invalid("mean", "empty tensor"));
        }
        self.sum()?.mul_scalar(F::one() / F::of(n as f64))
    }

    /// Sums over `dims`. With `keepdim` the reduced axes stay as size 1.
    pub fn sum_dims(&self, dims: &[usize], keepdim: bool) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        if let Some(&d) = dims.iter().find(|&&d| d >= shape.len()) {
            return Err(TensorError::invalid("sum_dims", format!("axis {d} out of range for {shape:?}")));
        }
        let kept: Vec<usize> = shape
            .iter()
            .enumerate()
            .map(|(i, &s)| if dims.contains(&i) { 1 } else { s })
            .collect();
        let sx = contiguous_strides(&shape);
        let sr = broadcast_strides(&kept, &shape);
        let mut out = vec![F::zero(); kept.iter().product()];
        let x = self.data();
        zip2(&shape, &sx, &sr, |_, i, j| out[j] += x[i]);
        let out_shape: Vec<usize> = if keepdim {
            kept.clone()
        } else {
            shape
                .iter()
                .enumerate()
                .filter(|(i, _)| !dims.contains(i))
                .map(|(_, &s)| s)
                .collect()
        };
        Tensor::from_op("sum_dims", out_shape, out, vec![self.clone()], move |ctx| {
            let mut gx = vec![F::zero(); shape.iter().product()];
            zip2(&shape, &sx, &sr, |_, i, j| gx[i] = ctx.grad[j]);
            vec![Some(gx)]
        })
    }

    pub fn mean_dims(&self, dims: &[usize], keepdim: bool) -> Result<Tensor<F>> {
        let count: usize = dims.iter().filter_map(|&d| self.shape().get(d)).product();
        if count == 0 {
            return Err(TensorError::invalid("mean_dims", "empty reduction"));
        }
        self.sum_dims(dims, keepdim)?.mul_scalar(F::one() / F::of(count as f64))
    }
}
