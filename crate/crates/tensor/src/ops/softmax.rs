use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl<F: Float> Tensor<F> {
    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::invalid("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let x = self.data();
        let mut y = vec![F::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let at = |k: usize| base + k * inner;
                let m = (0..len).map(|k| x[at(k)]).fold(F::neg_infinity(), F::max);
                let mut z = F::zero();
                for k in 0..len {
                    let e = (x[at(k)] - m).exp();
                    y[at(k)] = e;
                    z += e;
                }
                for k in 0..len {
                    y[at(k)] /= z;
                }
            }
        }
        Tensor::from_op("softmax", shape, y, vec![self.clone()], move |ctx| {
            let (y, g) = (ctx.output, ctx.grad);
            let mut gx = vec![F::zero(); y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let dot: F = (0..len).map(|k| g[base + k * inner] * y[base + k * inner]).sum();
                    for k in 0..len {
                        let j = base + k * inner;
                        gx[j] = y[j] * (g[j] - dot);
                    }
                }
            }
            vec![Some(gx)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_on_equal_logits() {
        let y = Tensor::<f64>::zeros(&[4]).softmax(0).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn shift_invariant_and_normalized() {
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1.0, -2.0, 0.5, 3.0, 3.0, -1.0]).unwrap();
        let a = x.softmax(1).unwrap();
        let b = x.add_scalar(100.0).unwrap().softmax(1).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
        let c = x.softmax(0).unwrap();
        for j in 0..3 {
            assert!((c.data()[j] + c.data()[3 + j] - 1.0).abs() < 1e-12);
        }
    }
}
