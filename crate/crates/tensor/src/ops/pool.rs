use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

impl<F: Float> Tensor<F> {
    /// Non-overlapping `k x k` average pooling of `[N, C, H, W]`; trailing
    /// rows/columns that do not fill a window are dropped.
    pub fn avg_pool2d(&self, k: usize) -> Result<Tensor<F>> {
        let s = self.shape();
        if s.len() != 4 || k == 0 || s[2] < k || s[3] < k {
            return Err(TensorError::invalid("avg_pool2d", format!("kernel {k} on shape {s:?}")));
        }
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / k, w / k);
        let inv = F::one() / F::of((k * k) as f64);
        let x = self.data();
        let mut out = vec![F::zero(); nc * ho * wo];
        for p in 0..nc {
            for y in 0..ho * k {
                let row = &x[(p * h + y) * w..(p * h + y) * w + wo * k];
                let dst = &mut out[(p * ho + y / k) * wo..(p * ho + y / k + 1) * wo];
                for (xx, &v) in row.iter().enumerate() {
                    dst[xx / k] += v * inv;
                }
            }
        }
        let shape = vec![s[0], s[1], ho, wo];
        Tensor::from_op("avg_pool2d", shape, out, vec![self.clone()], move |ctx| {
            let g = ctx.grad;
            let mut gx = vec![F::zero(); nc * h * w];
            for p in 0..nc {
                for y in 0..ho * k {
                    let src = &g[(p * ho + y / k) * wo..(p * ho + y / k + 1) * wo];
                    let row = &mut gx[(p * h + y) * w..(p * h + y) * w + wo * k];
                    for (xx, v) in row.iter_mut().enumerate() {
                        *v = src[xx / k] * inv;
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
    fn averages_blocks_and_drops_remainder() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 3, 4], (0..12).map(f64::from).collect()).unwrap();
        let y = x.avg_pool2d(2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert_eq!(y.data(), &[2.5, 4.5]);
    }
}
