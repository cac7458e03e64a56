//! 2-D discrete Fourier transforms and complex arithmetic.
//!
//! Complex tensors are stored as real tensors with a trailing axis of length
//! 2 holding (re, im). `fft2` is unnormalized; `ifft2` carries the 1/(HW).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::broadcast::{broadcast_shape, broadcast_strides, zip2};
use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

struct Plan2<F: Float> {
    rows: Arc<dyn Fft<F>>,
    cols: Arc<dyn Fft<F>>,
}

fn plan<F: Float>(h: usize, w: usize, inverse: bool) -> Plan2<F> {
    let mut planner = FftPlanner::new();
    if inverse {
        Plan2 {
            rows: planner.plan_fft_inverse(w),
            cols: planner.plan_fft_inverse(h),
        }
    } else {
        Plan2 {
            rows: planner.plan_fft_forward(w),
            cols: planner.plan_fft_forward(h),
        }
    }
}

/// In-place unnormalized 2-D transform of `batch` contiguous `h x w` planes.
fn transform<F: Float>(buf: &mut [Complex<F>], h: usize, w: usize, inverse: bool) {
    let p = plan::<F>(h, w, inverse);
    let mut column = vec![Complex::new(F::zero(), F::zero()); h];
    for plane in buf.chunks_exact_mut(h * w) {
        p.rows.process(plane);
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            p.cols.process(&mut column);
            for y in 0..h {
                plane[y * w + x] = column[y];
            }
        }
    }
}

fn to_pairs<F: Float>(buf: &[Complex<F>], scale: F) -> Vec<F> {
    buf.iter().flat_map(|c| [c.re * scale, c.im * scale]).collect()
}

fn from_pairs<F: Float>(v: &[F]) -> Vec<Complex<F>> {
    v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect()
}

fn spatial_dims(op: &'static str, shape: &[usize], complex: bool) -> Result<(usize, usize)> {
    let off = usize::from(complex);
    if shape.len() < 2 + off || (complex && shape[shape.len() - 1] != 2) {
        return Err(TensorError::invalid(op, format!("unsupported shape {shape:?}")));
    }
    let (h, w) = (shape[shape.len() - 2 - off], shape[shape.len() - 1 - off]);
    if h == 0 || w == 0 {
        return Err(TensorError::invalid(op, "empty spatial extent"));
    }
    Ok((h, w))
}

fn check_finite<F: Float>(op: &'static str, t: &Tensor<F>) -> Result<()> {
    if t.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl<F: Float> Tensor<F> {
    /// Forward DFT over the last two axes of a real tensor `[..., H, W]`,
    /// producing `[..., H, W, 2]`.
    pub fn fft2(&self) -> Result<Tensor<F>> {
        const OP: &str = "fft2";
        let (h, w) = spatial_dims(OP, self.shape(), false)?;
        check_finite(OP, self)?;
        let mut buf: Vec<Complex<F>> = self.data().iter().map(|&v| Complex::new(v, F::zero())).collect();
        transform(&mut buf, h, w, false);
        let mut shape = self.shape().to_vec();
        shape.push(2);
        Tensor::from_op(OP, shape, to_pairs(&buf, F::one()), vec![self.clone()], move |ctx| {
            // adjoint of the DFT is the conjugate transform; keep the real part
            let mut g = from_pairs(ctx.grad);
            transform(&mut g, h, w, true);
            vec![Some(g.iter().map(|c| c.re).collect())]
        })
    }

    /// Forward DFT of a complex-pair tensor `[..., H, W, 2]`.
    pub fn fft2_complex(&self) -> Result<Tensor<F>> {
        self.complex_transform("fft2_complex", false)
    }

    /// Inverse DFT of a complex-pair tensor `[..., H, W, 2]`, scaled by 1/(HW).
    pub fn ifft2(&self) -> Result<Tensor<F>> {
        self.complex_transform("ifft2", true)
    }

    fn complex_transform(&self, op: &'static str, inverse: bool) -> Result<Tensor<F>> {
        let (h, w) = spatial_dims(op, self.shape(), true)?;
        check_finite(op, self)?;
        let scale = if inverse { F::one() / F::of((h * w) as f64) } else { F::one() };
        let mut buf = from_pairs(self.data());
        transform(&mut buf, h, w, inverse);
        Tensor::from_op(op, self.shape().to_vec(), to_pairs(&buf, scale), vec![self.clone()], move |ctx| {
            let mut g = from_pairs(ctx.grad);
            transform(&mut g, h, w, !inverse);
            vec![Some(to_pairs(&g, scale))]
        })
    }

    /// Real tensor to complex pairs with zero imaginary part.
    pub fn to_complex(&self) -> Result<Tensor<F>> {
        let out: Vec<F> = self.data().iter().flat_map(|&v| [v, F::zero()]).collect();
        let mut shape = self.shape().to_vec();
        shape.push(2);
        Tensor::from_op("to_complex", shape, out, vec![self.clone()], |ctx| {
            vec![Some(ctx.grad.chunks_exact(2).map(|p| p[0]).collect())]
        })
    }

    /// Real part of a complex-pair tensor.
    pub fn real(&self) -> Result<Tensor<F>> {
        if self.shape().last() != Some(&2) {
            return Err(TensorError::invalid("real", format!("unsupported shape {:?}", self.shape())));
        }
        let out: Vec<F> = self.data().chunks_exact(2).map(|p| p[0]).collect();
        let shape = self.shape()[..self.ndim() - 1].to_vec();
        Tensor::from_op("real", shape, out, vec![self.clone()], |ctx| {
            vec![Some(ctx.grad.iter().flat_map(|&g| [g, F::zero()]).collect())]
        })
    }

    /// Element-wise complex product of two complex-pair tensors with
    /// broadcasting over the leading axes.
    pub fn complex_mul(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        const OP: &str = "complex_mul";
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.last() != Some(&2) || sb.last() != Some(&2) {
            return Err(TensorError::shape(OP, sa, sb));
        }
        let a_shape = sa[..sa.len() - 1].to_vec();
        let b_shape = sb[..sb.len() - 1].to_vec();
        let out_shape = broadcast_shape(OP, &a_shape, &b_shape)?;
        let stra = broadcast_strides(&a_shape, &out_shape);
        let strb = broadcast_strides(&b_shape, &out_shape);
        let (a, b) = (self.data(), rhs.data());
        let n_out: usize = out_shape.iter().product();
        let mut out = vec![F::zero(); 2 * n_out];
        zip2(&out_shape, &stra, &strb, |o, i, j| {
            let (ar, ai, br, bi) = (a[2 * i], a[2 * i + 1], b[2 * j], b[2 * j + 1]);
            out[2 * o] = ar * br - ai * bi;
            out[2 * o + 1] = ar * bi + ai * br;
        });
        let (lhs, rhs_t) = (self.clone(), rhs.clone());
        let mut shape = out_shape.clone();
        shape.push(2);
        Tensor::from_op(OP, shape, out, vec![self.clone(), rhs.clone()], move |ctx| {
            let g = ctx.grad;
            let (a, b) = (lhs.data(), rhs_t.data());
            let mut ga = ctx.needs[0].then(|| vec![F::zero(); a.len()]);
            let mut gb = ctx.needs[1].then(|| vec![F::zero(); b.len()]);
            zip2(&out_shape, &stra, &strb, |o, i, j| {
                let (gr, gi) = (g[2 * o], g[2 * o + 1]);
                if let Some(ga) = ga.as_mut() {
                    // g * conj(b)
                    let (br, bi) = (b[2 * j], b[2 * j + 1]);
                    ga[2 * i] += gr * br + gi * bi;
                    ga[2 * i + 1] += gi * br - gr * bi;
                }
                if let Some(gb) = gb.as_mut() {
                    let (ar, ai) = (a[2 * i], a[2 * i + 1]);
                    gb[2 * j] += gr * ar + gi * ai;
                    gb[2 * j + 1] += gi * ar - gr * ai;
                }
            });
            vec![ga, gb]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 17) as f64 / 17.0 - 0.4) * 1.3).collect()
    }

    #[test]
    fn roundtrip_recovers_input() {
        let x = Tensor::<f64>::from_vec(&[2, 5, 6], sample(60)).unwrap();
        let back = x.fft2().unwrap().ifft2().unwrap().real().unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_image_has_only_dc() {
        let x = Tensor::<f64>::full(&[4, 4], 2.5);
        let f = x.fft2().unwrap();
        let d = f.data();
        assert!((d[0] - 40.0).abs() < 1e-12 && d[1].abs() < 1e-12);
        assert!(d[2..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn parseval() {
        let x = Tensor::<f64>::from_vec(&[7, 5], sample(35)).unwrap();
        let f = x.fft2().unwrap();
        let ex: f64 = x.data().iter().map(|v| v * v).sum();
        let ef: f64 = f.data().iter().map(|v| v * v).sum::<f64>() / 35.0;
        assert!((ex - ef).abs() < 1e-8);
    }

    #[test]
    fn complex_mul_broadcasts() {
        let a = Tensor::<f64>::from_f64(&[2, 1, 2], &[1.0, 2.0, 0.0, 1.0]).unwrap();
        let b = Tensor::<f64>::from_f64(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 2.0, -1.0]).unwrap();
        let c = a.complex_mul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2]);
        // (1+2i)(2-i) = 4+3i ; i*i = -1
        assert_eq!(&c.data()[4..6], &[4.0, 3.0]);
        assert_eq!(&c.data()[8..10], &[-1.0, 0.0]);
    }
}
