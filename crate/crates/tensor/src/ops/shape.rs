//! Layout ops: reshape, permute, slicing, concatenation and spatial padding.

use crate::broadcast::{contiguous_strides, zip2};
use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::{numel, Tensor};

/// Border handling for [`Tensor::pad2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample. Axes of length one fall
    /// back to edge replication.
    Reflect,
}

#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

impl<F: Float> Tensor<F> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<F>> {
        if numel(shape) != self.numel() {
            return Err(TensorError::shape("reshape", self.shape(), shape));
        }
        Tensor::from_op_shared(
            "reshape",
            shape.to_vec(),
            self.shared_data(),
            vec![self.clone()],
            Box::new(|ctx| vec![Some(ctx.grad.to_vec())]),
        )
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::invalid("permute", format!("bad axes {axes:?} for {shape:?}")));
        }
        let in_strides = contiguous_strides(&shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let sa: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let zeros = vec![0; shape.len()];
        let x = self.data();
        let mut out = vec![F::zero(); x.len()];
        zip2(&out_shape, &sa, &zeros, |o, i, _| out[o] = x[i]);
        let bwd_shape = out_shape.clone();
        Tensor::from_op("permute", out_shape, out, vec![self.clone()], move |ctx| {
            let mut gx = vec![F::zero(); ctx.grad.len()];
            zip2(&bwd_shape, &sa, &zeros, |o, i, _| gx[i] = ctx.grad[o]);
            vec![Some(gx)]
        })
    }

    /// Slice `len` entries of `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(TensorError::invalid(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let strides = contiguous_strides(&shape);
        let offset = start * strides[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let zeros = vec![0; shape.len()];
        let x = self.data();
        let mut out = vec![F::zero(); numel(&out_shape)];
        zip2(&out_shape, &strides, &zeros, |o, i, _| out[o] = x[offset + i]);
        let n_in = x.len();
        let bwd_shape = out_shape.clone();
        Tensor::from_op("narrow", out_shape, out, vec![self.clone()], move |ctx| {
            let mut gx = vec![F::zero(); n_in];
            zip2(&bwd_shape, &strides, &zeros, |o, i, _| gx[offset + i] = ctx.grad[o]);
            vec![Some(gx)]
        })
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor<F>], axis: usize) -> Result<Tensor<F>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no inputs"))?;
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return Err(TensorError::invalid("concat", format!("axis {axis} out of range")));
        }
        for p in parts {
            let s = p.shape();
            let ok = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::shape("concat", &base, s));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                out.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        Tensor::from_op("concat", out_shape, out, parts.to_vec(), move |ctx| {
            let mut grads: Vec<Option<Vec<F>>> = lens
                .iter()
                .zip(ctx.needs)
                .map(|(&l, &need)| need.then(|| Vec::with_capacity(outer * l * inner)))
                .collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (g, &l) in grads.iter_mut().zip(&lens) {
                    let n = l * inner;
                    if let Some(g) = g.as_mut() {
                        g.extend_from_slice(&ctx.grad[pos..pos + n]);
                    }
                    pos += n;
                }
            }
            grads
        })
    }

    /// Pads the last two axes by `(top, bottom, left, right)`.
    pub fn pad2d(&self, pads: [usize; 4], mode: PadMode) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        if shape.len() < 2 {
            return Err(TensorError::invalid("pad2d", "needs at least two axes"));
        }
        let [top, bottom, left, right] = pads;
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        if mode == PadMode::Reflect && ((h > 1 && top.max(bottom) >= h) || (w > 1 && left.max(right) >= w)) {
            return Err(TensorError::invalid(
                "pad2d",
                format!("reflect padding {pads:?} too large for {h}x{w}"),
            ));
        }
        let (ho, wo) = (h + top + bottom, w + left + right);
        let planes: usize = shape[..shape.len() - 2].iter().product();
        // Source index for every output pixel of one plane; None means zero.
        let src: Vec<Option<usize>> = (0..ho * wo)
            .map(|k| {
                let (r, c) = ((k / wo) as isize - top as isize, (k % wo) as isize - left as isize);
                let inside = r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w;
                match mode {
                    _ if inside => Some(r as usize * w + c as usize),
                    PadMode::Zero => None,
                    PadMode::Reflect => Some(reflect_index(r, h) * w + reflect_index(c, w)),
                }
            })
            .collect();
        let x = self.data();
        let mut out = vec![F::zero(); planes * ho * wo];
        for p in 0..planes {
            let (xi, xo) = (&x[p * h * w..(p + 1) * h * w], &mut out[p * ho * wo..(p + 1) * ho * wo]);
            for (o, s) in xo.iter_mut().zip(&src) {
                if let Some(s) = s {
                    *o = xi[*s];
                }
            }
        }
        let mut out_shape = shape.clone();
        let n = out_shape.len();
        out_shape[n - 2] = ho;
        out_shape[n - 1] = wo;
        Tensor::from_op("pad2d", out_shape, out, vec![self.clone()], move |ctx| {
            let mut gx = vec![F::zero(); planes * h * w];
            for p in 0..planes {
                let g = &ctx.grad[p * ho * wo..(p + 1) * ho * wo];
                let gi = &mut gx[p * h * w..(p + 1) * h * w];
                for (gv, s) in g.iter().zip(&src) {
                    if let Some(s) = s {
                        gi[*s] += *gv;
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Window `[top, top+height) x [left, left+width)` of the last two axes.
    pub fn crop2d(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        let n = shape.len();
        if n < 2 || top + height > shape[n - 2] || left + width > shape[n - 1] {
            return Err(TensorError::invalid(
                "crop2d",
                format!("crop {height}x{width} at ({top},{left}) outside {shape:?}"),
            ));
        }
        self.narrow(n - 2, top, height)?.narrow(n - 1, left, width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: &[usize]) -> Tensor<f64> {
        let n = numel(shape);
        Tensor::from_vec(shape, (0..n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn permute_transposes() {
        let x = seq(&[2, 3]);
        let y = x.permute(&[1, 0]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn reflect_pad_values() {
        let x = seq(&[1, 3]);
        let y = x.pad2d([0, 0, 2, 2], PadMode::Reflect).unwrap();
        assert_eq!(y.data(), &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        assert!(x.pad2d([0, 0, 3, 0], PadMode::Reflect).is_err());
    }

    #[test]
    fn pad_backward_accumulates_mirrored_entries() {
        let x = seq(&[1, 3]).requires_grad(true);
        x.pad2d([0, 0, 1, 1], PadMode::Reflect).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 3.0, 1.0]);
    }

    #[test]
    fn concat_and_narrow_roundtrip() {
        let a = seq(&[2, 1, 2]);
        let b = seq(&[2, 2, 2]);
        let c = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.shape(), &[2, 3, 2]);
        assert_eq!(c.narrow(1, 0, 1).unwrap().data(), a.data());
        assert_eq!(c.narrow(1, 1, 2).unwrap().data(), b.data());
    }

    #[test]
    fn crop_inverts_zero_pad() {
        let x = seq(&[2, 4, 5]);
        let y = x.pad2d([1, 2, 3, 0], PadMode::Zero).unwrap().crop2d(1, 3, 4, 5).unwrap();
        assert_eq!(y.data(), x.data());
    }
}
