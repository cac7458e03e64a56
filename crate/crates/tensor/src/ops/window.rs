//! Non-overlapping square windows for local attention.

use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::ops::shape::PadMode;
use crate::tensor::Tensor;

/// Where a `[N, C, H, W]` map went when it was split into windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowLayout {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub win: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub rows: usize,
    pub cols: usize,
}

impl WindowLayout {
    pub fn new(shape: &[usize], win: usize) -> Result<Self> {
        const OP: &str = "window_partition";
        if shape.len() != 4 {
            return Err(TensorError::invalid(OP, format!("expected [N, C, H, W], got {shape:?}")));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if win == 0 || win > 2 * h.min(w) {
            return Err(TensorError::invalid(OP, format!("window {win} does not fit a {h}x{w} map")));
        }
        let (rows, cols) = (h.div_ceil(win), w.div_ceil(win));
        Ok(WindowLayout {
            n,
            c,
            h,
            w,
            win,
            pad_top: (rows * win - h) / 2,
            pad_left: (cols * win - w) / 2,
            rows,
            cols,
        })
    }

    pub fn count(&self) -> usize {
        self.n * self.rows * self.cols
    }

    fn pads(&self) -> [usize; 4] {
        let (ph, pw) = (self.rows * self.win - self.h, self.cols * self.win - self.w);
        [self.pad_top, ph - self.pad_top, self.pad_left, pw - self.pad_left]
    }
}

impl<F: Float> Tensor<F> {
    /// Splits `[N, C, H, W]` into `[N * rows * cols, C, win, win]`, reflect
    /// padding first when the sides are not multiples of `win`.
    pub fn window_partition(&self, win: usize) -> Result<(Tensor<F>, WindowLayout)> {
        let l = WindowLayout::new(self.shape(), win)?;
        let pads = l.pads();
        let x = if pads.iter().any(|&p| p > 0) {
            self.pad2d(pads, PadMode::Reflect)?
        } else {
            self.clone()
        };
        let windows = x
            .reshape(&[l.n, l.c, l.rows, win, l.cols, win])?
            .permute(&[0, 2, 4, 1, 3, 5])?
            .reshape(&[l.count(), l.c, win, win])?;
        Ok((windows, l))
    }

    /// Inverse of [`Tensor::window_partition`]; crops any padding.
    pub fn window_merge(&self, l: &WindowLayout) -> Result<Tensor<F>> {
        let expect = [l.count(), self.shape().get(1).copied().unwrap_or(0), l.win, l.win];
        if self.ndim() != 4 || self.shape()[0] != expect[0] || self.shape()[2..] != expect[2..] {
            return Err(TensorError::shape("window_merge", self.shape(), &expect));
        }
        let c = self.shape()[1];
        let full = self
            .reshape(&[l.n, l.rows, l.cols, c, l.win, l.win])?
            .permute(&[0, 3, 1, 4, 2, 5])?
            .reshape(&[l.n, c, l.rows * l.win, l.cols * l.win])?;
        if full.shape()[2] == l.h && full.shape()[3] == l.w {
            Ok(full)
        } else {
            full.crop2d(l.pad_top, l.pad_left, l.h, l.w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product::<usize>();
        Tensor::from_vec(shape, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn divisible_map_splits_into_four() {
        let x = ramp(&[1, 2, 16, 16]);
        let (w, l) = x.window_partition(8).unwrap();
        assert_eq!(w.shape(), &[4, 2, 8, 8]);
        // second window starts at column 8 of the first row band
        assert_eq!(w.data()[2 * 64], 8.0);
        assert_eq!(w.window_merge(&l).unwrap().data(), x.data());
    }

    #[test]
    fn padded_map_roundtrips() {
        let x = ramp(&[2, 1, 12, 12]);
        let (w, l) = x.window_partition(8).unwrap();
        assert_eq!(w.shape(), &[8, 1, 8, 8]);
        assert_eq!(w.window_merge(&l).unwrap().data(), x.data());
    }

    #[test]
    fn unit_window_and_oversized_window() {
        let x = ramp(&[1, 3, 4, 5]);
        let (w, l) = x.window_partition(1).unwrap();
        assert_eq!(w.shape(), &[20, 3, 1, 1]);
        assert_eq!(w.window_merge(&l).unwrap().data(), x.data());
        assert!(x.window_partition(9).is_err());
    }
}
