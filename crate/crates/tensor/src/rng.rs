//! Counter-addressable random stream.
//!
//! A stream is ChaCha8 keyed by a 64-bit seed; its position is the number of
//! 32-bit words consumed, so `(seed, counter)` pins every later draw.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::element::Float;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

#[derive(Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Rng::new(state.seed);
        rng.inner.set_word_pos(u128::from(state.counter));
        rng
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            counter: self.inner.get_word_pos() as u64,
        }
    }

    /// Independent child stream, keyed by this stream's seed and `tag`.
    pub fn fork(&self, tag: u64) -> Rng {
        let mut rng = Rng::new(self.seed);
        rng.inner.set_stream(tag.wrapping_add(1));
        Rng::new(rng.inner.next_u64())
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        assert!(lo <= hi, "empty range");
        let span = hi - lo + 1;
        if span == 0 {
            return self.inner.next_u64();
        }
        // rejection keeps the draw unbiased
        let zone = u64::MAX - u64::MAX % span;
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return lo + v % span;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Normal with standard deviation `std`, redrawn outside `[-2 std, 2 std]`.
    pub fn trunc_normal(&mut self, std: f64) -> f64 {
        loop {
            let z = self.normal();
            if z.abs() <= 2.0 {
                return z * std;
            }
        }
    }

    pub fn trunc_normal_tensor<F: Float>(&mut self, shape: &[usize], std: f64) -> Tensor<F> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| F::of(self.trunc_normal(std))).collect();
        Tensor::from_vec(shape, data).expect("length matches shape")
    }

    pub fn uniform_tensor<F: Float>(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor<F> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| F::of(lo + (hi - lo) * self.uniform())).collect();
        Tensor::from_vec(shape, data).expect("length matches shape")
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.int_inclusive(0, i as u64) as usize;
            items.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
