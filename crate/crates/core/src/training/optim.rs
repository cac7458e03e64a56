//! Adam with bias correction, plus global-norm gradient clipping.

use ivct_tensor::{Float, Tensor};

use crate::error::{Error, Result};

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<F: Float> {
    pub beta1: f64,
    pub beta2: f64,
    pub step: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(params: &[Tensor<F>], beta1: f64, beta2: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![F::zero(); p.numel()]).collect();
        Adam {
            beta1,
            beta2,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update; returns the new parameter values.
    pub fn update(&mut self, params: &[Tensor<F>], grads: &[Vec<F>], lr: f64) -> Result<Vec<Tensor<F>>> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2) = (self.beta1, self.beta2);
        let mut out = Vec::with_capacity(params.len());
        for (k, p) in params.iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            if g.len() != p.numel() || m.len() != p.numel() {
                return Err(Error::Shape(format!("gradient {k} has {} values for {} parameters", g.len(), p.numel())));
            }
            let data: Vec<F> = p
                .data()
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let gi = g[i].as_f64();
                    let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
                    let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
                    m[i] = F::of(mi);
                    v[i] = F::of(vi);
                    F::of(w.as_f64() - lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS))
                })
                .collect();
            out.push(Tensor::from_vec(p.shape(), data)?);
        }
        Ok(out)
    }
}

pub fn global_norm<F: Float>(grads: &[Vec<F>]) -> f64 {
    grads.iter().flatten().map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt()
}

/// Rescales all gradients together so their joint norm is at most
/// `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<F: Float>(grads: &mut [Vec<F>], max_norm: f64) -> Result<f64> {
    let norm = global_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("gradient norm {norm}")));
    }
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g = F::of(g.as_f64() * s));
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first step exactly lr * sign(g) (up to eps)
        let p = vec![Tensor::<f64>::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap()];
        let mut opt = Adam::new(&p, 0.5, 0.999);
        let out = opt.update(&p, &[vec![0.3, -2.0, 0.0]], 0.1).unwrap();
        let d: Vec<f64> = out[0].data().iter().zip(p[0].data()).map(|(a, b)| a - b).collect();
        assert!((d[0] + 0.1).abs() < 1e-6 && (d[1] - 0.1).abs() < 1e-6 && d[2] == 0.0);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Tensor::<f64>::from_f64(&[2], &[3.0, -4.0]).unwrap()];
        let mut opt = Adam::new(&p, 0.5, 0.999);
        for _ in 0..500 {
            let g = vec![p[0].data().iter().map(|x| 2.0 * x).collect()];
            p = opt.update(&p, &g, 0.05).unwrap();
        }
        assert!(p[0].data().iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn clipping() {
        let mut g = vec![vec![3.0f64], vec![4.0]];
        assert_eq!(clip_global_norm(&mut g, 1.0).unwrap(), 5.0);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
        let mut small = vec![vec![0.1f64]];
        clip_global_norm(&mut small, 1.0).unwrap();
        assert_eq!(small[0][0], 0.1);
        assert!(clip_global_norm(&mut [vec![f64::NAN]], 1.0).is_err());
    }
}
