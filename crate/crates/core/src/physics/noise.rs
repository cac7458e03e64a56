//! Mixed Poisson/Gaussian measurement noise on line integrals.

use ivct_tensor::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::image::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub photon_intensity: f64,
    pub gaussian_std: f64,
    pub enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            photon_intensity: 1e6,
            gaussian_std: 0.01,
            enabled: true,
        }
    }
}

impl NoiseModel {
    pub fn off() -> Self {
        NoiseModel {
            enabled: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_intensity > 0.0 && self.photon_intensity.is_finite()) {
            return Err(Error::Invalid(format!("photon intensity must be positive, got {}", self.photon_intensity)));
        }
        if !(self.gaussian_std >= 0.0 && self.gaussian_std.is_finite()) {
            return Err(Error::Invalid(format!("gaussian std must be non-negative, got {}", self.gaussian_std)));
        }
        Ok(())
    }

    /// Noisy copy of one line integral.
    pub fn sample(&self, s: f64, rng: &mut Rng) -> f64 {
        let i0 = self.photon_intensity;
        let lambda = i0 * (-s.max(0.0)).exp();
        let counts = if lambda > 0.0 {
            Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        };
        let mut noisy = -(counts.max(1.0) / i0).ln();
        if self.gaussian_std > 0.0 {
            noisy += Normal::new(0.0, self.gaussian_std).expect("validated std").sample(rng);
        }
        noisy
    }
}

/// Applies `noise` to every bin in row-major order. A disabled model returns
/// an exact copy and draws nothing.
pub fn add_noise(sino: &Sinogram, noise: &NoiseModel, rng: &mut Rng) -> Result<Sinogram> {
    noise.validate()?;
    if !noise.enabled {
        return Ok(sino.clone());
    }
    let data = sino.data.iter().map(|&s| noise.sample(s, rng)).collect();
    Sinogram::new(sino.n_detectors, sino.view_indices.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sino() -> Sinogram {
        Sinogram::new(3, vec![0, 1], vec![0.0, 0.5, 1.0, 2.0, 3.0, -0.01]).unwrap()
    }

    #[test]
    fn disabled_is_identity() {
        let s = sino();
        let out = add_noise(&s, &NoiseModel::off(), &mut Rng::new(0)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let s = sino();
        let a = add_noise(&s, &NoiseModel::default(), &mut Rng::new(5)).unwrap();
        let b = add_noise(&s, &NoiseModel::default(), &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, s);
        assert_eq!(a.view_indices, s.view_indices);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = NoiseModel {
            photon_intensity: 0.0,
            ..Default::default()
        };
        assert!(add_noise(&sino(), &bad, &mut Rng::new(0)).is_err());
    }
}
