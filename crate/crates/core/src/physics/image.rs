//! Plain value types for reconstructed images and (possibly reduced)
//! sinograms. Physics runs in `f64`; networks see `Tensor` copies.

use ivct_tensor::{Float, Tensor};

use crate::error::{Error, Result};
use crate::physics::geometry::ScanGeometry;

/// Square image in normalized attenuation units, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub size: usize,
    pub pixel_spacing: f64,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, pixel_spacing: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::Shape(format!("{} values for a {size}x{size} image", data.len())));
        }
        Ok(Image {
            size,
            pixel_spacing,
            data,
        })
    }

    pub fn zeros(size: usize, pixel_spacing: f64) -> Self {
        Image {
            size,
            pixel_spacing,
            data: vec![0.0; size * size],
        }
    }

    pub fn for_geometry(geo: &ScanGeometry, data: Vec<f64>) -> Result<Self> {
        Image::new(geo.image_size, geo.pixel_spacing, data)
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn check_grid(&self, geo: &ScanGeometry) -> Result<()> {
        if self.size != geo.image_size {
            return Err(Error::Geometry(format!(
                "image is {0}x{0} but the geometry grid is {1}x{1}",
                self.size, geo.image_size
            )));
        }
        Ok(())
    }

    pub fn clamped(&self) -> Image {
        Image {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    /// `[1, 1, H, W]` tensor.
    pub fn to_tensor<F: Float>(&self) -> Tensor<F> {
        let data = self.data.iter().map(|&v| F::of(v)).collect();
        Tensor::from_vec(&[1, 1, self.size, self.size], data).expect("square image")
    }

    /// Takes the single image out of a `[1, 1, H, W]` (or `[H, W]`) tensor.
    pub fn from_tensor<F: Float>(t: &Tensor<F>, pixel_spacing: f64) -> Result<Self> {
        let s = t.shape();
        let (h, w) = (s[s.len().saturating_sub(2)], s[s.len().saturating_sub(1)]);
        if s.len() < 2 || h != w || t.numel() != h * w {
            return Err(Error::Shape(format!("expected one square image, got {s:?}")));
        }
        Image::new(h, pixel_spacing, t.to_f64_vec())
    }
}

/// Sinogram rows for a sorted subset of the full view set.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_detectors: usize,
    /// Full-view index of each row, strictly increasing.
    pub view_indices: Vec<usize>,
    /// `[rows, n_detectors]`, dimensionless line integrals.
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_detectors: usize, view_indices: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if data.len() != view_indices.len() * n_detectors {
            return Err(Error::Shape(format!(
                "{} values for {} views x {n_detectors} detectors",
                data.len(),
                view_indices.len()
            )));
        }
        if view_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid_order());
        }
        Ok(Sinogram {
            n_detectors,
            view_indices,
            data,
        })
    }

    pub fn zeros(geo: &ScanGeometry, view_indices: Vec<usize>) -> Self {
        let n = view_indices.len() * geo.n_detectors;
        Sinogram {
            n_detectors: geo.n_detectors,
            view_indices,
            data: vec![0.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.view_indices.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_detectors..(r + 1) * self.n_detectors]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.n_detectors..(r + 1) * self.n_detectors]
    }

    pub fn check_geometry(&self, geo: &ScanGeometry) -> Result<()> {
        if self.n_detectors != geo.n_detectors {
            return Err(Error::Geometry(format!(
                "sinogram has {} detectors, geometry {}",
                self.n_detectors, geo.n_detectors
            )));
        }
        if let Some(&last) = self.view_indices.last() {
            if last >= geo.n_full_views {
                return Err(Error::Geometry(format!(
                    "view index {last} out of range for {} views",
                    geo.n_full_views
                )));
            }
        }
        if self.view_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid_order());
        }
        Ok(())
    }

    pub fn is_full(&self, geo: &ScanGeometry) -> bool {
        self.rows() == geo.n_full_views
    }

    /// `[1, 1, rows, detectors]` tensor.
    pub fn to_tensor<F: Float>(&self) -> Tensor<F> {
        let data = self.data.iter().map(|&v| F::of(v)).collect();
        Tensor::from_vec(&[1, 1, self.rows(), self.n_detectors], data).expect("sinogram shape")
    }
}

fn invalid_order() -> Error {
    Error::Invalid("sinogram view indices must be strictly increasing".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip() {
        let img = Image::new(3, 1.0, (0..9).map(|v| v as f64 / 8.0).collect()).unwrap();
        let t = img.to_tensor::<f64>();
        assert_eq!(t.shape(), &[1, 1, 3, 3]);
        assert_eq!(Image::from_tensor(&t, 1.0).unwrap(), img);
    }

    #[test]
    fn rejects_unsorted_views() {
        assert!(Sinogram::new(2, vec![3, 1], vec![0.0; 4]).is_err());
        assert!(Sinogram::new(2, vec![1, 3], vec![0.0; 3]).is_err());
    }
}
