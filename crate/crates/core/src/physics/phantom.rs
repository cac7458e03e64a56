//! Analytic ellipse phantoms on normalized `[-1, 1]` coordinates.

use ivct_tensor::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    SheppLogan,
    RandomEllipses,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shepp_logan" | "shepp-logan" => Ok(PhantomKind::SheppLogan),
            "random_ellipses" | "random-ellipses" => Ok(PhantomKind::RandomEllipses),
            _ => Err(Error::Invalid(format!("unknown phantom kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    /// Rotation, radians.
    pub phi: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (c, s) = (self.phi.cos(), self.phi.sin());
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Modified Shepp-Logan table (higher-contrast intensities).
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

pub fn shepp_logan_ellipses() -> Vec<Ellipse> {
    SHEPP_LOGAN
        .iter()
        .map(|&(value, a, b, x0, y0, phi)| Ellipse {
            value,
            a,
            b,
            x0,
            y0,
            phi: phi.to_radians(),
        })
        .collect()
}

/// Rasterizes by point sampling at pixel centres, clamped to `[0, 1]`.
pub fn rasterize(ellipses: &[Ellipse], size: usize, pixel_spacing: f64) -> Image {
    let mut data = vec![0.0; size * size];
    for r in 0..size {
        let y = 1.0 - (2.0 * r as f64 + 1.0) / size as f64;
        for c in 0..size {
            let x = (2.0 * c as f64 + 1.0) / size as f64 - 1.0;
            let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum();
            data[r * size + c] = v.clamp(0.0, 1.0);
        }
    }
    Image {
        size,
        pixel_spacing,
        data,
    }
}

/// A body-like outer ellipse plus 2 to 7 random inner structures.
pub fn random_ellipses(rng: &mut Rng) -> Vec<Ellipse> {
    let count = rng.int_inclusive(3, 8) as usize;
    let mut out = Vec::with_capacity(count);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    out.push(Ellipse {
        value: u(0.3, 0.6),
        a: u(0.55, 0.85),
        b: u(0.55, 0.85),
        x0: u(-0.08, 0.08),
        y0: u(-0.08, 0.08),
        phi: u(0.0, std::f64::consts::PI),
    });
    for _ in 1..count {
        let radius = 0.55 * u(0.0, 1.0).sqrt();
        let theta = u(0.0, 2.0 * std::f64::consts::PI);
        out.push(Ellipse {
            value: u(-0.3, 0.5),
            a: u(0.04, 0.3),
            b: u(0.04, 0.3),
            x0: radius * theta.cos(),
            y0: radius * theta.sin(),
            phi: u(0.0, std::f64::consts::PI),
        });
    }
    out
}

pub fn make_phantom(kind: PhantomKind, size: usize, pixel_spacing: f64, rng: &mut Rng) -> Result<Image> {
    if size < 16 {
        return Err(Error::Invalid(format!("phantom size {size} is below the minimum of 16")));
    }
    Ok(match kind {
        PhantomKind::SheppLogan => rasterize(&shepp_logan_ellipses(), size, pixel_spacing),
        PhantomKind::RandomEllipses => rasterize(&random_ellipses(rng), size, pixel_spacing),
    })
}

pub fn shepp_logan(size: usize, pixel_spacing: f64) -> Image {
    rasterize(&shepp_logan_ellipses(), size, pixel_spacing)
}
