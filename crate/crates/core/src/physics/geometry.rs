//! Flat-detector fan-beam scan geometry.
//!
//! World coordinates are millimetres with the rotation axis at the origin.
//! Pixel `(row, col)` of an `n x n` image sits at
//! `x = (col - (n-1)/2) * spacing`, `y = ((n-1)/2 - row) * spacing`.
//! For view angle `beta` the source is at `dso * (cos beta, sin beta)`, the
//! detector centre at `-ddo * (cos beta, sin beta)`, and detector bins run
//! along `(-sin beta, cos beta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// User-facing geometry description; unset pitch is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_full_views: usize,
    pub n_detectors: usize,
    pub dist_source_center: f64,
    pub dist_detector_center: f64,
    pub detector_pitch: Option<f64>,
    pub image_size: usize,
    pub pixel_spacing: f64,
    pub angular_span: f64,
    /// Linear attenuation (1/mm) of a pixel at normalized value 1.
    pub attenuation_scale: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            n_full_views: 720,
            n_detectors: 672,
            dist_source_center: 1075.0,
            dist_detector_center: 1075.0,
            detector_pitch: None,
            image_size: 256,
            pixel_spacing: 1.0,
            angular_span: 360.0,
            attenuation_scale: 0.02,
        }
    }
}

impl GeometryConfig {
    /// Small grid for tests and desk-scale training.
    pub fn desk() -> Self {
        GeometryConfig {
            n_detectors: 128,
            image_size: 64,
            pixel_spacing: 4.0,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    pub n_full_views: usize,
    pub n_detectors: usize,
    pub dist_source_center: f64,
    pub dist_detector_center: f64,
    pub detector_pitch: f64,
    pub image_size: usize,
    pub pixel_spacing: f64,
    pub angular_span: f64,
    pub attenuation_scale: f64,
}

/// Margin added to the half diagonal when deriving the pitch, in pixels.
const FOV_MARGIN_PX: f64 = 2.0;

pub fn make_geometry(cfg: &GeometryConfig) -> Result<ScanGeometry> {
    let bad = |m: String| Err(Error::Geometry(m));
    if cfg.n_full_views == 0 || cfg.n_detectors == 0 || cfg.image_size == 0 {
        return bad("view, detector and pixel counts must be positive".into());
    }
    for (name, v) in [
        ("dist_source_center", cfg.dist_source_center),
        ("dist_detector_center", cfg.dist_detector_center),
        ("pixel_spacing", cfg.pixel_spacing),
        ("angular_span", cfg.angular_span),
        ("attenuation_scale", cfg.attenuation_scale),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return bad(format!("{name} must be positive, got {v}"));
        }
    }
    if cfg.angular_span > 360.0 {
        return bad(format!("angular span {} exceeds 360 degrees", cfg.angular_span));
    }
    let half_diag = cfg.image_size as f64 * cfg.pixel_spacing * std::f64::consts::FRAC_1_SQRT_2;
    let dsd = cfg.dist_source_center + cfg.dist_detector_center;
    let pitch = match cfg.detector_pitch {
        Some(p) if p.is_finite() && p > 0.0 => p,
        Some(p) => return bad(format!("detector pitch must be positive, got {p}")),
        None => {
            let r = half_diag + FOV_MARGIN_PX * cfg.pixel_spacing;
            if r >= cfg.dist_source_center {
                return bad(format!("image support radius {r:.1} mm reaches the source"));
            }
            2.0 * dsd * (r / cfg.dist_source_center).asin().tan() / cfg.n_detectors as f64
        }
    };
    let geo = ScanGeometry {
        n_full_views: cfg.n_full_views,
        n_detectors: cfg.n_detectors,
        dist_source_center: cfg.dist_source_center,
        dist_detector_center: cfg.dist_detector_center,
        detector_pitch: pitch,
        image_size: cfg.image_size,
        pixel_spacing: cfg.pixel_spacing,
        angular_span: cfg.angular_span,
        attenuation_scale: cfg.attenuation_scale,
    };
    if geo.fov_radius() < half_diag {
        return bad(format!(
            "field of view radius {:.2} mm is smaller than the image half diagonal {:.2} mm",
            geo.fov_radius(),
            half_diag
        ));
    }
    Ok(geo)
}

impl ScanGeometry {
    pub fn dist_source_detector(&self) -> f64 {
        self.dist_source_center + self.dist_detector_center
    }

    pub fn fan_half_angle(&self) -> f64 {
        (0.5 * self.n_detectors as f64 * self.detector_pitch / self.dist_source_detector()).atan()
    }

    pub fn fov_radius(&self) -> f64 {
        self.dist_source_center * self.fan_half_angle().sin()
    }

    /// Angular step between consecutive full views, radians.
    pub fn angular_step(&self) -> f64 {
        self.angular_span.to_radians() / self.n_full_views as f64
    }

    pub fn view_angle(&self, index: usize) -> f64 {
        index as f64 * self.angular_step()
    }

    pub fn view_angles(&self) -> Vec<f64> {
        (0..self.n_full_views).map(|i| self.view_angle(i)).collect()
    }

    pub fn full_scan(&self) -> bool {
        (self.angular_span - 360.0).abs() < 1e-9
    }

    /// Offset of detector bin `d` from the detector centre, mm.
    pub fn detector_offset(&self, d: usize) -> f64 {
        (d as f64 - 0.5 * (self.n_detectors as f64 - 1.0)) * self.detector_pitch
    }

    pub fn n_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    /// Radius of the disc that contains every pixel footprint.
    pub fn support_radius(&self) -> f64 {
        (self.image_size as f64 + 1.0) * self.pixel_spacing * std::f64::consts::FRAC_1_SQRT_2
    }

    /// One-line description for file headers.
    pub fn summary(&self) -> String {
        format!(
            "views={} detectors={} dso={} ddo={} pitch={} size={} spacing={} span={} mu={}",
            self.n_full_views,
            self.n_detectors,
            self.dist_source_center,
            self.dist_detector_center,
            self.detector_pitch,
            self.image_size,
            self.pixel_spacing,
            self.angular_span,
            self.attenuation_scale
        )
    }

    pub fn to_config(&self) -> GeometryConfig {
        GeometryConfig {
            n_full_views: self.n_full_views,
            n_detectors: self.n_detectors,
            dist_source_center: self.dist_source_center,
            dist_detector_center: self.dist_detector_center,
            detector_pitch: Some(self.detector_pitch),
            image_size: self.image_size,
            pixel_spacing: self.pixel_spacing,
            angular_span: self.angular_span,
            attenuation_scale: self.attenuation_scale,
        }
    }

    /// Parses the output of [`ScanGeometry::summary`].
    pub fn parse_summary(s: &str) -> Result<ScanGeometry> {
        let mut cfg = GeometryConfig::default();
        for kv in s.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Geometry(format!("malformed entry {kv:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Geometry(format!("bad value {kv:?}")));
            let count = |v: &str| v.parse::<usize>().map_err(|_| Error::Geometry(format!("bad value {kv:?}")));
            match k {
                "views" => cfg.n_full_views = count(v)?,
                "detectors" => cfg.n_detectors = count(v)?,
                "dso" => cfg.dist_source_center = num(v)?,
                "ddo" => cfg.dist_detector_center = num(v)?,
                "pitch" => cfg.detector_pitch = Some(num(v)?),
                "size" => cfg.image_size = count(v)?,
                "spacing" => cfg.pixel_spacing = num(v)?,
                "span" => cfg.angular_span = num(v)?,
                "mu" => cfg.attenuation_scale = num(v)?,
                _ => return Err(Error::Geometry(format!("unknown key {k:?}"))),
            }
        }
        make_geometry(&cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let g = make_geometry(&GeometryConfig::default()).unwrap();
        assert_eq!((g.n_full_views, g.n_detectors), (720, 672));
        assert_eq!(g.dist_source_center, 1075.0);
        assert!((g.angular_step().to_degrees() - 0.5).abs() < 1e-12);
        let angles = g.view_angles();
        assert_eq!(angles.len(), 720);
        assert!(angles.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn derived_pitch_covers_diagonal() {
        for cfg in [GeometryConfig::default(), GeometryConfig::desk()] {
            let g = make_geometry(&cfg).unwrap();
            let half_diag = g.image_size as f64 * g.pixel_spacing / 2f64.sqrt();
            assert!(g.fov_radius() >= half_diag);
        }
    }

    #[test]
    fn small_pitch_is_rejected() {
        let cfg = GeometryConfig {
            detector_pitch: Some(0.2),
            ..Default::default()
        };
        assert!(matches!(make_geometry(&cfg), Err(Error::Geometry(_))));
        let cfg = GeometryConfig {
            n_detectors: 0,
            ..Default::default()
        };
        assert!(make_geometry(&cfg).is_err());
    }

    #[test]
    fn summary_roundtrip() {
        let g = make_geometry(&GeometryConfig::desk()).unwrap();
        assert_eq!(ScanGeometry::parse_summary(&g.summary()).unwrap(), g);
    }
}
