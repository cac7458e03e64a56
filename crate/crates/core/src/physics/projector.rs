//! Ray-driven fan-beam projector and its exact transpose.
//!
//! Each ray is sampled at equal steps of at most half a pixel inside the
//! image support disc; samples read the image by bilinear interpolation
//! (zero outside the grid). The transpose scatters with the same weights.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::physics::geometry::ScanGeometry;
use crate::physics::image::{Image, Sinogram};

/// Views per partial image in the transpose; fixed so that results do not
/// depend on the thread count.
const VIEW_CHUNK: usize = 8;

/// Calls `visit(pixel, weight)` for every interpolation tap along the ray of
/// `(view angle beta, detector bin d)`. Weights include the step length and
/// the attenuation scale.
#[inline]
fn trace(geo: &ScanGeometry, beta: f64, d: usize, mut visit: impl FnMut(usize, f64)) {
    let (cb, sb) = (beta.cos(), beta.sin());
    let (sx, sy) = (geo.dist_source_center * cb, geo.dist_source_center * sb);
    let t = geo.detector_offset(d);
    let px = -geo.dist_detector_center * cb - t * sb;
    let py = -geo.dist_detector_center * sb + t * cb;
    let (mut dx, mut dy) = (px - sx, py - sy);
    let len = (dx * dx + dy * dy).sqrt();
    dx /= len;
    dy /= len;
    // |S + l d|^2 = R^2
    let r = geo.support_radius();
    let b = sx * dx + sy * dy;
    let c = sx * sx + sy * sy - r * r;
    let disc = b * b - c;
    if disc <= 0.0 {
        return;
    }
    let root = disc.sqrt();
    let (l0, l1) = (-b - root, -b + root);
    let spacing = geo.pixel_spacing;
    let n_steps = ((l1 - l0) / (0.5 * spacing)).ceil().max(1.0) as usize;
    let h = (l1 - l0) / n_steps as f64;
    let n = geo.image_size;
    let half = 0.5 * (n as f64 - 1.0);
    let w_step = h * geo.attenuation_scale;
    for k in 0..n_steps {
        let l = l0 + (k as f64 + 0.5) * h;
        let col = (sx + l * dx) / spacing + half;
        let row = half - (sy + l * dy) / spacing;
        let (c0, r0) = (col.floor(), row.floor());
        let (fc, fr) = (col - c0, row - r0);
        let (c0, r0) = (c0 as isize, r0 as isize);
        for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
            let rr = r0 + dr;
            if rr < 0 || rr as usize >= n {
                continue;
            }
            for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                let cc = c0 + dc;
                if cc < 0 || cc as usize >= n {
                    continue;
                }
                let w = wr * wc;
                if w != 0.0 {
                    visit(rr as usize * n + cc as usize, w * w_step);
                }
            }
        }
    }
}

fn check_views(geo: &ScanGeometry, views: &[usize]) -> Result<()> {
    if let Some(&bad) = views.iter().find(|&&v| v >= geo.n_full_views) {
        return Err(Error::Geometry(format!(
            "view index {bad} out of range for {} views",
            geo.n_full_views
        )));
    }
    if views.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("view indices must be strictly increasing".into()));
    }
    Ok(())
}

/// Line integrals of `image` for the given full-view indices.
pub fn forward_project(image: &Image, geo: &ScanGeometry, views: &[usize]) -> Result<Sinogram> {
    image.check_grid(geo)?;
    check_views(geo, views)?;
    let nd = geo.n_detectors;
    let mut data = vec![0.0; views.len() * nd];
    data.par_chunks_mut(nd).zip(views.par_iter()).for_each(|(row, &v)| {
        let beta = geo.view_angle(v);
        for (d, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            trace(geo, beta, d, |p, w| acc += w * image.data[p]);
            *out = acc;
        }
    });
    Sinogram::new(nd, views.to_vec(), data)
}

/// Projection of every full view.
pub fn forward_project_full(image: &Image, geo: &ScanGeometry) -> Result<Sinogram> {
    let views: Vec<usize> = (0..geo.n_full_views).collect();
    forward_project(image, geo, &views)
}

/// Exact transpose of [`forward_project`].
pub fn adjoint_project(sino: &Sinogram, geo: &ScanGeometry) -> Result<Image> {
    sino.check_geometry(geo)?;
    let n_px = geo.n_pixels();
    let nd = geo.n_detectors;
    let partials: Vec<Vec<f64>> = sino
        .view_indices
        .par_chunks(VIEW_CHUNK)
        .enumerate()
        .map(|(chunk, views)| {
            let mut img = vec![0.0; n_px];
            for (i, &v) in views.iter().enumerate() {
                let beta = geo.view_angle(v);
                let row = sino.row(chunk * VIEW_CHUNK + i);
                for (d, &val) in row.iter().enumerate().take(nd) {
                    if val != 0.0 {
                        trace(geo, beta, d, |p, w| img[p] += w * val);
                    }
                }
            }
            img
        })
        .collect();
    let mut out = vec![0.0; n_px];
    for p in &partials {
        out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
    }
    Image::for_geometry(geo, out)
}

/// Unfiltered back-projection: the transpose scaled by the angular step.
pub fn back_project(sino: &Sinogram, geo: &ScanGeometry) -> Result<Image> {
    let mut img = adjoint_project(sino, geo)?;
    let step = geo.angular_step();
    img.data.iter_mut().for_each(|v| *v *= step);
    Ok(img)
}
