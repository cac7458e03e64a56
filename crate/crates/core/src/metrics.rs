//! Image quality metrics on `[0, 1]`-range images.
//!
//! `psnr` and `ssim` work on plain `f64` slices. `ms_ssim` and `ssim_tensor`
//! run on tensors so they can sit inside a training loss.

use ivct_tensor::{Conv2dOptions, Float, Tensor};

use crate::error::{Error, Result};

/// Reported for identical images instead of infinity.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("comparing {} with {} values", a.len(), b.len())));
    }
    Ok(())
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

pub fn psnr(a: &[f64], b: &[f64], data_range: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (data_range * data_range / m).log10()).min(PSNR_CAP))
}

pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn side_of(n: usize) -> Result<usize> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::Shape(format!("{n} values do not form a square image")));
    }
    Ok(side)
}

/// Single-scale SSIM of two square images with data range 1, averaged over
/// all fully contained 11x11 windows.
pub fn ssim(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let n = side_of(a.len())?;
    if n < SSIM_WINDOW {
        return Err(Error::Invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {n}x{n}")));
    }
    let g = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let out = n - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for r in 0..out {
        for c in 0..out {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let w = g[i] * g[j];
                    let (x, y) = (a[(r + i) * n + c + j], b[(r + i) * n + c + j]);
                    mx += w * x;
                    my += w * y;
                    xx += w * x * x;
                    yy += w * y * y;
                    xy += w * x * y;
                }
            }
            let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (out * out) as f64)
}

/// Scales that fit an `n x n` image: largest `s <= 5` with
/// `2^(s-1) * 11 <= n`.
pub fn ms_ssim_scales(n: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| (SSIM_WINDOW << (s - 1)) <= n)
        .unwrap_or(0)
}

/// Per-image `(mean SSIM, mean contrast-structure)` of `[N, 1, H, W]` tensors.
fn ssim_terms<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
    let s = a.shape().to_vec();
    let n = s[0];
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let kernel: Vec<f64> = taps.iter().flat_map(|&u| taps.iter().map(move |&v| u * v)).collect();
    let kernel = Tensor::<F>::from_f64(&[1, 1, SSIM_WINDOW, SSIM_WINDOW], &kernel)?;
    // five moments stacked on the batch axis share one convolution
    let stack = Tensor::concat(&[a.clone(), b.clone(), a.square()?, b.square()?, a.mul(b)?], 0)?;
    let m = stack.conv2d(&kernel, None, Conv2dOptions::default())?;
    let part = |i: usize| m.narrow(0, i * n, n);
    let (mx, my) = (part(0)?, part(1)?);
    let (mxx, myy, mxy) = (mx.square()?, my.square()?, mx.mul(&my)?);
    let vx = part(2)?.sub(&mxx)?;
    let vy = part(3)?.sub(&myy)?;
    let cov = part(4)?.sub(&mxy)?;
    let (c1, c2) = (F::of(SSIM_K1 * SSIM_K1), F::of(SSIM_K2 * SSIM_K2));
    let cs = cov.mul_scalar(F::of(2.0))?.add_scalar(c2)?.div(&vx.add(&vy)?.add_scalar(c2)?)?;
    let lum = mxy.mul_scalar(F::of(2.0))?.add_scalar(c1)?.div(&mxx.add(&myy)?.add_scalar(c1)?)?;
    let per_image = |t: Tensor<F>| -> Result<Tensor<F>> { Ok(t.mean_dims(&[1, 2, 3], false)?) };
    Ok((per_image(lum.mul(&cs)?)?, per_image(cs)?))
}

fn check_pair<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<usize> {
    let s = a.shape();
    if s != b.shape() || s.len() != 4 || s[1] != 1 || s[2] != s[3] {
        return Err(Error::Shape(format!("expected matching [N, 1, H, H] tensors, got {s:?} and {:?}", b.shape())));
    }
    Ok(s[2])
}

/// Per-image single-scale SSIM, shape `[N]`.
pub fn ssim_tensor<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let side = check_pair(a, b)?;
    if side < SSIM_WINDOW {
        return Err(Error::Invalid(format!("SSIM needs at least {SSIM_WINDOW} pixels per side, got {side}")));
    }
    Ok(ssim_terms(a, b)?.0)
}

/// Per-image multi-scale SSIM, shape `[N]`. Uses as many of the five scales
/// as fit, with the weights renormalized.
pub fn ms_ssim_per_image<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let side = check_pair(a, b)?;
    let scales = ms_ssim_scales(side);
    if scales == 0 {
        return Err(Error::Invalid(format!("MS-SSIM needs at least {SSIM_WINDOW} pixels per side, got {side}")));
    }
    let total: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let (mut a, mut b) = (a.clone(), b.clone());
    let mut log_sum: Option<Tensor<F>> = None;
    for (j, w) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let (full, cs) = ssim_terms(&a, &b)?;
        let term = if j + 1 == scales { full } else { cs };
        // negative contrast-structure has no real fractional power
        let weighted = term.clamp_min(F::of(1e-6))?.ln()?.mul_scalar(F::of(w / total))?;
        log_sum = Some(match log_sum {
            Some(acc) => acc.add(&weighted)?,
            None => weighted,
        });
        if j + 1 < scales {
            a = a.avg_pool2d(2)?;
            b = b.avg_pool2d(2)?;
        }
    }
    Ok(log_sum.expect("at least one scale").exp()?)
}

/// Batch mean of [`ms_ssim_per_image`].
pub fn ms_ssim<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    Ok(ms_ssim_per_image(a, b)?.mean()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivct_tensor::Rng;

    fn image(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n * n)
            .map(|i| {
                let (r, c) = ((i / n) as f64, (i % n) as f64);
                (0.5 + 0.3 * (r / 5.0).sin() * (c / 7.0).cos() + 0.05 * rng.normal()).clamp(0.0, 1.0)
            })
            .collect()
    }

    fn tensor(v: &[f64]) -> Tensor<f64> {
        let n = side_of(v.len()).unwrap();
        Tensor::from_f64(&[1, 1, n, n], v).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let a = vec![0.2; 100];
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP);
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        assert!(psnr(&a, &b[..50], 1.0).is_err());
    }

    #[test]
    fn ssim_cases() {
        let mut rng = Rng::new(0);
        let x = image(32, &mut rng);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-6);
        let inv: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        assert!(ssim(&x, &inv).unwrap() < ssim(&x, &x).unwrap());
        let noisy: Vec<f64> = x.iter().map(|v| v + 0.05 * rng.normal()).collect();
        assert!(ssim(&x, &noisy).unwrap() < 0.99);
        assert!(ssim(&x[..100], &x[..100]).is_err());
    }

    #[test]
    fn tensor_ssim_matches_loop_version() {
        let mut rng = Rng::new(1);
        for _ in 0..5 {
            let (a, b) = (image(24, &mut rng), image(24, &mut rng));
            let t = ssim_tensor(&tensor(&a), &tensor(&b)).unwrap().item().unwrap();
            assert!((t - ssim(&a, &b).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn ms_ssim_cases() {
        assert_eq!(ms_ssim_scales(64), 3);
        assert_eq!(ms_ssim_scales(176), 5);
        assert_eq!(ms_ssim_scales(10), 0);
        let mut rng = Rng::new(2);
        let x = tensor(&image(64, &mut rng));
        assert!((ms_ssim(&x, &x).unwrap().item().unwrap() - 1.0).abs() < 1e-6);
        let y = tensor(&image(64, &mut rng));
        let ab = ms_ssim(&x, &y).unwrap().item().unwrap();
        let ba = ms_ssim(&y, &x).unwrap().item().unwrap();
        assert!((ab - ba).abs() < 1e-12 && ab < 1.0);
        assert!(ms_ssim(&tensor(&[0.0; 64]), &tensor(&[0.0; 64])).is_err());
    }
}
