//! Image loss and the per-setting loss scale.

use ivct_tensor::{Float, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ms_ssim;
use crate::model::nn::l1;
use crate::sampling::Setting;

/// SVCT view counts and LACT spans (degrees) the scale is defined on.
pub const SVCT_RANGE: (usize, usize) = (9, 288);
pub const LACT_RANGE: (f64, f64) = (60.0, 180.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the `1 - MS-SSIM` term.
    pub alpha: f64,
    /// When off every setting gets scale 1.
    pub scale_by_setting: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.1,
            scale_by_setting: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("loss alpha must be finite and non-negative, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn scale(&self, setting: &Setting) -> Result<f64> {
        if self.scale_by_setting {
            loss_scale(setting)
        } else {
            Ok(1.0)
        }
    }
}

/// `L1(pred, target) + alpha * (1 - MS-SSIM(pred, target))` on `[N, 1, H, W]`.
pub fn loss<F: Float>(pred: &Tensor<F>, target: &Tensor<F>, cfg: &LossConfig) -> Result<Tensor<F>> {
    let base = l1(pred, target)?;
    if cfg.alpha == 0.0 {
        return Ok(base);
    }
    let structural = ms_ssim(pred, target)?.neg()?.add_scalar(F::one())?;
    Ok(base.add(&structural.mul_scalar(F::of(cfg.alpha))?)?)
}

/// Loss weight of a training setting: grows from 0.5 on the hardest setting
/// to 1.0 on the easiest, log-linearly in the SVCT view count and linearly
/// in the LACT span.
pub fn loss_scale(setting: &Setting) -> Result<f64> {
    let s = match *setting {
        Setting::Svct { n_view } => {
            let (lo, hi) = SVCT_RANGE;
            if !(lo..=hi).contains(&n_view) {
                return Err(Error::Invalid(format!("SVCT view count {n_view} outside [{lo}, {hi}]")));
            }
            0.5 + 0.5 * (n_view as f64 / lo as f64).log2() / (hi as f64 / lo as f64).log2()
        }
        Setting::Lact { start_deg, end_deg } => {
            let (lo, hi) = LACT_RANGE;
            let span = end_deg - start_deg;
            if !(lo..=hi).contains(&span) {
                return Err(Error::Invalid(format!("LACT span {span} degrees outside [{lo}, {hi}]")));
            }
            0.5 + 0.5 * (span - lo) / (hi - lo)
        }
        _ => return Err(Error::Invalid(format!("no loss scale for hybrid setting {setting}"))),
    };
    Ok(s.clamp(0.5, 1.0))
}
