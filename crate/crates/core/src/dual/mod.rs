//! Dual-domain extension: a sinogram completion branch reconstructed by
//! FBP, and a fusion net that combines it with the frozen image-domain
//! output.

mod train;
mod unet;

use std::sync::Arc;

use ivct_tensor::{Float, Rng, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::nn::{check_values, count_scalars, l1, ParamBuilder, ParamSpec};
use crate::model::ProctNet;
use crate::physics::{fbp_tensor, FbpOperator};

pub use train::{load_dual, save_dual, DualLogRow, DualReconstructor, DualTrainer, LoadedDual, DUAL_KIND};
pub use unet::UNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualConfig {
    pub sino_dims: Vec<usize>,
    pub fusion_dims: Vec<usize>,
    /// Copy measured rows back into the completed sinogram.
    pub data_consistency: bool,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig::desk()
    }
}

impl DualConfig {
    pub fn desk() -> Self {
        DualConfig {
            sino_dims: vec![8, 16, 32],
            fusion_dims: vec![8, 16, 32],
            data_consistency: false,
            steps: 200,
            lr: 1e-3,
            seed: 0,
        }
    }

    pub fn full() -> Self {
        DualConfig {
            sino_dims: vec![64, 128, 256, 512, 512],
            fusion_dims: vec![16, 32, 64, 128, 128],
            lr: 1e-4,
            ..DualConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, dims) in [("sino_dims", &self.sino_dims), ("fusion_dims", &self.fusion_dims)] {
            if dims.is_empty() || dims.contains(&0) {
                return Err(Error::Config(format!("dual.{name} must be non-empty and positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("dual.lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "sino_dims={};fusion_dims={};data_consistency={}",
            join(&self.sino_dims),
            join(&self.fusion_dims),
            self.data_consistency
        )
    }

    /// Restores the architecture fields; training fields keep their defaults.
    pub fn from_canonical(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("dual config text: {m}"));
        let mut cfg = DualConfig::desk();
        let list = |v: &str| -> Result<Vec<usize>> {
            v.split(',').map(|x| x.parse().map_err(|_| bad("bad integer list"))).collect()
        };
        for field in text.trim().split(';') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad("missing '='"))?;
            match k {
                "sino_dims" => cfg.sino_dims = list(v)?,
                "fusion_dims" => cfg.fusion_dims = list(v)?,
                "data_consistency" => cfg.data_consistency = v.parse().map_err(|_| bad("bad flag"))?,
                _ => return Err(bad("unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Dataset statistics used to normalize sinograms before the U-Net.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinoStats {
    pub mean: f64,
    pub std: f64,
}

impl SinoStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("no sinogram values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(SinoStats {
            mean,
            std: var.sqrt().max(1e-6),
        })
    }
}

/// Sinogram completion and fusion networks over one flat parameter list.
#[derive(Debug, Clone)]
pub struct DualNet {
    pub config: DualConfig,
    pub stats: SinoStats,
    sino: UNet,
    fusion: UNet,
}

#[derive(Debug, Clone)]
pub struct DualOutput<F: Float> {
    /// Frozen image-domain prediction.
    pub image: Tensor<F>,
    /// Full-view FBP of the completed sinogram.
    pub sino_image: Tensor<F>,
    pub fused: Tensor<F>,
    pub sino: Tensor<F>,
}

impl DualNet {
    pub fn build<F: Float>(config: &DualConfig, stats: SinoStats, b: &mut ParamBuilder<F>) -> Result<Self> {
        config.validate()?;
        Ok(DualNet {
            config: config.clone(),
            stats,
            sino: b.scoped("sino", |b| UNet::build(b, 2, 1, &config.sino_dims, false)),
            fusion: b.scoped("fusion", |b| UNet::build(b, 3, 1, &config.fusion_dims, true)),
        })
    }

    pub fn init<F: Float>(config: &DualConfig, stats: SinoStats, rng: &mut Rng) -> Result<(Self, Vec<ParamSpec>, Vec<Tensor<F>>)> {
        let mut b = ParamBuilder::new(rng);
        let net = DualNet::build(config, stats, &mut b)?;
        let (specs, params) = b.finish();
        Ok((net, specs, params))
    }

    /// Completes a zero-filled sinogram `[N, 1, views, detectors]` given the
    /// matching 0/1 mask. The branch predicts a correction to the
    /// normalized zero-filled input.
    pub fn sino_complete<F: Float>(&self, p: &[Tensor<F>], zero_filled: &Tensor<F>, mask: &Tensor<F>) -> Result<Tensor<F>> {
        if zero_filled.shape() != mask.shape() {
            return Err(Error::Shape(format!("sinogram {:?} vs mask {:?}", zero_filled.shape(), mask.shape())));
        }
        let SinoStats { mean, std } = self.stats;
        let normalized = zero_filled.add_scalar(F::of(-mean))?.mul(mask)?.mul_scalar(F::of(1.0 / std))?;
        let input = Tensor::concat(&[normalized.clone(), mask.clone()], 1)?;
        let out = normalized.add(&self.sino.forward(p, &input)?)?;
        let out = out.mul_scalar(F::of(std))?.add_scalar(F::of(mean))?;
        if !self.config.data_consistency {
            return Ok(out);
        }
        let unmeasured = mask.neg()?.add_scalar(F::one())?;
        Ok(out.mul(&unmeasured)?.add(zero_filled)?)
    }

    /// `image + fusion([x, image, sino_image])`.
    pub fn fuse<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>, image: &Tensor<F>, sino_image: &Tensor<F>) -> Result<Tensor<F>> {
        let input = Tensor::concat(&[x.clone(), image.clone(), sino_image.clone()], 1)?;
        Ok(image.add(&self.fusion.forward(p, &input)?)?)
    }
}

/// Inputs of one dual-domain batch.
pub struct DualInputs<'a, F: Float> {
    pub x: &'a Tensor<F>,
    pub ctx: &'a Tensor<F>,
    pub v: &'a [f64],
    pub zero_filled: &'a Tensor<F>,
    pub mask: &'a Tensor<F>,
}

/// Runs both branches. The image-domain output is detached, so nothing
/// upstream of it receives gradient.
pub fn dual_forward<F: Float>(
    inputs: &DualInputs<F>,
    proct: (&ProctNet, &[Tensor<F>]),
    dual: (&DualNet, &[Tensor<F>]),
    full_fbp: &Arc<FbpOperator>,
) -> Result<DualOutput<F>> {
    let (net, p) = dual;
    if !full_fbp.views().iter().enumerate().all(|(i, &v)| i == v) || full_fbp.views().len() != inputs.v.len() {
        return Err(Error::Geometry("dual reconstruction needs the full-view operator".into()));
    }
    let image = proct.0.forward(proct.1, inputs.x, inputs.ctx, inputs.v)?.detach();
    let sino = net.sino_complete(p, inputs.zero_filled, inputs.mask)?;
    let sino_image = fbp_tensor(full_fbp, &sino)?;
    let fused = net.fuse(p, inputs.x, &image, &sino_image)?;
    Ok(DualOutput {
        image,
        sino_image,
        fused,
        sino,
    })
}

/// Sum of three mean absolute errors.
pub fn dual_loss<F: Float>(
    sino_image: &Tensor<F>,
    fused: &Tensor<F>,
    sino: &Tensor<F>,
    target: &Tensor<F>,
    target_sino: &Tensor<F>,
) -> Result<Tensor<F>> {
    Ok(l1(sino_image, target)?.add(&l1(fused, target)?)?.add(&l1(sino, target_sino)?)?)
}

/// Number of scalars in a dual parameter list.
pub fn count_dual_params(specs: &[ParamSpec], values: &[Tensor<f32>]) -> Result<usize> {
    check_values(specs, values)?;
    Ok(count_scalars(specs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::nn::trainable;
    use crate::model::{ModelConfig, Proct};
    use crate::physics::{make_geometry, GeometryConfig, ScanGeometry};
    use crate::sampling::{mask_matrix, svct_vector};

    fn geo() -> ScanGeometry {
        make_geometry(&GeometryConfig {
            image_size: 16,
            pixel_spacing: 16.0,
            n_detectors: 32,
            n_full_views: 48,
            ..GeometryConfig::desk()
        })
        .unwrap()
    }

    fn net(dc: bool) -> (DualNet, Vec<Tensor<f64>>) {
        let cfg = DualConfig {
            sino_dims: vec![4, 8],
            fusion_dims: vec![4, 8],
            data_consistency: dc,
            ..DualConfig::desk()
        };
        let (n, _, p) = DualNet::init(&cfg, SinoStats { mean: 0.5, std: 0.7 }, &mut Rng::new(3)).unwrap();
        (n, p)
    }

    fn uniform(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
        rng.uniform_tensor(shape, 0.0, 1.0)
    }

    #[test]
    fn zero_input_gives_finite_full_size_output() {
        let g = geo();
        let (n, p) = net(false);
        let z = Tensor::<f64>::zeros(&[1, 1, g.n_full_views, g.n_detectors]);
        let s = n.sino_complete(&p, &z, &z).unwrap();
        assert_eq!(s.shape(), &[1, 1, 48, 32]);
        assert!(s.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn data_consistency_keeps_measured_rows() {
        let g = geo();
        let (n, p) = net(true);
        let v = svct_vector(12, g.n_full_views).unwrap();
        let mask = Tensor::from_vec(&[1, 1, 48, 32], mask_matrix(&v, 32)).unwrap();
        let mut rng = Rng::new(1);
        let zf = uniform(&[1, 1, 48, 32], &mut rng).mul(&mask).unwrap();
        let s = n.sino_complete(&p, &zf, &mask).unwrap().to_vec();
        let (zf, m) = (zf.to_vec(), mask.to_vec());
        for i in 0..s.len() {
            if m[i] == 1.0 {
                assert_eq!(s[i], zf[i]);
            }
        }
    }

    #[test]
    fn fusion_starts_at_image_output() {
        let (n, p) = net(false);
        let mut rng = Rng::new(2);
        let (x, a, b) = (uniform(&[2, 1, 16, 16], &mut rng), uniform(&[2, 1, 16, 16], &mut rng), uniform(&[2, 1, 16, 16], &mut rng));
        assert_eq!(n.fuse(&p, &x, &a, &b).unwrap().to_vec(), a.to_vec());
    }

    #[test]
    fn loss_is_sum_of_three_l1_terms() {
        let mut rng = Rng::new(4);
        let t: Vec<Tensor<f64>> = (0..3).map(|_| uniform(&[2, 1, 8, 8], &mut rng)).collect();
        let (s, ts) = (uniform(&[2, 1, 6, 5], &mut rng), uniform(&[2, 1, 6, 5], &mut rng));
        assert_eq!(dual_loss(&t[2], &t[2], &ts, &t[2], &ts).unwrap().item().unwrap(), 0.0);
        let mae = |a: &Tensor<f64>, b: &Tensor<f64>| {
            a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.numel() as f64
        };
        let want = mae(&t[0], &t[2]) + mae(&t[1], &t[2]) + mae(&s, &ts);
        let got = dual_loss(&t[0], &t[1], &s, &t[2], &ts).unwrap().item().unwrap();
        assert!((got - want).abs() < 1e-7);
        assert!(dual_loss(&t[0], &t[1], &s, &t[2], &t[2]).is_err());
    }

    #[test]
    fn image_branch_gets_no_gradient() {
        let g = geo();
        let cfg = ModelConfig {
            embed_dims: vec![4, 8, 16, 8, 4],
            ..ModelConfig::desk(g.n_full_views, g.image_size)
        };
        let proct = Proct::<f64>::init(&cfg, &mut Rng::new(5)).unwrap();
        let proct_params = trainable(&proct.params);
        let (n, p) = net(false);
        let p = trainable(&p);
        let v = svct_vector(12, g.n_full_views).unwrap();
        let op = Arc::new(FbpOperator::new(&g, &(0..g.n_full_views).collect::<Vec<_>>()).unwrap());
        let mut rng = Rng::new(6);
        let mask = Tensor::from_vec(&[1, 1, 48, 32], mask_matrix(&v, 32)).unwrap();
        let full = uniform(&[1, 1, 48, 32], &mut rng);
        let zf = full.mul(&mask).unwrap();
        let (x, ctx, y) = (uniform(&[1, 1, 16, 16], &mut rng), uniform(&[1, 2, 16, 16], &mut rng), uniform(&[1, 1, 16, 16], &mut rng));
        let inputs = DualInputs {
            x: &x,
            ctx: &ctx,
            v: &v.as_f64(),
            zero_filled: &zf,
            mask: &mask,
        };
        let out = dual_forward(&inputs, (&proct.net, &proct_params), (&n, &p), &op).unwrap();
        for t in [&out.image, &out.sino_image, &out.fused] {
            assert_eq!(t.shape(), x.shape());
        }
        dual_loss(&out.sino_image, &out.fused, &out.sino, &y, &full).unwrap().backward().unwrap();
        assert!(proct_params.iter().all(|t| t.grad_or_zeros().iter().all(|&g| g == 0.0)));
        assert!(p.iter().any(|t| t.grad_or_zeros().iter().any(|&g| g != 0.0)));
    }

    #[test]
    fn canonical_roundtrip() {
        let c = DualConfig {
            data_consistency: true,
            ..DualConfig::full()
        };
        let back = DualConfig::from_canonical(&c.canonical()).unwrap();
        assert_eq!((back.sino_dims, back.fusion_dims, back.data_consistency), (c.sino_dims, c.fusion_dims, true));
    }
}
