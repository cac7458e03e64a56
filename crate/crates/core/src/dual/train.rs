//! Training the dual-domain branches against a frozen ProCT, and their
//! checkpoints.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use ivct_tensor::{Rng, Tensor};

use super::{dual_forward, dual_loss, DualConfig, DualInputs, DualNet, DualOutput, SinoStats};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{split_images, Reconstructor};
use crate::io::Checkpoint;
use crate::model::nn::{frozen, trainable, ParamSpec};
use crate::model::Proct;
use crate::physics::{FbpOperator, Image, ScanGeometry};
use crate::sampling::{mask_matrix, Setting};
use crate::training::data::{context_phantom, datasets, stack_batch, Batch, Example, ExampleSource};
use crate::training::optim::{clip_global_norm, Adam};
use crate::training::persist::{put_params, take_params};
use crate::training::plan::sample_setting;

pub const DUAL_KIND: &str = "dual";

/// Sinogram-side tensors of a batch, `[N, 1, views, detectors]`.
struct SinoBatch {
    zero_filled: Tensor<f32>,
    mask: Tensor<f32>,
    full: Tensor<f32>,
}

fn sino_batch(examples: &[Example]) -> Result<SinoBatch> {
    let first = examples.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
    let (rows, nd) = (first.sino.rows(), first.sino.n_detectors);
    let mask = mask_matrix(&first.v, nd);
    if mask.len() != rows * nd {
        return Err(Error::Shape("sampling vector does not match the full sinogram".into()));
    }
    let mut full = Vec::with_capacity(examples.len() * rows * nd);
    let mut zf = Vec::with_capacity(full.capacity());
    for e in examples {
        if e.sino.data.len() != mask.len() {
            return Err(Error::Shape("batch sinograms differ in size".into()));
        }
        full.extend(e.sino.data.iter().map(|&v| v as f32));
        zf.extend(e.sino.data.iter().zip(&mask).map(|(&v, &m)| (v * m) as f32));
    }
    let shape = [examples.len(), 1, rows, nd];
    let masks = mask.iter().map(|&m| m as f32).cycle().take(full.len()).collect();
    Ok(SinoBatch {
        zero_filled: Tensor::from_vec(&shape, zf)?,
        mask: Tensor::from_vec(&shape, masks)?,
        full: Tensor::from_vec(&shape, full)?,
    })
}

fn full_operator(source: &mut ExampleSource) -> Result<Arc<FbpOperator>> {
    let all: Vec<usize> = (0..source.geo.n_full_views).collect();
    source.operator(&all)
}

fn run(proct: &Proct<f32>, net: &DualNet, params: &[Tensor<f32>], batch: &Batch<f32>, sb: &SinoBatch, v: &[f64], op: &Arc<FbpOperator>) -> Result<DualOutput<f32>> {
    let inputs = DualInputs {
        x: &batch.x,
        ctx: &batch.ctx,
        v,
        zero_filled: &sb.zero_filled,
        mask: &sb.mask,
    };
    dual_forward(&inputs, (&proct.net, &frozen(&proct.params)), (net, params), op)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualLogRow {
    pub step: usize,
    pub setting: Setting,
    pub loss: f64,
    pub grad_norm: f64,
}

impl DualLogRow {
    pub const HEADER: &'static str = "step,setting,loss,grad_norm";

    pub fn csv(&self) -> String {
        format!("{},{},{:.8e},{:.6e}", self.step, self.setting, self.loss, self.grad_norm)
    }
}

pub struct DualTrainer {
    pub cfg: RunConfig,
    pub geo: ScanGeometry,
    pub proct: Proct<f32>,
    pub proct_checksum: String,
    pub net: DualNet,
    pub specs: Vec<ParamSpec>,
    pub params: Vec<Tensor<f32>>,
    pub optimizer: Adam<f32>,
    pub source: ExampleSource,
    pub holdout: Vec<Image>,
    pub step: usize,
    rng: Rng,
    op: Arc<FbpOperator>,
}

impl DualTrainer {
    /// Sinogram statistics come from the clean training sinograms.
    pub fn new(cfg: &RunConfig, proct: Proct<f32>, proct_checksum: String) -> Result<Self> {
        cfg.validate()?;
        if proct.config() != &cfg.model_config()? {
            return Err(Error::Checkpoint("ProCT checkpoint does not match the configuration".into()));
        }
        let geo = cfg.geometry()?;
        let (train, holdout) = datasets(&cfg.data, &geo)?;
        let phantom = context_phantom(&cfg.data, &geo)?;
        let mut source = ExampleSource::new(&geo, cfg.noise, train, &phantom)?;
        let mut values = Vec::new();
        for i in 0..source.len() {
            values.extend(source.clean_sinogram(i)?.data);
        }
        let stats = SinoStats::of(&values)?;
        let root = Rng::new(cfg.dual.seed);
        let (net, specs, params) = DualNet::init(&cfg.dual, stats, &mut root.fork(0))?;
        let optimizer = Adam::new(&params, cfg.plan.beta1, cfg.plan.beta2);
        Ok(DualTrainer {
            op: full_operator(&mut source)?,
            cfg: cfg.clone(),
            geo,
            proct,
            proct_checksum,
            net,
            specs,
            params,
            optimizer,
            source,
            holdout,
            step: 0,
            rng: root.fork(1),
        })
    }

    pub fn finished(&self) -> bool {
        self.step >= self.cfg.dual.steps
    }

    /// One update of the dual branches on a random batch. Settings come
    /// from the last curriculum phase.
    pub fn step(&mut self) -> Result<DualLogRow> {
        let plan = &self.cfg.plan;
        let setting = sample_setting(plan, plan.epochs.saturating_sub(1), &mut self.rng)?;
        let v = setting.vector(&self.geo)?;
        let n = self.source.len() as u64;
        let examples = (0..plan.batch_size)
            .map(|_| {
                let i = self.rng.int_inclusive(0, n - 1) as usize;
                self.source.example(i, &v, &mut self.rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = stack_batch::<f32>(&examples)?;
        let sb = sino_batch(&examples)?;
        let params = trainable(&self.params);
        let out = run(&self.proct, &self.net, &params, &batch, &sb, &v.as_f64(), &self.op)?;
        let value = dual_loss(&out.sino_image, &out.fused, &out.sino, &batch.y, &sb.full)?;
        let loss = f64::from(value.item()?);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("dual loss {loss} at step {} ({setting})", self.step)));
        }
        value.backward()?;
        let mut grads: Vec<Vec<f32>> = params.iter().map(|p| p.grad_or_zeros()).collect();
        if let Some(k) = grads.iter().position(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of {} at step {}", self.specs[k].name, self.step)));
        }
        let grad_norm = clip_global_norm(&mut grads, plan.clip_norm)?;
        self.params = self.optimizer.update(&self.params, &grads, self.cfg.dual.lr)?;
        let row = DualLogRow {
            step: self.step,
            setting,
            loss,
            grad_norm,
        };
        self.step += 1;
        Ok(row)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        save_dual(path, &self.net, &self.specs, &self.params, &self.proct_checksum, self.step)
    }
}

pub fn save_dual(path: &Path, net: &DualNet, specs: &[ParamSpec], params: &[Tensor<f32>], proct_checksum: &str, step: usize) -> Result<String> {
    let mut ckpt = Checkpoint::new(DUAL_KIND, net.config.canonical());
    let mut meta = BTreeMap::new();
    meta.insert("proct.checksum".to_string(), proct_checksum.to_string());
    // `{}` keeps the shortest representation that parses back exactly
    meta.insert("sino.mean".to_string(), format!("{}", net.stats.mean));
    meta.insert("sino.std".to_string(), format!("{}", net.stats.std));
    meta.insert("step".to_string(), step.to_string());
    ckpt.meta = meta;
    put_params(&mut ckpt, "", specs, params);
    ckpt.save(path)
}

pub struct LoadedDual {
    pub net: DualNet,
    pub specs: Vec<ParamSpec>,
    pub params: Vec<Tensor<f32>>,
    pub proct_checksum: String,
    pub checksum: String,
}

impl LoadedDual {
    /// Refuses a ProCT other than the one the branches were trained against.
    pub fn check_proct(&self, checksum: &str) -> Result<()> {
        if self.proct_checksum != checksum {
            return Err(Error::Checkpoint(format!(
                "dual checkpoint extends ProCT {}, got {checksum}",
                self.proct_checksum
            )));
        }
        Ok(())
    }
}

pub fn load_dual(path: &Path) -> Result<LoadedDual> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.kind != DUAL_KIND {
        return Err(Error::format(path, format!("expected a {DUAL_KIND} checkpoint, found {:?}", ckpt.kind)));
    }
    let config = DualConfig::from_canonical(&ckpt.config)?;
    let num = |k: &str| -> Result<f64> { ckpt.meta_value(k)?.parse().map_err(|_| Error::format(path, format!("bad {k}"))) };
    let stats = SinoStats {
        mean: num("sino.mean")?,
        std: num("sino.std")?,
    };
    let (net, specs, _) = DualNet::init::<f32>(&config, stats, &mut Rng::new(0))?;
    let params = take_params(&ckpt, "", &specs).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(LoadedDual {
        net,
        specs,
        params,
        proct_checksum: ckpt.meta_value("proct.checksum")?.to_string(),
        checksum: ckpt.checksum()?,
    })
}

/// Reports the frozen ProCT output, the sinogram branch and the fused image.
pub struct DualReconstructor<'a> {
    pub proct: &'a Proct<f32>,
    pub net: &'a DualNet,
    pub params: &'a [Tensor<f32>],
    pub op: Arc<FbpOperator>,
}

impl<'a> DualReconstructor<'a> {
    pub fn new(proct: &'a Proct<f32>, net: &'a DualNet, params: &'a [Tensor<f32>], source: &mut ExampleSource) -> Result<Self> {
        Ok(DualReconstructor {
            proct,
            net,
            params,
            op: full_operator(source)?,
        })
    }

    /// Ŷ, Ŷ′ (FBP of the completed sinogram) and Ŷ″ for a batch.
    pub fn outputs(&self, examples: &[Example]) -> Result<DualOutput<f32>> {
        let batch = stack_batch::<f32>(examples)?;
        let sb = sino_batch(examples)?;
        let v = examples[0].v.as_f64();
        ivct_tensor::no_grad(|| run(self.proct, self.net, &frozen(self.params), &batch, &sb, &v, &self.op))
    }
}

impl Reconstructor for DualReconstructor<'_> {
    fn methods(&self) -> Vec<String> {
        ["proct", "dual_sino", "dual_fusion"].map(String::from).to_vec()
    }

    fn reconstruct(&mut self, examples: &[Example]) -> Result<Vec<Vec<Image>>> {
        let out = self.outputs(examples)?;
        let spacing = examples[0].x.pixel_spacing;
        [&out.image, &out.sino_image, &out.fused].iter().map(|t| split_images(t, spacing)).collect()
    }
}
