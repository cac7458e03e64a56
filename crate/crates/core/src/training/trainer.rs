//! The training loop: one sampled setting per batch, scaled loss, clipped
//! Adam updates, a checkpoint at every epoch end.
//!
//! Each epoch draws from its own stream forked off the plan seed, and a
//! checkpoint records the stream position, so a resumed run continues with
//! exactly the batches and noise an uninterrupted run would have seen.

use std::collections::BTreeMap;
use std::path::Path;

use ivct_tensor::{Rng, RngState, Tensor};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::nn::trainable;
use crate::model::Proct;
use crate::physics::{Image, ScanGeometry};
use crate::sampling::Setting;
use crate::training::data::{context_phantom, datasets, stack_batch, ExampleSource};
use crate::training::loss::loss;
use crate::training::optim::{clip_global_norm, Adam};
use crate::training::persist::{load_proct, save_proct};
use crate::training::plan::sample_setting;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub setting: Setting,
    pub scale: f64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

impl LogRow {
    pub const HEADER: &'static str = "step,epoch,scenario,setting,s_t,loss,lr,grad_norm";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.8e},{:e},{:.6e}",
            self.step,
            self.epoch,
            self.setting.scenario().as_str(),
            self.setting,
            self.scale,
            self.loss,
            self.lr,
            self.grad_norm
        )
    }
}

/// Where the next batch starts.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cursor {
    epoch: usize,
    batch: usize,
    rng: RngState,
}

pub struct Trainer {
    pub cfg: RunConfig,
    pub geo: ScanGeometry,
    pub model: Proct<f32>,
    pub optimizer: Adam<f32>,
    pub source: ExampleSource,
    pub holdout: Vec<Image>,
    pub step: usize,
    cursor: Cursor,
    order: Vec<usize>,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Proct::init(&cfg.model_config()?, &mut Rng::new(cfg.plan.seed).fork(0))?;
        Trainer::with_model(cfg, model, None, 0, None)
    }

    fn with_model(
        cfg: &RunConfig,
        model: Proct<f32>,
        optimizer: Option<Adam<f32>>,
        step: usize,
        cursor: Option<Cursor>,
    ) -> Result<Self> {
        let geo = cfg.geometry()?;
        let (train, holdout) = datasets(&cfg.data, &geo)?;
        let phantom = context_phantom(&cfg.data, &geo)?;
        let optimizer = optimizer.unwrap_or_else(|| Adam::new(&model.params, cfg.plan.beta1, cfg.plan.beta2));
        let mut t = Trainer {
            cfg: cfg.clone(),
            source: ExampleSource::new(&geo, cfg.noise, train, &phantom)?,
            geo,
            model,
            optimizer,
            holdout,
            step,
            cursor: Cursor {
                epoch: 0,
                batch: 0,
                rng: Rng::new(0).state(),
            },
            order: Vec::new(),
        };
        match cursor {
            Some(c) => {
                t.start_epoch(c.epoch);
                t.cursor = c;
            }
            None => t.start_epoch(0),
        }
        Ok(t)
    }

    /// Continues from a checkpoint written by [`Trainer::save`].
    pub fn resume(cfg: &RunConfig, path: &Path) -> Result<Self> {
        cfg.validate()?;
        let loaded = load_proct(path)?;
        if loaded.model.config() != &cfg.model_config()? {
            return Err(Error::Checkpoint("checkpoint model does not match the configuration".into()));
        }
        let num = |k: &str| -> Result<u64> {
            loaded
                .meta
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(path, format!("missing or bad {k}")))
        };
        let cursor = Cursor {
            epoch: num("epoch")? as usize,
            batch: num("batch")? as usize,
            rng: RngState {
                seed: num("rng.seed")?,
                counter: num("rng.counter")?,
            },
        };
        let step = num("step")? as usize;
        let opt = loaded.optimizer.ok_or_else(|| Error::format(path, "checkpoint has no optimizer state"))?;
        Trainer::with_model(cfg, loaded.model, Some(opt), step, Some(cursor))
    }

    fn epoch_rng(&self, epoch: usize) -> Rng {
        Rng::new(self.cfg.plan.seed).fork(1 + epoch as u64)
    }

    fn start_epoch(&mut self, epoch: usize) {
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..self.source.len()).collect();
        rng.shuffle(&mut order);
        self.order = order;
        self.cursor = Cursor {
            epoch,
            batch: 0,
            rng: rng.state(),
        };
    }

    pub fn epoch(&self) -> usize {
        self.cursor.epoch
    }

    pub fn finished(&self) -> bool {
        self.cursor.epoch >= self.cfg.plan.epochs || self.cfg.plan.max_steps.is_some_and(|m| self.step >= m)
    }

    fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.cfg.plan.batch_size)
    }

    /// One optimizer step on the next batch.
    pub fn step(&mut self) -> Result<LogRow> {
        if self.finished() {
            return Err(Error::Invalid("training plan already complete".into()));
        }
        let plan = &self.cfg.plan;
        let epoch = self.cursor.epoch;
        let bs = plan.batch_size;
        let members: Vec<usize> = self.order.iter().skip(self.cursor.batch * bs).take(bs).copied().collect();
        let mut rng = Rng::from_state(self.cursor.rng);
        let setting = sample_setting(plan, epoch, &mut rng)?;
        let v = setting.vector(&self.geo)?;
        let examples = members
            .iter()
            .map(|&i| self.source.example(i, &v, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let batch = stack_batch::<f32>(&examples)?;
        let scale = self.cfg.loss.scale(&setting)?;
        let lr = plan.lr_at(epoch);

        let params = trainable(&self.model.params);
        let out = self.model.net.forward(&params, &batch.x, &batch.ctx, &v.as_f64())?;
        let value = loss(&out, &batch.y, &self.cfg.loss)?.mul_scalar(scale as f32)?;
        let loss_value = f64::from(value.item()?);
        if !loss_value.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss_value} at step {} ({setting})", self.step)));
        }
        value.backward()?;
        let mut grads: Vec<Vec<f32>> = params.iter().map(|p| p.grad_or_zeros()).collect();
        if let Some(k) = grads.iter().position(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(format!("gradient of {} at step {}", self.model.specs[k].name, self.step)));
        }
        let grad_norm = clip_global_norm(&mut grads, plan.clip_norm)?;
        self.model.params = self.optimizer.update(&self.model.params, &grads, lr)?;

        let row = LogRow {
            step: self.step,
            epoch,
            setting,
            scale,
            loss: loss_value,
            lr,
            grad_norm,
        };
        self.step += 1;
        self.cursor.batch += 1;
        self.cursor.rng = rng.state();
        if self.cursor.batch >= self.batches_per_epoch() {
            self.start_epoch(epoch + 1);
        }
        Ok(row)
    }

    /// Runs until the end of the current epoch or the step budget.
    pub fn run_epoch(&mut self, on_step: &mut dyn FnMut(&LogRow)) -> Result<()> {
        let epoch = self.cursor.epoch;
        while !self.finished() && self.cursor.epoch == epoch {
            let row = self.step()?;
            on_step(&row);
        }
        Ok(())
    }

    pub fn meta(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("geometry".into(), self.geo.summary());
        m.insert("epoch".into(), self.cursor.epoch.to_string());
        m.insert("batch".into(), self.cursor.batch.to_string());
        m.insert("step".into(), self.step.to_string());
        m.insert("rng.seed".into(), self.cursor.rng.seed.to_string());
        m.insert("rng.counter".into(), self.cursor.rng.counter.to_string());
        m.insert("plan.seed".into(), self.cfg.plan.seed.to_string());
        m
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        save_proct(path, &self.model, Some(&self.optimizer), &self.meta())
    }

    /// Current prediction for a batch, without recording a graph.
    pub fn predict(&self, x: &Tensor<f32>, ctx: &Tensor<f32>, v: &[f64]) -> Result<Tensor<f32>> {
        ivct_tensor::no_grad(|| self.model.forward(x, ctx, v))
    }
}
