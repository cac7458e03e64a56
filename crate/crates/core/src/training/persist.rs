//! ProCT checkpoints: parameters, optional optimizer moments and run
//! metadata in an `IVCK` container.

use std::collections::BTreeMap;
use std::path::Path;

use ivct_tensor::Tensor;

use crate::error::{Error, Result};
use crate::io::Checkpoint;
use crate::model::nn::ParamSpec;
use crate::model::{ModelConfig, Proct};
use crate::training::optim::Adam;

pub const PROCT_KIND: &str = "proct";

pub struct LoadedProct {
    pub model: Proct<f32>,
    pub optimizer: Option<Adam<f32>>,
    pub meta: BTreeMap<String, String>,
    pub checksum: String,
}

pub fn put_params(ckpt: &mut Checkpoint, prefix: &str, specs: &[ParamSpec], values: &[Tensor<f32>]) {
    for (s, v) in specs.iter().zip(values) {
        ckpt.push(format!("{prefix}{}", s.name), &s.shape, v.to_vec());
    }
}

pub fn take_params(ckpt: &Checkpoint, prefix: &str, specs: &[ParamSpec]) -> Result<Vec<Tensor<f32>>> {
    specs
        .iter()
        .map(|s| {
            let name = format!("{prefix}{}", s.name);
            let t = ckpt.get(&name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != s.shape {
                return Err(Error::Checkpoint(format!("{name}: stored shape {:?}, model expects {:?}", t.shape, s.shape)));
            }
            Ok(Tensor::from_vec(&t.shape, t.data.clone())?)
        })
        .collect()
}

pub fn proct_checkpoint(model: &Proct<f32>, optimizer: Option<&Adam<f32>>, meta: &BTreeMap<String, String>) -> Checkpoint {
    let mut ckpt = Checkpoint::new(PROCT_KIND, model.config().canonical());
    ckpt.meta = meta.clone();
    ckpt.meta.insert("params".into(), model.count_params().to_string());
    put_params(&mut ckpt, "", &model.specs, &model.params);
    if let Some(opt) = optimizer {
        ckpt.meta.insert("adam.step".into(), opt.step.to_string());
        ckpt.meta.insert("adam.betas".into(), format!("{},{}", opt.beta1, opt.beta2));
        let as_tensors = |m: &[Vec<f32>]| -> Vec<Tensor<f32>> {
            model
                .specs
                .iter()
                .zip(m)
                .map(|(s, v)| Tensor::from_vec(&s.shape, v.clone()).expect("moment shape"))
                .collect()
        };
        put_params(&mut ckpt, "adam.m/", &model.specs, &as_tensors(&opt.m));
        put_params(&mut ckpt, "adam.v/", &model.specs, &as_tensors(&opt.v));
    }
    ckpt
}

pub fn save_proct(path: &Path, model: &Proct<f32>, optimizer: Option<&Adam<f32>>, meta: &BTreeMap<String, String>) -> Result<String> {
    proct_checkpoint(model, optimizer, meta).save(path)
}

pub fn proct_from_checkpoint(ckpt: &Checkpoint) -> Result<(Proct<f32>, Option<Adam<f32>>)> {
    if ckpt.kind != PROCT_KIND {
        return Err(Error::Checkpoint(format!("expected a {PROCT_KIND} checkpoint, found {:?}", ckpt.kind)));
    }
    let config = ModelConfig::from_canonical(&ckpt.config)?;
    // the builder fixes names and shapes; the random init is overwritten
    let shell = Proct::<f32>::init(&config, &mut ivct_tensor::Rng::new(0))?;
    let model = shell.with_params(take_params(ckpt, "", &shell.specs)?)?;
    let optimizer = match ckpt.meta.get("adam.step") {
        Some(step) => {
            let step = step.parse().map_err(|_| Error::Checkpoint("bad adam.step".into()))?;
            let betas = ckpt.meta_value("adam.betas")?;
            let (b1, b2) = betas
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| Error::Checkpoint("bad adam.betas".into()))?;
            let flat = |prefix: &str| -> Result<Vec<Vec<f32>>> {
                Ok(take_params(ckpt, prefix, &model.specs)?.iter().map(|t| t.to_vec()).collect())
            };
            Some(Adam {
                beta1: b1,
                beta2: b2,
                step,
                m: flat("adam.m/")?,
                v: flat("adam.v/")?,
            })
        }
        None => None,
    };
    Ok((model, optimizer))
}

pub fn load_proct(path: &Path) -> Result<LoadedProct> {
    let ckpt = Checkpoint::load(path)?;
    let (model, optimizer) = proct_from_checkpoint(&ckpt).map_err(|e| match e {
        Error::Checkpoint(m) => Error::format(path, m),
        other => other,
    })?;
    Ok(LoadedProct {
        model,
        optimizer,
        checksum: ckpt.checksum()?,
        meta: ckpt.meta,
    })
}
