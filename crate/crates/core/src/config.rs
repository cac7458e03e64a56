//! TOML run configuration shared by training, evaluation and the CLI.
//!
//! Every section is optional; omitted keys take the desk defaults. See
//! `configs/desk.toml` for a complete example.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dual::DualConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::physics::{make_geometry, GeometryConfig, NoiseModel, PhantomKind, ScanGeometry};
use crate::training::{LossConfig, TrainPlan};

/// Network shape. `preset` picks the base; listed fields override it. View
/// count and image size always come from the geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub embed_dims: Option<Vec<usize>>,
    pub n_blocks: Option<Vec<usize>>,
    pub n_heads: Option<Vec<usize>>,
    pub window: Option<usize>,
    pub mlp_ratio: Option<Vec<usize>>,
    pub attn_ratio: Option<Vec<f64>>,
    pub prompt_hidden: Option<Vec<usize>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "desk".into(),
            embed_dims: None,
            n_blocks: None,
            n_heads: None,
            window: None,
            mlp_ratio: None,
            attn_ratio: None,
            prompt_hidden: None,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, geo: &ScanGeometry) -> Result<ModelConfig> {
        let mut m = match self.preset.as_str() {
            "desk" => ModelConfig::desk(geo.n_full_views, geo.image_size),
            "full" => ModelConfig::full(geo.n_full_views, geo.image_size),
            other => return Err(Error::Config(format!("unknown model preset {other:?}"))),
        };
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { m.$f = v.clone(); })*};
        }
        take!(embed_dims, n_blocks, n_heads, window, mlp_ratio, attn_ratio, prompt_hidden);
        m.validate()?;
        Ok(m)
    }
}

/// Where training and held-out images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory of grayscale images; random ellipse phantoms when absent.
    pub dataset_dir: Option<PathBuf>,
    /// Synthetic training images.
    pub n_train: usize,
    /// Held-out images: synthetic count, or the last files of the directory.
    pub n_holdout: usize,
    pub seed: u64,
    /// Source of the in-context pair.
    pub context_phantom: PhantomKind,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset_dir: None,
            n_train: 200,
            n_holdout: 20,
            seed: 0,
            context_phantom: PhantomKind::SheppLogan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "GeometryConfig::desk")]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "TrainPlan::desk")]
    pub plan: TrainPlan,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub dual: DualConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig::desk(),
            noise: NoiseModel::default(),
            model: ModelSection::default(),
            plan: TrainPlan::desk(),
            loss: LossConfig::default(),
            data: DataSection::default(),
            dual: DualConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn geometry(&self) -> Result<ScanGeometry> {
        make_geometry(&self.geometry)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        self.model.resolve(&self.geometry()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.model_config()?;
        self.noise.validate()?;
        self.plan.validate()?;
        self.loss.validate()?;
        self.dual.validate()?;
        if self.data.dataset_dir.is_none() && self.data.n_train == 0 {
            return Err(Error::Config("no training images: set n_train or dataset_dir".into()));
        }
        Ok(())
    }
}
