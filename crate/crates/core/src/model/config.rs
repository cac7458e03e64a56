use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STAGES: usize = 5;

/// Resolution level of each stage: encoder, encoder, bottleneck, decoder,
/// decoder.
pub const STAGE_LEVEL: [usize; N_STAGES] = [0, 1, 2, 1, 0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dims: Vec<usize>,
    pub n_blocks: Vec<usize>,
    pub n_heads: Vec<usize>,
    pub window: usize,
    pub mlp_ratio: Vec<usize>,
    pub attn_ratio: Vec<f64>,
    /// Length of the sampling vectors the prompters read.
    pub n_full_views: usize,
    /// Input side length; fixes the size of the frequency-domain filters.
    pub image_size: usize,
    pub prompt_hidden: Vec<usize>,
}

impl ModelConfig {
    /// Full-size configuration.
    pub fn full(n_full_views: usize, image_size: usize) -> Self {
        ModelConfig {
            embed_dims: vec![24, 48, 96, 48, 24],
            n_blocks: vec![8, 8, 8, 4, 4],
            n_heads: vec![2, 4, 6, 1, 1],
            window: 8,
            mlp_ratio: vec![2, 4, 4, 2, 2],
            attn_ratio: vec![0.0, 0.5, 1.0, 0.0, 0.0],
            n_full_views,
            image_size,
            prompt_hidden: vec![128, 64],
        }
    }

    /// Small configuration for CPU training.
    pub fn desk(n_full_views: usize, image_size: usize) -> Self {
        ModelConfig {
            embed_dims: vec![8, 16, 32, 16, 8],
            n_blocks: vec![2, 2, 2, 1, 1],
            n_heads: vec![1, 2, 4, 1, 1],
            ..ModelConfig::full(n_full_views, image_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, len) in [
            ("embed_dims", self.embed_dims.len()),
            ("n_blocks", self.n_blocks.len()),
            ("n_heads", self.n_heads.len()),
            ("mlp_ratio", self.mlp_ratio.len()),
            ("attn_ratio", self.attn_ratio.len()),
        ] {
            if len != N_STAGES {
                return bad(format!("{name} needs {N_STAGES} entries, got {len}"));
            }
        }
        if self.embed_dims.contains(&0) || self.mlp_ratio.contains(&0) {
            return bad("embedding dims and MLP ratios must be positive".into());
        }
        if self.window == 0 || self.n_full_views == 0 || self.prompt_hidden.is_empty() || self.prompt_hidden.contains(&0) {
            return bad("window, view count and prompter widths must be positive".into());
        }
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return bad(format!("image size {} must be a multiple of 4 and at least 8", self.image_size));
        }
        for s in 0..N_STAGES {
            let r = self.attn_ratio[s];
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("attention ratio {r} of stage {s} outside [0, 1]"));
            }
            if self.attention_blocks(s) > 0 {
                let h = self.n_heads[s];
                if h == 0 || self.embed_dims[s] % h != 0 {
                    return bad(format!(
                        "stage {s}: {h} heads do not divide embedding dim {}",
                        self.embed_dims[s]
                    ));
                }
                if self.window > 2 * self.stage_size(s) {
                    return bad(format!("window {} too large for stage {s}", self.window));
                }
            }
        }
        Ok(())
    }

    /// Number of attention blocks in a stage: the last `ceil(ratio * n)`.
    pub fn attention_blocks(&self, stage: usize) -> usize {
        let n = self.n_blocks[stage];
        // guard against 0.5 * 8 landing a hair above 4
        ((self.attn_ratio[stage] * n as f64) - 1e-9).ceil().max(0.0) as usize
    }

    pub fn block_has_attention(&self, stage: usize, block: usize) -> bool {
        block >= self.n_blocks[stage] - self.attention_blocks(stage).min(self.n_blocks[stage])
    }

    pub fn stage_size(&self, stage: usize) -> usize {
        self.image_size >> STAGE_LEVEL[stage]
    }

    /// Canonical single-line text used in checkpoints.
    pub fn canonical(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let ratios: Vec<String> = self.attn_ratio.iter().map(|r| r.to_string()).collect();
        format!(
            "embed_dims={};n_blocks={};n_heads={};window={};mlp_ratio={};attn_ratio={};n_full_views={};image_size={};prompt_hidden={}",
            join(&self.embed_dims),
            join(&self.n_blocks),
            join(&self.n_heads),
            self.window,
            join(&self.mlp_ratio),
            ratios.join(","),
            self.n_full_views,
            self.image_size,
            join(&self.prompt_hidden)
        )
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("model config text: {m}"));
        let mut cfg = ModelConfig::desk(0, 0);
        let list = |v: &str| -> Result<Vec<usize>> {
            v.split(',').map(|x| x.parse().map_err(|_| bad("bad integer list"))).collect()
        };
        for field in text.trim().split(';') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad("missing '='"))?;
            match k {
                "embed_dims" => cfg.embed_dims = list(v)?,
                "n_blocks" => cfg.n_blocks = list(v)?,
                "n_heads" => cfg.n_heads = list(v)?,
                "window" => cfg.window = v.parse().map_err(|_| bad("bad window"))?,
                "mlp_ratio" => cfg.mlp_ratio = list(v)?,
                "attn_ratio" => {
                    cfg.attn_ratio = v
                        .split(',')
                        .map(|x| x.parse().map_err(|_| bad("bad ratio")))
                        .collect::<Result<_>>()?
                }
                "n_full_views" => cfg.n_full_views = v.parse().map_err(|_| bad("bad view count"))?,
                "image_size" => cfg.image_size = v.parse().map_err(|_| bad("bad image size"))?,
                "prompt_hidden" => cfg.prompt_hidden = list(v)?,
                _ => return Err(bad("unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_placement() {
        let c = ModelConfig::full(720, 256);
        c.validate().unwrap();
        assert_eq!((0..5).map(|s| c.attention_blocks(s)).collect::<Vec<_>>(), vec![0, 4, 8, 0, 0]);
        assert!(!c.block_has_attention(1, 3) && c.block_has_attention(1, 4));
        let d = ModelConfig::desk(720, 64);
        assert_eq!(d.attention_blocks(1), 1);
        assert!(d.block_has_attention(1, 1) && !d.block_has_attention(1, 0));
    }

    #[test]
    fn rejects_bad_heads() {
        let mut c = ModelConfig::desk(720, 64);
        c.n_heads[2] = 5;
        assert!(c.validate().is_err());
        c.n_heads[2] = 4;
        c.n_blocks.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn canonical_roundtrip() {
        let c = ModelConfig::full(720, 256);
        assert_eq!(ModelConfig::from_canonical(&c.canonical()).unwrap(), c);
    }
}
