#![allow(dead_code)]

use ivct_core::config::RunConfig;

/// 16 px, 48 views: small enough for a few hundred steps in a test.
pub const SMALL: &str = r#"
[geometry]
image_size = 16
pixel_spacing = 16.0
n_detectors = 32
n_full_views = 48

[noise]
enabled = false

[plan]
epochs = 50
batch_size = 2
lr = 1e-3
phases = [{ until_epoch = 50, svct = { set = [12] } }]

[data]
n_train = 2
n_holdout = 2

[dual]
sino_dims = [4, 8]
fusion_dims = [4, 8]
steps = 20
"#;

pub fn small() -> RunConfig {
    RunConfig::from_toml(SMALL).unwrap()
}
