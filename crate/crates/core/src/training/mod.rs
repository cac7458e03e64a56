pub mod data;
pub mod loss;
pub mod optim;
pub mod persist;
pub mod plan;
pub mod trainer;

pub use data::{make_example, stack_batch, Batch, Example, ExampleSource};
pub use loss::{loss, loss_scale, LossConfig};
pub use optim::{clip_global_norm, Adam};
pub use persist::{load_proct, save_proct, LoadedProct};
pub use plan::{sample_setting, Phase, SettingPool, TrainPlan};
pub use trainer::{LogRow, Trainer};
