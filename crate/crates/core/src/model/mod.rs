pub mod config;
pub mod nn;
pub mod proct;
pub mod prompt;

pub use config::ModelConfig;
pub use proct::{Prompts, Proct, ProctNet};
pub use prompt::{modulate, StagePrompts, ViewPrompter};
