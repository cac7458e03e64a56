pub mod config;
pub mod dual;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod model;
pub mod physics;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
