pub mod cliio;
pub mod curves;
pub mod datagen;
pub mod error;
pub mod latentflow;
pub mod learncore;
pub mod manifold;
pub mod planner;
pub mod robot;
pub mod task;
pub mod tmo;

pub use error::{Error, Result};
