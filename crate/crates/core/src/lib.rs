//! Target distribution learning for Gaussian policies, with a PPO-clip
//! baseline, toy environments, and numerical checks of the method's theory.

pub mod advantage;
pub mod analysis;
pub mod config;
pub mod diagnostics;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod neural;
pub mod studies;
pub mod targets;
pub mod trainer;

pub use error::{Result, TdlError};
