//! Structural pruning with MoreauGrad importance on small networks.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod exec;
pub mod importance;
pub mod moreau;
pub mod objective;
pub mod params;
pub mod perturb;
pub mod pipeline;
pub mod prune;
pub mod smoothing;
pub mod tensor;
pub mod zoo;

pub use error::{Error, Result};
pub use params::ParamSet;
pub use tensor::Tensor;
