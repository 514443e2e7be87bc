//! Weight-format rounding, norm-bounded noise, and pruning consistency under both.

mod robustness;
mod rounding;

pub use robustness::{
    consistency_experiment, jaccard, perturb, robustness_csv, symmetric_difference, PerturbSpec, RobustnessReport,
    ROBUSTNESS_CSV_HEADER,
};
pub use rounding::{round_trip, round_value, HalfFormat};
