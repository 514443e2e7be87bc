//! MoreauGrad and its group-sparse variant.

mod gst;
mod lipschitz;
mod oracle;
mod prox;

pub use gst::{group_norm_21, group_soft_threshold, group_soft_threshold_in_place};
pub use lipschitz::{lipschitz_probe, moreau_lipschitz_bound, PairOutcome, ProbeReport};
pub use oracle::{closed_form_oracle, TestFunction};
pub use prox::{
    group_sparse_moreau_grad, moreau_grad, MoreauConfig, MoreauMode, MoreauResult, DEFAULT_STEPS, DEFAULT_STEP_SAMPLES,
    DIVERGENCE_FACTOR,
};
