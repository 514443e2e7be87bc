//! Group soft-thresholding, the proximal operator of `α‖·‖_{2,1}`.

use crate::zoo::GroupLayout;

/// Shrinks every layout subset toward zero by `alpha` in ℓ2 norm; subsets
/// with norm `≤ alpha` become exactly zero. Indices outside every subset
/// pass through unchanged.
pub fn group_soft_threshold(v: &[f64], layout: &GroupLayout, alpha: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    group_soft_threshold_in_place(&mut out, layout, alpha);
    out
}

pub fn group_soft_threshold_in_place(v: &mut [f64], layout: &GroupLayout, alpha: f64) {
    assert!(alpha >= 0.0, "threshold must be non-negative");
    if alpha == 0.0 {
        return;
    }
    for subset in layout.subsets() {
        let norm = subset.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt();
        if norm <= alpha {
            for &i in subset {
                v[i] = 0.0;
            }
        } else {
            let shrink = 1.0 - alpha / norm;
            for &i in subset {
                v[i] *= shrink;
            }
        }
    }
}

/// `‖v‖_{2,1}` over the layout subsets.
pub fn group_norm_21(v: &[f64], layout: &GroupLayout) -> f64 {
    layout.subsets().iter().map(|s| s.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()).sum()
}
