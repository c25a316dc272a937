//! Receptive-field views of the input→excitatory weights.

use crate::encoding::PATCH_PIXELS;
use crate::plasticity::Projection;

/// `w_ON − w_OFF` of one postsynaptic neuron, 18×18 row-major.
pub fn on_minus_off(proj: &Projection, post: usize) -> Vec<f64> {
    let row = proj.row(post);
    (0..PATCH_PIXELS).map(|k| row[k] as f64 - row[PATCH_PIXELS + k] as f64).collect()
}

/// Hoyer sparseness `(√n − ‖x‖₁/‖x‖₂) / (√n − 1)`: 0 for a flat vector, 1
/// for a single nonzero entry. An all-zero vector scores 0.
pub fn hoyer(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if l2 == 0.0 || x.len() < 2 {
        return 0.0;
    }
    (n.sqrt() - l1 / l2) / (n.sqrt() - 1.0)
}

/// Mean Hoyer sparseness of `|w_ON − w_OFF|` over all postsynaptic neurons.
pub fn mean_rf_sparseness(proj: &Projection) -> f64 {
    let total: f64 = (0..proj.post_size).map(|j| hoyer(&on_minus_off(proj, j))).sum();
    total / proj.post_size.max(1) as f64
}
