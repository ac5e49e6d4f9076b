//! Training losses with analytic gradients.
//!
//! The orientation loss is the summed squared difference between predicted and
//! target orientation maps (no averaging; the balance factor absorbs scale).
//! The heatmap loss is sigmoid cross-entropy over post-sigmoid probabilities,
//! averaged over the joint count only. Gradients are returned in the same
//! memory layout as the input stacks so an external trainer can consume them
//! directly; both are validated against central finite differences.

use thiserror::Error;

use crate::encode::{HeatmapStack, OrientationMapStack};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before the logs.
/// Numerical guard only; the loss contract expects values in (0, 1).
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("stack shapes disagree: predicted {pred:?}, target {target:?}")]
    ShapeMismatch {
        pred: (usize, usize, usize),
        target: (usize, usize, usize),
    },
}

/// Combined loss summary: `total = orientation_loss + lambda * heatmap_loss`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LossReport {
    pub orientation_loss: f64,
    pub heatmap_loss: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Summed squared error over all limbs, pixels, and channels.
///
/// Returns the loss and its gradient `2 * (pred - target)` with respect to the
/// predicted stack, laid out like [`OrientationMapStack::values`].
pub fn orientation_loss(
    pred: &OrientationMapStack,
    target: &OrientationMapStack,
) -> Result<(f64, Vec<f64>), LossError> {
    let (ph, pw) = pred.resolution();
    let (th, tw) = target.resolution();
    if pred.limb_count() != target.limb_count() || (ph, pw) != (th, tw) {
        return Err(LossError::ShapeMismatch {
            pred: (pred.limb_count(), ph, pw),
            target: (target.limb_count(), th, tw),
        });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.values().len());
    for (&p, &t) in pred.values().iter().zip(target.values()) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d);
    }
    Ok((loss, grad))
}

/// Sigmoid cross-entropy between predicted probabilities and target heatmaps,
/// summed over pixels and averaged over the joint count.
///
/// Returns the loss and its gradient with respect to the predictions (zero
/// where the clamp saturates), laid out like [`HeatmapStack::values`].
pub fn heatmap_loss(
    pred: &HeatmapStack,
    target: &HeatmapStack,
) -> Result<(f64, Vec<f64>), LossError> {
    let (ph, pw) = pred.resolution();
    let (th, tw) = target.resolution();
    if pred.map_count() != target.map_count() || (ph, pw) != (th, tw) {
        return Err(LossError::ShapeMismatch {
            pred: (pred.map_count(), ph, pw),
            target: (target.map_count(), th, tw),
        });
    }
    let inv_n = 1.0 / pred.map_count() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.values().len());
    for (&p_raw, &g) in pred.values().iter().zip(target.values()) {
        let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
        let d = if p_raw <= PROB_CLAMP || p_raw >= 1.0 - PROB_CLAMP {
            0.0
        } else {
            -(g / p - (1.0 - g) / (1.0 - p)) * inv_n
        };
        grad.push(d);
    }
    Ok((loss * inv_n, grad))
}

/// Combined training loss with balance factor `lambda` (0.2 by default across
/// the pipeline).
pub fn total_loss(
    pred_orient: &OrientationMapStack,
    target_orient: &OrientationMapStack,
    pred_heat: &HeatmapStack,
    target_heat: &HeatmapStack,
    lambda: f64,
) -> Result<LossReport, LossError> {
    let (lo, _) = orientation_loss(pred_orient, target_orient)?;
    let (lp, _) = heatmap_loss(pred_heat, target_heat)?;
    Ok(LossReport {
        orientation_loss: lo,
        heatmap_loss: lp,
        total: lo + lambda * lp,
        lambda,
    })
}
