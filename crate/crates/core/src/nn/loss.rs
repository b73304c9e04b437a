//! Mean binary cross-entropy.

use super::Tensor;
use crate::error::Result;

pub const PRED_CLAMP: f64 = 1e-7;

/// Returns the mean loss and its gradient with respect to `pred`.
///
/// Predictions are clamped to `[1e-7, 1 - 1e-7]`; the gradient is zero for
/// entries the clamp is active on.
pub fn bce(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    target.expect_shape(pred.shape(), "bce target")?;
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let pc = p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
        loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        if pc == p {
            *g = (-t / pc + (1.0 - t) / (1.0 - pc)) / n;
        }
    }
    Ok((loss / n, grad))
}
