//! Element-wise nonlinearities.

use super::Tensor;
use crate::error::Result;

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Returns the output; it doubles as the backward cache.
pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_backward(y: &Tensor, gy: &Tensor) -> Result<Tensor> {
    gy.expect_shape(y.shape(), "sigmoid grad_out")?;
    let mut g = gy.clone();
    for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
        *gv *= yv * (1.0 - yv);
    }
    Ok(g)
}

/// Returns the output; it doubles as the backward cache.
pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(y: &Tensor, gy: &Tensor) -> Result<Tensor> {
    gy.expect_shape(y.shape(), "relu grad_out")?;
    let mut g = gy.clone();
    for (gv, yv) in g.data_mut().iter_mut().zip(y.data()) {
        if *yv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}
