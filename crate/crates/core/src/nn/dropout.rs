//! Inverted dropout.

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct Cache {
    /// Per-entry multiplier (0 or 1/(1-p)); `None` for the identity pass.
    scale: Option<Vec<f64>>,
}

pub fn forward(x: &Tensor, p: f64, rng: &mut Rng, training: bool) -> Result<(Tensor, Cache)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::BadProbability(p));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), Cache { scale: None }));
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, s) in y.data_mut().iter_mut().zip(&scale) {
        *v *= s;
    }
    Ok((y, Cache { scale: Some(scale) }))
}

pub fn backward(cache: &Cache, gy: &Tensor) -> Tensor {
    let mut g = gy.clone();
    if let Some(scale) = &cache.scale {
        for (v, s) in g.data_mut().iter_mut().zip(scale) {
            *v *= s;
        }
    }
    g
}
