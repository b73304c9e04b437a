//! Non-overlapping 2×2 max pooling with stride 2.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Cache {
    input_shape: Vec<usize>,
    /// Flat input index of the winning element for every output element.
    argmax: Vec<usize>,
}

impl Cache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn output_dims(h: usize, w: usize) -> (usize, usize) {
    (h / 2, w / 2)
}

pub fn forward(x: &Tensor) -> Result<(Tensor, Cache)> {
    let [batch, ch, h, w] = x.dims::<4>("maxpool input")?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "maxpool needs H, W >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = output_dims(h, w);
    let xs = x.data();
    let mut y = Vec::with_capacity(batch * ch * oh * ow);
    let mut argmax = Vec::with_capacity(y.capacity());
    for plane in 0..batch * ch {
        let base = plane * h * w;
        for r in 0..oh {
            for c in 0..ow {
                let top = base + 2 * r * w + 2 * c;
                let mut best = top;
                // Row-major scan; strict comparison keeps the first maximum.
                for idx in [top + 1, top + w, top + w + 1] {
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                y.push(xs[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[batch, ch, oh, ow], y)?,
        Cache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn backward(cache: &Cache, gy: &Tensor) -> Result<Tensor> {
    if gy.len() != cache.argmax.len() {
        return Err(Error::shape(format!(
            "maxpool grad_out has {} entries, expected {}",
            gy.len(),
            cache.argmax.len()
        )));
    }
    let mut gx = Tensor::zeros(&cache.input_shape);
    let gxs = gx.data_mut();
    for (&idx, g) in cache.argmax.iter().zip(gy.data()) {
        gxs[idx] += g;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, ClosureFragment};
    use crate::nn::ParamStore;
    use crate::rng::Rng;

    #[test]
    fn picks_maximum() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn odd_dims_floor() {
        let (y, _) = forward(&Tensor::zeros(&[1, 1, 5, 5])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        let (y, _) = forward(&Tensor::zeros(&[2, 3, 3, 7])).unwrap();
        assert_eq!(y.shape(), &[2, 3, 1, 3]);
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            forward(&Tensor::zeros(&[1, 1, 1, 4])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn ties_route_to_first_occurrence() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let (_, cache) = forward(&x).unwrap();
        let gx = backward(&cache, &Tensor::full(&[1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(gx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(8);
        // A shuffled ramp has no ties and gaps far larger than the step.
        let mut vals: Vec<f64> = (0..2 * 3 * 5 * 6).map(|i| i as f64 * 0.01).collect();
        rng.shuffle(&mut vals);
        let mut store = ParamStore::new();
        store.insert("x", Tensor::from_vec(&[2, 3, 5, 6], vals).unwrap());
        let proj: Vec<f64> = (0..2 * 3 * 2 * 3).map(|_| rng.range(-1.0, 1.0)).collect();
        let proj = Tensor::from_vec(&[2, 3, 2, 3], proj).unwrap();
        let mut frag = ClosureFragment::new(store, move |s: &ParamStore| {
            let (y, cache) = forward(s.value("x")).unwrap();
            let loss = y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum();
            (loss, vec![("x".into(), backward(&cache, &proj).unwrap())])
        });
        assert!(grad_check(&mut frag, 1e-5) < 1e-6);
    }
}
