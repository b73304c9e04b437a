//! Fully connected layer `y = x W + b`.

use super::linalg::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Cache {
    x: Tensor,
}

#[derive(Debug, Clone)]
pub struct Grads {
    pub x: Tensor,
    pub w: Tensor,
    pub b: Tensor,
}

pub fn forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(Tensor, Cache)> {
    let [batch, fan_in] = x.dims::<2>("dense input")?;
    let [w_in, fan_out] = w.dims::<2>("dense weight")?;
    if w_in != fan_in {
        return Err(Error::shape(format!(
            "dense: input width {fan_in} vs weight rows {w_in}"
        )));
    }
    b.expect_shape(&[fan_out], "dense bias")?;
    let mut y = Vec::with_capacity(batch * fan_out);
    for _ in 0..batch {
        y.extend_from_slice(b.data());
    }
    gemm_acc(x.data(), w.data(), &mut y, batch, fan_in, fan_out);
    Ok((
        Tensor::from_vec(&[batch, fan_out], y)?,
        Cache { x: x.clone() },
    ))
}

pub fn backward(cache: &Cache, w: &Tensor, gy: &Tensor) -> Result<Grads> {
    let [batch, fan_in] = cache.x.dims::<2>("dense cache")?;
    let fan_out = w.shape()[1];
    gy.expect_shape(&[batch, fan_out], "dense grad_out")?;
    let mut gx = Tensor::zeros(&[batch, fan_in]);
    gemm_nt_acc(gy.data(), w.data(), gx.data_mut(), batch, fan_out, fan_in);
    let mut gw = Tensor::zeros(&[fan_in, fan_out]);
    gemm_tn_acc(
        cache.x.data(),
        gy.data(),
        gw.data_mut(),
        batch,
        fan_in,
        fan_out,
    );
    let mut gb = Tensor::zeros(&[fan_out]);
    for row in gy.data().chunks_exact(fan_out) {
        for (g, v) in gb.data_mut().iter_mut().zip(row) {
            *g += v;
        }
    }
    Ok(Grads {
        x: gx,
        w: gw,
        b: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, ClosureFragment};
    use crate::nn::ParamStore;
    use crate::rng::Rng;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_weights() {
        let (y, _) = forward(
            &t(&[1, 2], &[1.0, 0.0]),
            &t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]),
            &Tensor::zeros(&[2]),
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn hand_arithmetic() {
        let (y, _) = forward(
            &t(&[1, 2], &[1.0, 2.0]),
            &t(&[2, 1], &[1.0, 1.0]),
            &t(&[1], &[3.0]),
        )
        .unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[2, 3]);
        assert!(matches!(
            forward(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[4])),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            forward(&x, &Tensor::zeros(&[3, 4]), &Tensor::zeros(&[3])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(1);
        let mut rand = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
        };
        let mut store = ParamStore::new();
        store.insert("x", rand(&[3, 4]));
        store.insert("w", rand(&[4, 2]));
        store.insert("b", rand(&[2]));
        let proj = rand(&[3, 2]);
        let mut frag = ClosureFragment::new(store, move |s: &ParamStore| {
            let w = s.value("w");
            let (y, cache) = forward(s.value("x"), w, s.value("b")).unwrap();
            let loss = y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum();
            let g = backward(&cache, w, &proj).unwrap();
            (
                loss,
                vec![("x".into(), g.x), ("w".into(), g.w), ("b".into(), g.b)],
            )
        });
        assert!(grad_check(&mut frag, 1e-5) < 1e-6);
    }
}
