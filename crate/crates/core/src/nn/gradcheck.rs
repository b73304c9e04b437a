//! Central-difference gradient checking.

use super::{ParamStore, Tensor};
use crate::rng::Rng;

/// Something with parameters, a scalar loss, and an analytic gradient.
pub trait GradFragment {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Loss at the current parameter values.
    fn loss(&mut self) -> f64;
    /// Loss, with analytic gradients written into the store's grad slots
    /// (which the caller has zeroed).
    fn loss_and_grads(&mut self) -> f64;
}

/// Fragment defined by a closure returning the loss and per-parameter gradients.
pub struct ClosureFragment<F> {
    store: ParamStore,
    eval: F,
    /// Multiplier applied to analytic gradients, for fault injection.
    pub grad_scale: f64,
}

impl<F> ClosureFragment<F>
where
    F: FnMut(&ParamStore) -> (f64, Vec<(String, Tensor)>),
{
    pub fn new(store: ParamStore, eval: F) -> Self {
        ClosureFragment {
            store,
            eval,
            grad_scale: 1.0,
        }
    }
}

impl<F> GradFragment for ClosureFragment<F>
where
    F: FnMut(&ParamStore) -> (f64, Vec<(String, Tensor)>),
{
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss(&mut self) -> f64 {
        (self.eval)(&self.store).0
    }

    fn loss_and_grads(&mut self) -> f64 {
        let (loss, grads) = (self.eval)(&self.store);
        for (name, mut g) in grads {
            g.scale(self.grad_scale);
            self.store
                .accumulate_grad(&name, &g)
                .expect("fragment returned a gradient for an unknown parameter");
        }
        loss
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter entry.
pub fn grad_check(frag: &mut dyn GradFragment, h: f64) -> f64 {
    grad_check_sampled(frag, h, None, &mut Rng::new(0))
}

/// Like [`grad_check`], but visits at most `max_per_param` randomly chosen
/// entries of each parameter tensor.
pub fn grad_check_sampled(
    frag: &mut dyn GradFragment,
    h: f64,
    max_per_param: Option<usize>,
    rng: &mut Rng,
) -> f64 {
    frag.store_mut().zero_grad();
    frag.loss_and_grads();
    let names: Vec<String> = frag.store().names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    for name in names {
        let analytic = frag.store().get(&name).unwrap().grad.clone();
        let n = analytic.len();
        let mut indices: Vec<usize> = (0..n).collect();
        if let Some(k) = max_per_param {
            if k < n {
                rng.shuffle(&mut indices);
                indices.truncate(k);
                indices.sort_unstable();
            }
        }
        for idx in indices {
            let orig = frag.store().value(&name).data()[idx];
            let set = |frag: &mut dyn GradFragment, v: f64| {
                frag.store_mut().value_mut(&name).unwrap().data_mut()[idx] = v;
            };
            set(frag, orig + h);
            let plus = frag.loss();
            set(frag, orig - h);
            let minus = frag.loss();
            set(frag, orig);
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic.data()[idx], numeric));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{activation, dense, loss};

    fn dense_sigmoid_bce(scale: f64) -> f64 {
        let mut rng = Rng::new(31);
        let mut rand = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
        };
        let x = rand(&[2, 3]);
        let mut store = ParamStore::new();
        store.insert("w", rand(&[3, 4]));
        store.insert("b", rand(&[4]));
        let target =
            Tensor::from_vec(&[2, 4], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let mut frag = ClosureFragment::new(store, move |s: &ParamStore| {
            let w = s.value("w");
            let (z, cache) = dense::forward(&x, w, s.value("b")).unwrap();
            let y = activation::sigmoid_forward(&z);
            let (l, gy) = loss::bce(&y, &target).unwrap();
            let gz = activation::sigmoid_backward(&y, &gy).unwrap();
            let g = dense::backward(&cache, w, &gz).unwrap();
            (l, vec![("w".into(), g.w), ("b".into(), g.b)])
        });
        frag.grad_scale = scale;
        grad_check(&mut frag, 1e-5)
    }

    #[test]
    fn composed_fragment_passes() {
        assert!(dense_sigmoid_bce(1.0) < 1e-6);
    }

    #[test]
    fn corrupted_backward_is_detected() {
        assert!(dense_sigmoid_bce(2.0) > 0.1);
    }

    #[test]
    fn empty_fragment_reports_zero() {
        let mut frag = ClosureFragment::new(ParamStore::new(), |_: &ParamStore| (1.0, vec![]));
        assert_eq!(grad_check(&mut frag, 1e-5), 0.0);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }
}
