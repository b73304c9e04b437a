//! Finite-difference checks for every layer and for a whole model.
//!
//! Each layer check puts the layer inputs into the parameter store next to
//! the weights, so input gradients are checked too, and reduces the output
//! to a scalar through a fixed random projection.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{self, ModelConfig};
use crate::nn::gradcheck::{grad_check, relative_error, ClosureFragment};
use crate::nn::{activation, conv, dense, loss, lstm, pool, ParamStore, Tensor};
use crate::rng::Rng;

pub const STEP: f64 = 1e-5;
/// Step of the fourth-order stencil used on whole models. Its roundoff
/// floor is about ten times lower than the plain central quotient at
/// `STEP`, which matters for recurrent weights with gradients near 1e-8.
pub const MODEL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Dense,
    Relu,
    Sigmoid,
    Conv2d,
    Bce,
    Maxpool,
    Lstm,
    EndToEnd,
}

impl Component {
    pub const ALL: [Component; 8] = [
        Component::Dense,
        Component::Relu,
        Component::Sigmoid,
        Component::Conv2d,
        Component::Bce,
        Component::Maxpool,
        Component::Lstm,
        Component::EndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Dense => "dense",
            Component::Relu => "relu",
            Component::Sigmoid => "sigmoid",
            Component::Conv2d => "conv2d",
            Component::Bce => "bce",
            Component::Maxpool => "maxpool",
            Component::Lstm => "lstm",
            Component::EndToEnd => "end_to_end",
        }
    }

    /// Largest relative error accepted for this component.
    pub fn threshold(self) -> f64 {
        match self {
            Component::Maxpool | Component::Lstm => 1e-5,
            Component::EndToEnd => 1e-4,
            _ => 1e-6,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown gradcheck component `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub component: Component,
    pub max_rel_err: f64,
    pub threshold: f64,
    /// Gradient entries compared.
    pub checked: usize,
    /// Entries whose difference stencil crossed a kink.
    pub skipped: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.threshold
    }
}

fn rand(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.range(lo, hi)).collect()).expect("shape product")
}

/// Values bounded away from zero, so ReLU kinks stay out of reach of the step.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let mut t = rand(rng, shape, 0.1, 1.0);
    for v in t.data_mut() {
        if rng.bernoulli(0.5) {
            *v = -*v;
        }
    }
    t
}

/// Distinct entries with gaps far wider than the difference step.
fn tie_free(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - n as f64 * 0.05).collect();
    rng.shuffle(&mut values);
    Tensor::from_vec(shape, values).expect("shape product")
}

fn project(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn check_closure<F>(store: ParamStore, eval: F, corrupt: bool) -> (f64, usize, usize)
where
    F: FnMut(&ParamStore) -> (f64, Vec<(String, Tensor)>),
{
    let entries = store.scalar_count();
    let mut frag = ClosureFragment::new(store, eval);
    if corrupt {
        frag.grad_scale = 2.0;
    }
    (grad_check(&mut frag, STEP), entries, 0)
}

fn check_dense(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let mut store = ParamStore::new();
    store.insert("x", rand(rng, &[3, 4], -1.0, 1.0));
    store.insert("w", rand(rng, &[4, 5], -1.0, 1.0));
    store.insert("b", rand(rng, &[5], -1.0, 1.0));
    let r = rand(rng, &[3, 5], -1.0, 1.0);
    check_closure(
        store,
        move |s| {
            let (y, cache) = dense::forward(s.value("x"), s.value("w"), s.value("b")).unwrap();
            let g = dense::backward(&cache, s.value("w"), &r).unwrap();
            (
                project(&y, &r),
                vec![("x".into(), g.x), ("w".into(), g.w), ("b".into(), g.b)],
            )
        },
        corrupt,
    )
}

fn check_relu(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let mut store = ParamStore::new();
    store.insert("x", away_from_zero(rng, &[4, 6]));
    let r = rand(rng, &[4, 6], -1.0, 1.0);
    check_closure(
        store,
        move |s| {
            let y = activation::relu_forward(s.value("x"));
            let g = activation::relu_backward(&y, &r).unwrap();
            (project(&y, &r), vec![("x".into(), g)])
        },
        corrupt,
    )
}

fn check_sigmoid(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let mut store = ParamStore::new();
    store.insert("x", rand(rng, &[4, 6], -4.0, 4.0));
    let r = rand(rng, &[4, 6], -1.0, 1.0);
    check_closure(
        store,
        move |s| {
            let y = activation::sigmoid_forward(s.value("x"));
            let g = activation::sigmoid_backward(&y, &r).unwrap();
            (project(&y, &r), vec![("x".into(), g)])
        },
        corrupt,
    )
}

fn check_conv(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let mut store = ParamStore::new();
    store.insert("x", rand(rng, &[1, 2, 4, 5], -1.0, 1.0));
    store.insert("k", rand(rng, &[3, 2, 3, 3], -1.0, 1.0));
    store.insert("b", rand(rng, &[3], -1.0, 1.0));
    let r = rand(rng, &[1, 3, 4, 5], -1.0, 1.0);
    check_closure(
        store,
        move |s| {
            let (y, cache) = conv::forward(s.value("x"), s.value("k"), s.value("b")).unwrap();
            let g = conv::backward(&cache, s.value("k"), &r, true).unwrap();
            (
                project(&y, &r),
                vec![
                    ("x".into(), g.x.unwrap()),
                    ("k".into(), g.k),
                    ("b".into(), g.b),
                ],
            )
        },
        corrupt,
    )
}

fn check_bce(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let mut store = ParamStore::new();
    store.insert("pred", rand(rng, &[3, 5], 0.05, 0.95));
    let target = Tensor::from_vec(&[3, 5], (0..15).map(|_| rng.below(2) as f64).collect()).unwrap();
    check_closure(
        store,
        move |s| {
            let (l, g) = loss::bce(s.value("pred"), &target).unwrap();
            (l, vec![("pred".into(), g)])
        },
        corrupt,
    )
}

fn check_pool(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let mut store = ParamStore::new();
    store.insert("x", tie_free(rng, &[2, 2, 5, 6]));
    let r = rand(rng, &[2, 2, 2, 3], -1.0, 1.0);
    check_closure(
        store,
        move |s| {
            let (y, cache) = pool::forward(s.value("x")).unwrap();
            let g = pool::backward(&cache, &r).unwrap();
            (project(&y, &r), vec![("x".into(), g)])
        },
        corrupt,
    )
}

fn check_lstm(rng: &mut Rng, corrupt: bool) -> (f64, usize, usize) {
    let (b, t, input, hidden) = (2, 3, 4, 5);
    let mut store = ParamStore::new();
    store.insert("x", rand(rng, &[b, t, input], -1.0, 1.0));
    store.insert("wx", rand(rng, &[input, 4 * hidden], -0.5, 0.5));
    store.insert("wh", rand(rng, &[hidden, 4 * hidden], -0.5, 0.5));
    store.insert("b", rand(rng, &[4 * hidden], -0.5, 0.5));
    let r = rand(rng, &[b, t, hidden], -1.0, 1.0);
    check_closure(
        store,
        move |s| {
            let (out, cache) =
                lstm::forward(s.value("x"), s.value("wx"), s.value("wh"), s.value("b")).unwrap();
            let g = lstm::backward(&cache, s.value("wx"), s.value("wh"), &r, true).unwrap();
            (
                project(&out.sequence, &r),
                vec![
                    ("x".into(), g.x.unwrap()),
                    ("wx".into(), g.wx),
                    ("wh".into(), g.wh),
                    ("b".into(), g.b),
                ],
            )
        },
        corrupt,
    )
}

/// Whole desk (or paper) model under BCE with dropout active on a fixed
/// mask stream. Parameters are redrawn from a wider range than the
/// initializer so that recurrent gradients sit above the roundoff floor of
/// the difference quotient. Entries whose stencil changes a max-pool winner
/// or a ReLU state straddle a non-differentiable point and are counted as
/// skipped instead of compared.
fn check_end_to_end(rng: &mut Rng, scale: Scale, corrupt: bool) -> Result<(f64, usize, usize)> {
    let (config, per_param) = match scale {
        Scale::Desk => (ModelConfig::desk(), 24),
        Scale::Paper => (ModelConfig::paper(), 2),
    };
    let mut model = models::build(config.clone(), &mut rng.split(1))?;
    let mut init = rng.split(2);
    for (_, p) in model.params_mut().iter_mut() {
        for v in p.value.data_mut() {
            *v = init.range(-0.3, 0.3);
        }
    }
    let steps = config.steps();
    let audio = rand(rng, &[1, steps, config.audio_bins], 0.3, 3.0);
    let video = tie_free(rng, &[1, steps, 1, config.video_h, config.video_w]);
    let video = video.map(|v| v / (steps * config.video_h * config.video_w) as f64 * 10.0 + 0.5);
    let targets = Tensor::from_vec(
        &[1, config.audio_bins],
        (0..config.audio_bins)
            .map(|_| rng.below(2) as f64)
            .collect(),
    )?;
    let dropout_seed = rng.next_u64();
    let (a, v) = (Some(&audio), Some(&video));

    model.loss_and_grads(a, v, &targets, true, &mut Rng::new(dropout_seed))?;
    let base = model.switch_pattern(a, v, true, &mut Rng::new(dropout_seed))?;
    let names: Vec<String> = model.params().names().map(str::to_string).collect();
    let mut pick = rng.split(3);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for name in names {
        let mut analytic = model.params().value(&name).clone();
        analytic
            .data_mut()
            .copy_from_slice(model.params().get(&name).unwrap().grad.data());
        if corrupt {
            analytic.scale(2.0);
        }
        let mut indices: Vec<usize> = (0..analytic.len()).collect();
        pick.shuffle(&mut indices);
        indices.truncate(per_param);
        indices.sort_unstable();
        for idx in indices {
            let orig = model.params().value(&name).data()[idx];
            let probe = |model: &mut models::MaskModel, value: f64| -> Result<(f64, bool)> {
                model.params_mut().value_mut(&name).unwrap().data_mut()[idx] = value;
                let y = model.forward(a, v, true, &mut Rng::new(dropout_seed))?;
                let same = model.switch_pattern(a, v, true, &mut Rng::new(dropout_seed))? == base;
                Ok((loss::bce(&y, &targets)?.0, same))
            };
            let mut f = [0.0; 4];
            let mut smooth = true;
            for (slot, offset) in f.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
                let (l, same) = probe(&mut model, orig + offset * MODEL_STEP)?;
                *slot = l;
                smooth &= same;
            }
            model.params_mut().value_mut(&name).unwrap().data_mut()[idx] = orig;
            if !smooth {
                skipped += 1;
                continue;
            }
            let numeric = (8.0 * (f[2] - f[1]) - (f[3] - f[0])) / (12.0 * MODEL_STEP);
            worst = worst.max(relative_error(analytic.data()[idx], numeric));
            checked += 1;
        }
    }
    Ok((worst, checked, skipped))
}

pub fn run_component(
    component: Component,
    scale: Scale,
    corrupt: bool,
    seed: u64,
) -> Result<CheckResult> {
    let mut rng = Rng::new(seed).split(component as u64);
    let (max_rel_err, checked, skipped) = match component {
        Component::Dense => check_dense(&mut rng, corrupt),
        Component::Relu => check_relu(&mut rng, corrupt),
        Component::Sigmoid => check_sigmoid(&mut rng, corrupt),
        Component::Conv2d => check_conv(&mut rng, corrupt),
        Component::Bce => check_bce(&mut rng, corrupt),
        Component::Maxpool => check_pool(&mut rng, corrupt),
        Component::Lstm => check_lstm(&mut rng, corrupt),
        Component::EndToEnd => check_end_to_end(&mut rng, scale, corrupt)?,
    };
    Ok(CheckResult {
        component,
        max_rel_err,
        threshold: component.threshold(),
        checked,
        skipped,
    })
}

/// Runs every component; those listed in `corrupt` get doubled analytic gradients.
pub fn run_suite(scale: Scale, corrupt: &[Component], seed: u64) -> Result<Vec<CheckResult>> {
    Component::ALL
        .into_iter()
        .map(|c| run_component(c, scale, corrupt.contains(&c), seed))
        .collect()
}
