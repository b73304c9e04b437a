//! Single-layer LSTM over `[B, T, In]` sequences.
//!
//! Gate order inside the `4H`-wide projections is (input, forget, candidate,
//! output). The initial hidden and cell states are zero.
//!
//! ```text
//! z_t = x_t W_x + h_{t-1} W_h + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use super::activation::sigmoid_scalar;
use super::linalg::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    steps: usize,
    input: usize,
    hidden: usize,
    /// Per step, `[B, In]` contiguous.
    xs: Vec<Vec<f64>>,
    /// Per step, activated gates `[B, 4H]`.
    gates: Vec<Vec<f64>>,
    /// Per step, `[B, H]`.
    cells: Vec<Vec<f64>>,
    tanh_cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Grads {
    pub x: Option<Tensor>,
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

pub struct Output {
    /// `[B, T, H]`
    pub sequence: Tensor,
    /// `[B, H]`, the hidden state after the final step.
    pub last: Tensor,
}

pub fn forward(x: &Tensor, wx: &Tensor, wh: &Tensor, b: &Tensor) -> Result<(Output, Cache)> {
    let [batch, steps, input] = x.dims::<3>("lstm input")?;
    if steps == 0 {
        return Err(Error::shape("lstm needs at least one time step"));
    }
    let [wx_in, four_h] = wx.dims::<2>("lstm W_x")?;
    if wx_in != input || four_h % 4 != 0 || four_h == 0 {
        return Err(Error::shape(format!(
            "lstm: W_x {:?} incompatible with input width {input}",
            wx.shape()
        )));
    }
    let hidden = four_h / 4;
    wh.expect_shape(&[hidden, four_h], "lstm W_h")?;
    b.expect_shape(&[four_h], "lstm bias")?;

    let mut cache = Cache {
        batch,
        steps,
        input,
        hidden,
        xs: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        cells: Vec::with_capacity(steps),
        tanh_cells: Vec::with_capacity(steps),
        hiddens: Vec::with_capacity(steps),
    };
    let mut h_prev = vec![0.0; batch * hidden];
    let mut c_prev = vec![0.0; batch * hidden];
    let mut sequence = vec![0.0; batch * steps * hidden];

    for t in 0..steps {
        let mut x_t = Vec::with_capacity(batch * input);
        for bi in 0..batch {
            x_t.extend_from_slice(&x.data()[(bi * steps + t) * input..][..input]);
        }
        let mut z = Vec::with_capacity(batch * four_h);
        for _ in 0..batch {
            z.extend_from_slice(b.data());
        }
        gemm_acc(&x_t, wx.data(), &mut z, batch, input, four_h);
        gemm_acc(&h_prev, wh.data(), &mut z, batch, hidden, four_h);

        let mut c = vec![0.0; batch * hidden];
        let mut tc = vec![0.0; batch * hidden];
        let mut h = vec![0.0; batch * hidden];
        for bi in 0..batch {
            let zr = &mut z[bi * four_h..(bi + 1) * four_h];
            for j in 0..hidden {
                let i_g = sigmoid_scalar(zr[j]);
                let f_g = sigmoid_scalar(zr[hidden + j]);
                let g_g = zr[2 * hidden + j].tanh();
                let o_g = sigmoid_scalar(zr[3 * hidden + j]);
                zr[j] = i_g;
                zr[hidden + j] = f_g;
                zr[2 * hidden + j] = g_g;
                zr[3 * hidden + j] = o_g;
                let k = bi * hidden + j;
                c[k] = f_g * c_prev[k] + i_g * g_g;
                tc[k] = c[k].tanh();
                h[k] = o_g * tc[k];
            }
            sequence[(bi * steps + t) * hidden..][..hidden]
                .copy_from_slice(&h[bi * hidden..(bi + 1) * hidden]);
        }
        h_prev.clone_from(&h);
        c_prev.clone_from(&c);
        cache.xs.push(x_t);
        cache.gates.push(z);
        cache.cells.push(c);
        cache.tanh_cells.push(tc);
        cache.hiddens.push(h);
    }
    let out = Output {
        sequence: Tensor::from_vec(&[batch, steps, hidden], sequence)?,
        last: Tensor::from_vec(&[batch, hidden], h_prev)?,
    };
    Ok((out, cache))
}

/// Backpropagation through time. `g_seq` is the gradient with respect to
/// the full output sequence `[B, T, H]`; callers that only consume the last
/// step pass zeros elsewhere.
pub fn backward(
    cache: &Cache,
    wx: &Tensor,
    wh: &Tensor,
    g_seq: &Tensor,
    need_dx: bool,
) -> Result<Grads> {
    let (batch, steps, input, hidden) = (cache.batch, cache.steps, cache.input, cache.hidden);
    let four_h = 4 * hidden;
    g_seq.expect_shape(&[batch, steps, hidden], "lstm grad_out")?;

    let mut gwx = Tensor::zeros(&[input, four_h]);
    let mut gwh = Tensor::zeros(&[hidden, four_h]);
    let mut gb = Tensor::zeros(&[four_h]);
    let mut gx = if need_dx {
        Some(vec![0.0; batch * steps * input])
    } else {
        None
    };
    let mut dh_next = vec![0.0; batch * hidden];
    let mut dc_next = vec![0.0; batch * hidden];
    let zeros = vec![0.0; batch * hidden];
    let mut dz = vec![0.0; batch * four_h];

    for t in (0..steps).rev() {
        let gates = &cache.gates[t];
        let tc = &cache.tanh_cells[t];
        let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &cache.hiddens[t - 1] } else { &zeros };
        for bi in 0..batch {
            let g_row = &g_seq.data()[(bi * steps + t) * hidden..][..hidden];
            let gr = &gates[bi * four_h..(bi + 1) * four_h];
            let dzr = &mut dz[bi * four_h..(bi + 1) * four_h];
            for j in 0..hidden {
                let k = bi * hidden + j;
                let (i_g, f_g, g_g, o_g) = (
                    gr[j],
                    gr[hidden + j],
                    gr[2 * hidden + j],
                    gr[3 * hidden + j],
                );
                let dh = g_row[j] + dh_next[k];
                let d_o = dh * tc[k];
                let dc = dh * o_g * (1.0 - tc[k] * tc[k]) + dc_next[k];
                let d_i = dc * g_g;
                let d_g = dc * i_g;
                let d_f = dc * c_prev[k];
                dc_next[k] = dc * f_g;
                dzr[j] = d_i * i_g * (1.0 - i_g);
                dzr[hidden + j] = d_f * f_g * (1.0 - f_g);
                dzr[2 * hidden + j] = d_g * (1.0 - g_g * g_g);
                dzr[3 * hidden + j] = d_o * o_g * (1.0 - o_g);
            }
        }
        gemm_tn_acc(&cache.xs[t], &dz, gwx.data_mut(), batch, input, four_h);
        gemm_tn_acc(h_prev, &dz, gwh.data_mut(), batch, hidden, four_h);
        for row in dz.chunks_exact(four_h) {
            for (g, v) in gb.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        if let Some(gx) = gx.as_mut() {
            let mut dx_t = vec![0.0; batch * input];
            gemm_nt_acc(&dz, wx.data(), &mut dx_t, batch, four_h, input);
            for bi in 0..batch {
                gx[(bi * steps + t) * input..][..input]
                    .copy_from_slice(&dx_t[bi * input..(bi + 1) * input]);
            }
        }
        dh_next.fill(0.0);
        gemm_nt_acc(&dz, wh.data(), &mut dh_next, batch, four_h, hidden);
    }
    Ok(Grads {
        x: gx
            .map(|v| Tensor::from_vec(&[batch, steps, input], v))
            .transpose()?,
        wx: gwx,
        wh: gwh,
        b: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, ClosureFragment};
    use crate::nn::ParamStore;
    use crate::rng::Rng;

    fn rand(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.range(-scale, scale)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_and_inputs_give_zero_outputs() {
        let (out, _) = forward(
            &Tensor::zeros(&[2, 3, 4]),
            &Tensor::zeros(&[4, 20]),
            &Tensor::zeros(&[5, 20]),
            &Tensor::zeros(&[20]),
        )
        .unwrap();
        assert!(out.sequence.data().iter().all(|&v| v == 0.0));
        assert!(out.last.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_rolled_cell() {
        let mut rng = Rng::new(12);
        let (input, hidden) = (3, 2);
        let x = rand(&mut rng, &[1, 1, input], 1.0);
        let wx = rand(&mut rng, &[input, 4 * hidden], 1.0);
        let wh = rand(&mut rng, &[hidden, 4 * hidden], 1.0);
        let b = rand(&mut rng, &[4 * hidden], 1.0);
        let (out, _) = forward(&x, &wx, &wh, &b).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..hidden {
            let pre = |gate: usize| {
                let col = gate * hidden + j;
                b.data()[col]
                    + (0..input)
                        .map(|p| x.data()[p] * wx.data()[p * 4 * hidden + col])
                        .sum::<f64>()
            };
            let c = sig(pre(0)) * pre(2).tanh();
            let h = sig(pre(3)) * c.tanh();
            assert_close!(out.last.data()[j], h, 1e-14);
            assert_close!(out.sequence.data()[j], h, 1e-14);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = Tensor::zeros(&[1, 2, 3]);
        assert!(forward(
            &x,
            &Tensor::zeros(&[4, 8]),
            &Tensor::zeros(&[2, 8]),
            &Tensor::zeros(&[8])
        )
        .is_err());
        assert!(forward(
            &x,
            &Tensor::zeros(&[3, 8]),
            &Tensor::zeros(&[3, 8]),
            &Tensor::zeros(&[8])
        )
        .is_err());
        assert!(forward(
            &Tensor::zeros(&[1, 0, 3]),
            &Tensor::zeros(&[3, 8]),
            &Tensor::zeros(&[2, 8]),
            &Tensor::zeros(&[8])
        )
        .is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = Rng::new(13);
        let (batch, steps, input, hidden) = (2, 3, 4, 5);
        let mut store = ParamStore::new();
        store.insert("x", rand(&mut rng, &[batch, steps, input], 1.0));
        store.insert("wx", rand(&mut rng, &[input, 4 * hidden], 0.5));
        store.insert("wh", rand(&mut rng, &[hidden, 4 * hidden], 0.5));
        store.insert("b", rand(&mut rng, &[4 * hidden], 0.5));
        let proj = rand(&mut rng, &[batch, steps, hidden], 1.0);
        let mut frag = ClosureFragment::new(store, move |s: &ParamStore| {
            let (wx, wh) = (s.value("wx"), s.value("wh"));
            let (out, cache) = forward(s.value("x"), wx, wh, s.value("b")).unwrap();
            let loss = out
                .sequence
                .data()
                .iter()
                .zip(proj.data())
                .map(|(a, b)| a * b)
                .sum();
            let g = backward(&cache, wx, wh, &proj, true).unwrap();
            (
                loss,
                vec![
                    ("x".into(), g.x.unwrap()),
                    ("wx".into(), g.wx),
                    ("wh".into(), g.wh),
                    ("b".into(), g.b),
                ],
            )
        });
        assert!(grad_check(&mut frag, 1e-5) < 1e-5);
    }
}
