//! 3×3 same-padded 2-D cross-correlation over `[B, C, H, W]` inputs.

use super::Tensor;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone)]
pub struct Cache {
    x: Tensor,
}

#[derive(Debug, Clone)]
pub struct Grads {
    /// `None` when the caller did not ask for the input gradient.
    pub x: Option<Tensor>,
    pub k: Tensor,
    pub b: Tensor,
}

/// Valid output range for a tap at offset `d` (−1, 0 or +1) along an axis of length `n`.
fn span(d: isize, n: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

pub fn forward(x: &Tensor, k: &Tensor, b: &Tensor) -> Result<(Tensor, Cache)> {
    let [batch, c_in, h, w] = x.dims::<4>("conv2d input")?;
    let [c_out, k_in, kh, kw] = k.dims::<4>("conv2d kernel")?;
    if k_in != c_in || kh != KERNEL || kw != KERNEL {
        return Err(Error::shape(format!(
            "conv2d: kernel {:?} incompatible with {c_in} input channels",
            k.shape()
        )));
    }
    b.expect_shape(&[c_out], "conv2d bias")?;
    let plane = h * w;
    let xs = x.data();
    let ks = k.data();
    let mut y = vec![0.0; batch * c_out * plane];
    for bi in 0..batch {
        for co in 0..c_out {
            let out = &mut y[(bi * c_out + co) * plane..][..plane];
            out.fill(b.data()[co]);
            for ci in 0..c_in {
                let inp = &xs[(bi * c_in + ci) * plane..][..plane];
                let kern = &ks[(co * c_in + ci) * 9..][..9];
                for ky in 0..KERNEL {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(dy, h);
                    for kx in 0..KERNEL {
                        let kv = kern[ky * KERNEL + kx];
                        if kv == 0.0 {
                            continue;
                        }
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(dx, w);
                        for r in y0..y1 {
                            let src = ((r as isize + dy) as usize) * w;
                            let o = &mut out[r * w + x0..r * w + x1];
                            let i = &inp[(src as isize + x0 as isize + dx) as usize..][..x1 - x0];
                            for (ov, iv) in o.iter_mut().zip(i) {
                                *ov += kv * iv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[batch, c_out, h, w], y)?,
        Cache { x: x.clone() },
    ))
}

pub fn backward(cache: &Cache, k: &Tensor, gy: &Tensor, need_dx: bool) -> Result<Grads> {
    let [batch, c_in, h, w] = cache.x.dims::<4>("conv2d cache")?;
    let c_out = k.shape()[0];
    gy.expect_shape(&[batch, c_out, h, w], "conv2d grad_out")?;
    let plane = h * w;
    let xs = cache.x.data();
    let ks = k.data();
    let gys = gy.data();
    let mut gx = if need_dx {
        Some(vec![0.0; batch * c_in * plane])
    } else {
        None
    };
    let mut gk = vec![0.0; ks.len()];
    let mut gb = vec![0.0; c_out];
    for bi in 0..batch {
        for co in 0..c_out {
            let g = &gys[(bi * c_out + co) * plane..][..plane];
            gb[co] += g.iter().sum::<f64>();
            for ci in 0..c_in {
                let inp = &xs[(bi * c_in + ci) * plane..][..plane];
                let kbase = (co * c_in + ci) * 9;
                for ky in 0..KERNEL {
                    let dy = ky as isize - 1;
                    let (y0, y1) = span(dy, h);
                    for kx in 0..KERNEL {
                        let dx = kx as isize - 1;
                        let (x0, x1) = span(dx, w);
                        let kv = ks[kbase + ky * KERNEL + kx];
                        let mut acc = 0.0;
                        for r in y0..y1 {
                            let src = ((r as isize + dy) as usize * w) as isize + dx;
                            let go = &g[r * w + x0..r * w + x1];
                            let start = (src + x0 as isize) as usize;
                            let i = &inp[start..start + (x1 - x0)];
                            acc += go.iter().zip(i).map(|(a, b)| a * b).sum::<f64>();
                            if let Some(gx) = gx.as_mut() {
                                let gxp = &mut gx[(bi * c_in + ci) * plane + start..][..x1 - x0];
                                for (d, gv) in gxp.iter_mut().zip(go) {
                                    *d += kv * gv;
                                }
                            }
                        }
                        gk[kbase + ky * KERNEL + kx] += acc;
                    }
                }
            }
        }
    }
    Ok(Grads {
        x: gx
            .map(|v| Tensor::from_vec(&[batch, c_in, h, w], v))
            .transpose()?,
        k: Tensor::from_vec(k.shape(), gk)?,
        b: Tensor::from_vec(&[c_out], gb)?,
    })
}
