//! Sub-layers of a TCN block with their exact backward passes.
//!
//! Sequences are time-major: element `(t, c)` lives at `t * channels + c`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seq {
    pub len: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Seq {
    pub fn zeros(len: usize, channels: usize) -> Self {
        Self {
            len,
            channels,
            data: vec![0.0; len * channels],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let channels = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == channels), "ragged rows");
        Self {
            len: rows.len(),
            channels,
            data: rows.concat(),
        }
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, t: usize, c: usize) -> &mut f64 {
        &mut self.data[t * self.channels + c]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn add_assign(&mut self, other: &Seq) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Causal dilated convolution. `w` is `[out][in][k]`; tap `j` reads step `t - j * dilation`.
pub fn conv_forward(x: &Seq, w: &[f64], b: &[f64], out: usize, k: usize, dilation: usize) -> Seq {
    let cin = x.channels;
    debug_assert_eq!(w.len(), out * cin * k);
    debug_assert_eq!(b.len(), out);
    let mut y = Seq::zeros(x.len, out);
    for t in 0..x.len {
        for f in 0..out {
            let mut acc = b[f];
            for j in 0..k {
                let lag = j * dilation;
                if lag > t {
                    break;
                }
                let src = x.row(t - lag);
                let wf = &w[(f * cin) * k..(f * cin + cin) * k];
                for c in 0..cin {
                    acc += wf[c * k + j] * src[c];
                }
            }
            *y.at_mut(t, f) = acc;
        }
    }
    y
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv_backward(
    x: &Seq,
    w: &[f64],
    dy: &Seq,
    k: usize,
    dilation: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Seq {
    let cin = x.channels;
    let out = dy.channels;
    let mut dx = Seq::zeros(x.len, cin);
    for t in 0..x.len {
        for f in 0..out {
            let g = dy.at(t, f);
            if g == 0.0 {
                continue;
            }
            db[f] += g;
            for j in 0..k {
                let lag = j * dilation;
                if lag > t {
                    break;
                }
                let s = t - lag;
                for c in 0..cin {
                    let idx = (f * cin + c) * k + j;
                    dw[idx] += g * x.at(s, c);
                    *dx.at_mut(s, c) += g * w[idx];
                }
            }
        }
    }
    dx
}

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct NormCache {
    pub xhat: Seq,
    pub inv_std: Vec<f64>,
}

/// Normalizes the channel vector of every time step to zero mean and unit
/// variance, then applies a per-channel gain and shift.
pub fn norm_forward(x: &Seq, gain: &[f64], shift: &[f64]) -> (Seq, NormCache) {
    let ch = x.channels;
    let mut y = Seq::zeros(x.len, ch);
    let mut xhat = Seq::zeros(x.len, ch);
    let mut inv_std = Vec::with_capacity(x.len);
    for t in 0..x.len {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / ch as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ch as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        inv_std.push(inv);
        for c in 0..ch {
            let h = (row[c] - mean) * inv;
            *xhat.at_mut(t, c) = h;
            *y.at_mut(t, c) = gain[c] * h + shift[c];
        }
    }
    (y, NormCache { xhat, inv_std })
}

pub fn norm_backward(cache: &NormCache, gain: &[f64], dy: &Seq, dgain: &mut [f64], dshift: &mut [f64]) -> Seq {
    let ch = dy.channels;
    let n = ch as f64;
    let mut dx = Seq::zeros(dy.len, ch);
    let mut dxhat = vec![0.0; ch];
    for t in 0..dy.len {
        let mut sum = 0.0;
        let mut dot = 0.0;
        for c in 0..ch {
            let g = dy.at(t, c);
            let h = cache.xhat.at(t, c);
            dgain[c] += g * h;
            dshift[c] += g;
            dxhat[c] = g * gain[c];
            sum += dxhat[c];
            dot += dxhat[c] * h;
        }
        let inv = cache.inv_std[t];
        for c in 0..ch {
            let h = cache.xhat.at(t, c);
            *dx.at_mut(t, c) = inv / n * (n * dxhat[c] - sum - h * dot);
        }
    }
    dx
}

pub fn relu_forward(x: &Seq) -> Seq {
    Seq {
        len: x.len,
        channels: x.channels,
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// `pre` is the rectifier's input.
pub fn relu_backward(pre: &Seq, dy: &Seq) -> Seq {
    Seq {
        len: dy.len,
        channels: dy.channels,
        data: pre
            .data
            .iter()
            .zip(&dy.data)
            .map(|(p, g)| if *p > 0.0 { *g } else { 0.0 })
            .collect(),
    }
}

/// Spatial dropout: one keep/scale factor per channel, shared by every step.
pub fn channel_scale(x: &Seq, scale: &[f64]) -> Seq {
    let mut y = x.clone();
    for t in 0..x.len {
        for (c, s) in scale.iter().enumerate() {
            *y.at_mut(t, c) *= s;
        }
    }
    y
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of `m ln p + (1 - m) ln(1 - p)` with `p = sigmoid(z)` w.r.t. `z`.
pub fn bernoulli_log_prob_grad(z: f64, matched: bool) -> f64 {
    let m = if matched { 1.0 } else { 0.0 };
    m - sigmoid(z)
}
