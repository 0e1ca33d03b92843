//! Periodic orthonormal Daubechies-4 (8-tap) wavelet transform and soft-threshold shrinkage.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pa_forward::SignalFrame;

/// Daubechies-4 decomposition low-pass filter (8 taps, PyWavelets `db4` ordering).
pub const DB4_LO: [f64; 8] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.02798376941698385,
    0.6308807679295904,
    0.7148465705525415,
    0.23037781330885523,
];

/// Median absolute deviation to Gaussian sigma.
const MAD_TO_SIGMA: f64 = 0.6745;

fn high_pass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for (j, v) in g.iter_mut().enumerate() {
        let s = if j % 2 == 0 { 1.0 } else { -1.0 };
        *v = s * DB4_LO[7 - j];
    }
    g
}

/// One analysis step on a periodic signal of even length.
fn analyze(x: &[f64], approx: &mut Vec<f64>, detail: &mut Vec<f64>) {
    let n = x.len();
    let g = high_pass();
    approx.clear();
    detail.clear();
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..8 {
            let v = x[(2 * k + j) % n];
            a += DB4_LO[j] * v;
            d += g[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
}

/// Inverse of [`analyze`] (the transpose of an orthogonal map).
fn synthesize(approx: &[f64], detail: &[f64], out: &mut Vec<f64>) {
    let n = 2 * approx.len();
    let g = high_pass();
    out.clear();
    out.resize(n, 0.0);
    for k in 0..approx.len() {
        for j in 0..8 {
            out[(2 * k + j) % n] += DB4_LO[j] * approx[k] + g[j] * detail[k];
        }
    }
}

/// Multi-level decomposition. Returns the coarsest approximation and the
/// detail bands, finest first. `x.len()` must be divisible by `2^levels`.
pub fn dwt(x: &[f64], levels: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert!(
        x.len().is_multiple_of(1 << levels),
        "length not divisible by 2^levels"
    );
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    let (mut a, mut d) = (Vec::new(), Vec::new());
    for _ in 0..levels {
        analyze(&approx, &mut a, &mut d);
        std::mem::swap(&mut approx, &mut a);
        details.push(d.clone());
    }
    (approx, details)
}

pub fn idwt(approx: &[f64], details: &[Vec<f64>]) -> Vec<f64> {
    let mut x = approx.to_vec();
    let mut out = Vec::new();
    for d in details.iter().rev() {
        synthesize(&x, d, &mut out);
        std::mem::swap(&mut x, &mut out);
    }
    x
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Denoise one trace: universal soft threshold per detail level, with the
/// noise level estimated from that level's median absolute coefficient.
/// The approximation band is kept as is.
pub fn denoise_trace(x: &[f64], levels: usize) -> Result<Vec<f64>> {
    let n = x.len();
    let block = 1usize
        .checked_shl(levels as u32)
        .ok_or_else(|| Error::invalid("wavelet levels", levels))?;
    if levels == 0 || n < block {
        return Err(Error::invalid(
            "wavelet denoise",
            format!("{n} samples cannot support {levels} levels (need >= {block})"),
        ));
    }
    // Pad by mirror reflection up to a multiple of 2^levels.
    let padded_len = n.div_ceil(block) * block;
    let mut padded = x.to_vec();
    for i in 0..padded_len - n {
        padded.push(x[n - 1 - (i % n)]);
    }
    let (approx, mut details) = dwt(&padded, levels);
    let gain = (2.0 * (n as f64).ln()).sqrt();
    for d in &mut details {
        let sigma = median(d.iter().map(|v| v.abs()).collect()) / MAD_TO_SIGMA;
        let t = sigma * gain;
        for v in d.iter_mut() {
            *v = soft(*v, t);
        }
    }
    let mut out = idwt(&approx, &details);
    out.truncate(n);
    Ok(out)
}

/// Denoise every channel of a frame.
pub fn wavelet_denoise(frame: &SignalFrame, levels: usize) -> Result<SignalFrame> {
    frame.validate()?;
    let ns = frame.n_samples;
    let channels: Vec<Vec<f64>> = (0..frame.n_elements)
        .into_par_iter()
        .map(|k| denoise_trace(frame.channel(k), levels))
        .collect::<Result<_>>()?;
    let mut out = frame.clone();
    for (k, c) in channels.into_iter().enumerate() {
        out.data[k * ns..(k + 1) * ns].copy_from_slice(&c);
    }
    Ok(out)
}
