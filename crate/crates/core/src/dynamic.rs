//! Dynamic-contrast operators and the Brownian-bridge statistics behind the
//! cumulative-sum operator.
//!
//! Both operators split each pixel's time series into windows of `τ` frames
//! (stride defaults to `τ`; frames after the last full window are dropped)
//! and average a per-window statistic over the `N` windows:
//!
//! - [`dyn_std`]: population standard deviation of the window;
//! - [`dyn_cumsum`]: `max |cumsum(I − Ī)|` with `Ī` the window mean.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stack::{DynamicImage, Stack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DynMethod {
    #[default]
    StdDev,
    CumsumMax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynConfig {
    /// Window length τ in frames.
    pub window_length: usize,
    /// Window stride; `None` means non-overlapping windows (stride = τ).
    pub window_stride: Option<usize>,
    pub method: DynMethod,
}

impl Default for DynConfig {
    fn default() -> Self {
        Self {
            window_length: 50,
            window_stride: None,
            method: DynMethod::StdDev,
        }
    }
}

impl DynConfig {
    pub fn with_method(method: DynMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn stride(&self) -> usize {
        self.window_stride.unwrap_or(self.window_length)
    }

    /// Checks `2 ≤ τ ≤ frames` and `1 ≤ stride ≤ τ`; returns the window
    /// count `floor((frames − τ) / stride) + 1`.
    pub fn n_windows(&self, frames: usize) -> Result<usize> {
        let tau = self.window_length;
        if tau < 2 {
            return Err(Error::param("window_length", format!("{tau} is below 2")));
        }
        if tau > frames {
            return Err(Error::param(
                "window_length",
                format!("{tau} exceeds the stack length of {frames} frames"),
            ));
        }
        let stride = self.stride();
        if stride == 0 || stride > tau {
            return Err(Error::param(
                "window_stride",
                format!("{stride} is outside [1, {tau}]"),
            ));
        }
        Ok((frames - tau) / stride + 1)
    }
}

/// Population standard deviation (divisor `n`).
pub fn window_std(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// `max_k |Σ_{j≤k} (w_j − w̄)|`.
pub fn window_cumsum_max(w: &[f64]) -> f64 {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let mut s = 0.0;
    let mut best = 0.0f64;
    for v in w {
        s += v - mean;
        best = best.max(s.abs());
    }
    best
}

/// Running sum `[x₀, x₀+x₁, …]`.
pub fn cumulative_sum(x: &[f64]) -> Vec<f64> {
    x.iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect()
}

/// Average of `stat` over the windows of one series.
pub fn windowed_mean(series: &[f64], tau: usize, stride: usize, stat: impl Fn(&[f64]) -> f64) -> f64 {
    let n = (series.len() - tau) / stride + 1;
    (0..n).map(|i| stat(&series[i * stride..i * stride + tau])).sum::<f64>() / n as f64
}

fn per_pixel(stack: &Stack, config: &DynConfig, stat: fn(&[f64]) -> f64) -> Result<DynamicImage> {
    config.n_windows(stack.frames())?;
    let (tau, stride) = (config.window_length, config.stride());
    let values: Vec<f32> = (0..stack.n_pixels())
        .into_par_iter()
        .map_init(Vec::new, |buf, p| {
            stack.pixel_series_into(p, buf);
            windowed_mean(buf, tau, stride, stat) as f32
        })
        .collect();
    DynamicImage::new(stack.width(), stack.height(), values)
}

/// Mean over windows of the per-window standard deviation.
pub fn dyn_std(stack: &Stack, config: &DynConfig) -> Result<DynamicImage> {
    per_pixel(stack, config, window_std)
}

/// Mean over windows of the maximum absolute cumulative sum of the
/// mean-subtracted window.
pub fn dyn_cumsum(stack: &Stack, config: &DynConfig) -> Result<DynamicImage> {
    per_pixel(stack, config, window_cumsum_max)
}

/// Dispatches on `config.method`.
pub fn dynamic_image(stack: &Stack, config: &DynConfig) -> Result<DynamicImage> {
    match config.method {
        DynMethod::StdDev => dyn_std(stack, config),
        DynMethod::CumsumMax => dyn_cumsum(stack, config),
    }
}

/// `P[W_M ≤ u] = 1 − exp(−2u²)` for the supremum of a standard Brownian
/// bridge.
pub fn bridge_max_cdf(u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::param("u", "must be >= 0"));
    }
    Ok(-(-2.0 * u * u).exp_m1())
}

/// Offset `−ζ(1/2)/√(2π)` between the maximum of a discrete Gaussian walk
/// and that of the continuous process it samples.
pub const BRIDGE_DISCRETE_CORRECTION: f64 = 0.582_597_157_939_010_6;

/// Maps the supremum of an `n_frames`-sample bridge of unit-variance steps
/// onto the standard bridge scale, correcting for discrete sampling.
pub fn normalize_bridge_max(sup: f64, n_frames: usize) -> f64 {
    (sup + BRIDGE_DISCRETE_CORRECTION) / (n_frames as f64).sqrt()
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Suprema `max_k S_k` (with `S₀ = 0`) of `n_trials` discrete Brownian
/// bridges, each the cumulative sum of `n_frames` mean-subtracted standard
/// Gaussians.
pub fn bridge_max_samples(n_frames: usize, n_trials: usize, seed: u64) -> Vec<f64> {
    (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let x: Vec<f64> = (0..n_frames).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mean = x.iter().sum::<f64>() / n_frames.max(1) as f64;
            let mut s = 0.0;
            let mut sup = 0.0f64;
            for v in &x {
                s += v - mean;
                sup = sup.max(s);
            }
            sup
        })
        .collect()
}

/// Deterministic component added to the Gaussian samples of
/// [`walk_max_samples`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Drift {
    None,
    /// Constant offset `b` on every sample.
    Constant { bias: f64 },
    /// Linear trend rising from 0 to `total` over the series.
    Ramp { total: f64 },
}

impl Drift {
    pub fn at(&self, t: usize, n: usize) -> f64 {
        match *self {
            Drift::None => 0.0,
            Drift::Constant { bias } => bias,
            Drift::Ramp { total } => total * t as f64 / (n.max(2) - 1) as f64,
        }
    }
}

/// `max_k |Σ_{j≤k} x_j|` of raw (not mean-subtracted) walks `x = ε + drift`
/// with standard Gaussian `ε`.
pub fn walk_max_samples(n_frames: usize, n_trials: usize, seed: u64, drift: Drift) -> Vec<f64> {
    (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let mut s = 0.0;
            let mut best = 0.0f64;
            for t in 0..n_frames {
                let e: f64 = StandardNormal.sample(&mut rng);
                s += e + drift.at(t, n_frames);
                best = best.max(s.abs());
            }
            best
        })
        .collect()
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Median (average of the two central values for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Expected supremum of the standard Brownian bridge, `√(π/8)`.
pub fn bridge_max_mean() -> f64 {
    (PI / 8.0).sqrt()
}
