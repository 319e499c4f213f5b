//! Crossing-intensity bandwidth estimator.
//!
//! The local crossing rate of a time-warped unit-variance process with flat
//! spectrum is `2 r B(t) sum_i exp(-L_i^2 / 2)` with power ratio
//! `r = sqrt(lambda2 / lambda0)`. The estimator smooths the crossing train with
//! a reflected Gaussian kernel, inverts that relation pointwise, and then
//! alternates between a low-pass projection onto the band limit and clipping at
//! `eps0` so the result is positive and bandlimited.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lc::{CrossingSequence, LevelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityConfig {
    /// Lower clip for the bandwidth estimate, Hz.
    pub eps0: f64,
    pub power_ratio: f64,
    /// Band limit of the bandwidth function, Hz.
    pub upsilon: f64,
    /// Gaussian kernel standard deviation, s.
    pub kernel_width: f64,
    pub projection_iters: usize,
}

impl IntensityConfig {
    pub fn new(upsilon: f64) -> Self {
        Self {
            eps0: 0.002,
            power_ratio: 1.0 / 3f64.sqrt(),
            upsilon,
            kernel_width: 0.5 / upsilon,
            projection_iters: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) {
            return Err(Error::Config(format!("eps0 must be positive, got {}", self.eps0)));
        }
        if !(self.power_ratio > 0.0 && self.power_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "power ratio must lie in (0, 1], got {}",
                self.power_ratio
            )));
        }
        if !(self.kernel_width > 0.0) || !(self.upsilon > 0.0) {
            return Err(Error::Config("kernel width and upsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Kernel estimate of the crossing rate on `grid`, with the kernel reflected at
/// both ends of the observation interval so every event keeps unit mass inside it.
pub fn crossing_intensity(crossings: &CrossingSequence, cfg: &IntensityConfig, grid: &[f64]) -> Vec<f64> {
    let sigma = cfg.kernel_width;
    let start = crossings.start();
    let period = 2.0 * crossings.horizon();
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let reach = 10.0 * sigma;
    let wraps = (reach / period).ceil() as i64 + 1;
    let mut out = vec![0.0; grid.len()];
    for &tk in crossings.times() {
        let local = tk - start;
        for j in -wraps..=wraps {
            let base = start + j as f64 * period;
            for image in [base + local, base - local] {
                for (o, &t) in out.iter_mut().zip(grid) {
                    let d = t - image;
                    if d.abs() <= reach {
                        *o += norm * (-0.5 * d * d / (sigma * sigma)).exp();
                    }
                }
            }
        }
    }
    out
}

/// Summed per-level Rice factor `sum_i exp(-L_i^2 / 2)` for unit variance.
pub fn level_factor(levels: &LevelGrid) -> f64 {
    levels.levels().iter().map(|l| (-0.5 * l * l).exp()).sum()
}

/// Pointwise inversion of the warped Rice relation, clipped below at `eps0`.
pub fn intensity_to_bandwidth(mu: &[f64], levels: &LevelGrid, cfg: &IntensityConfig) -> Vec<f64> {
    let denom = 2.0 * cfg.power_ratio * level_factor(levels);
    mu.iter().map(|m| (m / denom).max(cfg.eps0)).collect()
}

/// Alternating projections: zero all spectral content above `upsilon`
/// (whole-sample symmetric extension, so the grid ends are not treated as a
/// jump), then clip below at `eps0`; stops after `projection_iters` rounds or
/// once successive iterates agree to 1e-6 in max norm.
pub fn project_bandlimited_positive(b: &[f64], cfg: &IntensityConfig, sample_rate: f64) -> Vec<f64> {
    let m = b.len();
    if m < 2 {
        return b.iter().map(|v| v.max(cfg.eps0)).collect();
    }
    let len = 2 * m - 2;
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let keep = |k: usize| {
        let bin = k.min(len - k) as f64;
        bin * sample_rate / len as f64 <= cfg.upsilon + 1e-12
    };

    let mut current = b.to_vec();
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for _ in 0..cfg.projection_iters.max(1) {
        for i in 0..m {
            buf[i] = Complex::new(current[i], 0.0);
        }
        for i in 1..m - 1 {
            buf[len - i] = Complex::new(current[i], 0.0);
        }
        forward.process(&mut buf);
        for (k, v) in buf.iter_mut().enumerate() {
            if !keep(k) {
                *v = Complex::new(0.0, 0.0);
            }
        }
        inverse.process(&mut buf);
        let scale = 1.0 / len as f64;
        let next: Vec<f64> = buf[..m].iter().map(|v| (v.re * scale).max(cfg.eps0)).collect();
        let change = next
            .iter()
            .zip(&current)
            .fold(0.0f64, |acc, (a, c)| acc.max((a - c).abs()));
        current = next;
        if change < 1e-6 {
            break;
        }
    }
    current
}

/// Kernel intensity, pointwise inversion, then projection; `grid` must be
/// uniform. Returns bandwidth samples on `grid`.
pub fn estimate_bandwidth_intensity(
    crossings: &CrossingSequence,
    cfg: &IntensityConfig,
    grid: &[f64],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if grid.len() < 2 {
        return Err(Error::Config("estimation grid needs at least two points".into()));
    }
    let step = grid[1] - grid[0];
    let uniform = grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1e-300));
    if !(step > 0.0) || !uniform {
        return Err(Error::Config("estimation grid must be uniform and increasing".into()));
    }
    let mu = crossing_intensity(crossings, cfg, grid);
    let raw = intensity_to_bandwidth(&mu, crossings.grid(), cfg);
    Ok(project_bandlimited_positive(&raw, cfg, 1.0 / step))
}
