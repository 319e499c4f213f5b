//! Bandlimited signal representations and time-warping.
//!
//! A time-warping function maps physical time `t` onto a bandwidth-normalized
//! axis `tau = warp(t)` on which the signal is bandlimited to 1/2 and therefore
//! described by its samples at the integers. The warp is the running integral
//! of twice the instantaneous bandwidth, so it is strictly increasing whenever
//! the bandwidth is positive.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sin(pi * u)`, exact zero at integers.
pub fn sin_pi(u: f64) -> f64 {
    let k = u.round();
    let r = u - k;
    let s = (PI * r).sin();
    if k.rem_euclid(2.0) == 0.0 {
        s
    } else {
        -s
    }
}

/// `cos(pi * u)`, exact zero at half-integers.
pub fn cos_pi(u: f64) -> f64 {
    let k = u.round();
    let r = u - k;
    if r.abs() == 0.5 {
        return 0.0;
    }
    let c = (PI * r).cos();
    if k.rem_euclid(2.0) == 0.0 {
        c
    } else {
        -c
    }
}

/// Normalized sinc, `sin(pi u) / (pi u)`.
pub fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        sin_pi(u) / (PI * u)
    }
}

/// Derivative of the normalized sinc with respect to its argument.
pub fn sinc_deriv(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let pu2 = (PI * u) * (PI * u);
        // Taylor: -pi^2 u / 3 + pi^4 u^3 / 30
        PI * (-(PI * u) / 3.0 + (PI * u) * pu2 / 30.0)
    } else {
        (cos_pi(u) * PI * u - sin_pi(u)) / (PI * u * u)
    }
}

/// `sum_j coeffs[j] * sinc(u - (first + j))`.
///
/// All terms share `sin(pi (u - n)) = (-1)^n sin(pi u)`, so the sum costs one
/// sine and one division per term. The term closest to `u` is evaluated
/// directly to keep full relative accuracy next to the integers.
pub fn sinc_series(coeffs: &[f64], first: i64, u: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let nearest = u.round();
    let r = u - nearest;
    let near_j = nearest as i64 - first;
    if r == 0.0 {
        return if near_j >= 0 && (near_j as usize) < coeffs.len() {
            coeffs[near_j as usize]
        } else {
            0.0
        };
    }
    let s = sin_pi(u);
    let mut acc = 0.0;
    let mut sign = if first.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    for (j, &c) in coeffs.iter().enumerate() {
        if j as i64 != near_j {
            acc += sign * c / (u - (first + j as i64) as f64);
        }
        sign = -sign;
    }
    let mut total = s * acc / PI;
    if near_j >= 0 && (near_j as usize) < coeffs.len() {
        total += coeffs[near_j as usize] * sinc(r);
    }
    total
}

/// Derivative of [`sinc_series`] with respect to `u`.
pub fn sinc_series_deriv(coeffs: &[f64], first: i64, u: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let nearest = u.round();
    let near_j = nearest as i64 - first;
    let s = sin_pi(u);
    let c = cos_pi(u);
    let mut acc1 = 0.0;
    let mut acc2 = 0.0;
    let mut sign = if first.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    for (j, &a) in coeffs.iter().enumerate() {
        if j as i64 != near_j {
            let d = u - (first + j as i64) as f64;
            acc1 += sign * a / d;
            acc2 += sign * a / (d * d);
        }
        sign = -sign;
    }
    let mut total = c * acc1 - s * acc2 / PI;
    if near_j >= 0 && (near_j as usize) < coeffs.len() {
        total += coeffs[near_j as usize] * sinc_deriv(u - nearest);
    }
    total
}

/// Uniformly sampled signal `x(t0 + m / rate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSeries {
    values: Vec<f64>,
    rate: f64,
    t0: f64,
}

impl UniformSeries {
    pub fn new(values: Vec<f64>, rate: f64, t0: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Config(format!("sample rate must be positive, got {rate}")));
        }
        if !t0.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("uniform series holds non-finite values".into()));
        }
        Ok(Self { values, rate, t0 })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of sample `m`.
    pub fn time(&self, m: usize) -> f64 {
        self.t0 + m as f64 / self.rate
    }
}

/// Whittaker-Shannon interpolation of a uniform series.
pub fn interpolate_uniform(series: &UniformSeries, t: f64) -> f64 {
    sinc_series(&series.values, 0, series.rate * (t - series.t0))
}

/// Nonuniform samples `{t_n, x(t_n)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonuniformSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl NonuniformSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Config(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sample times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Number of bandwidth coefficients for band limit `upsilon` on `[0, horizon]`:
/// `ceil(2.1 * upsilon * horizon + 1)`.
pub fn coefficient_count(upsilon: f64, horizon: f64) -> usize {
    let x = 2.1 * upsilon * horizon + 1.0;
    // 2.1 is not representable; keep exact integers from rounding upwards.
    (x - 1e-9).ceil() as usize
}

/// Instantaneous bandwidth `B(t) = sum_m B_m sinc(2 upsilon t - m)`, `m = 0..M_B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthFunction {
    coeffs: Vec<f64>,
    upsilon: f64,
    horizon: f64,
}

impl BandwidthFunction {
    /// Builds the function without checking positivity; estimates may dip below
    /// zero and are clipped by the caller.
    pub fn new(coeffs: Vec<f64>, upsilon: f64, horizon: f64) -> Result<Self> {
        if !(upsilon > 0.0 && upsilon.is_finite()) {
            return Err(Error::Config(format!("band limit must be positive, got {upsilon}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("bandwidth coefficients must be finite and nonempty".into()));
        }
        Ok(Self { coeffs, upsilon, horizon })
    }

    /// Constant bandwidth, represented exactly by a single wide sinc term
    /// whose band limit makes `sinc(2 upsilon t)` equal to one over the horizon
    /// up to ~1e-13 relative error.
    pub fn constant(value: f64, horizon: f64) -> Result<Self> {
        // sinc(x) ~ 1 - (pi x)^2 / 6; pick upsilon so the deviation is negligible.
        let upsilon = 1e-8 / horizon;
        Self::new(vec![value], upsilon, horizon)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `B(t)`; defined for all `t` but meaningful on `[0, horizon]`.
    pub fn eval(&self, t: f64) -> f64 {
        sinc_series(&self.coeffs, 0, 2.0 * self.upsilon * t)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            upsilon: self.upsilon,
            horizon: self.horizon,
        }
    }

    /// Values on `points` evenly spaced points covering `[0, horizon]`.
    pub fn sample_grid(&self, points: usize) -> Vec<f64> {
        let denom = (points.max(2) - 1) as f64;
        (0..points)
            .map(|i| self.eval(self.horizon * i as f64 / denom))
            .collect()
    }

    pub fn min_on_grid(&self, points: usize) -> f64 {
        self.sample_grid(points).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_on_grid(&self, points: usize) -> f64 {
        self.sample_grid(points)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_positive_on_grid(&self, points: usize) -> bool {
        self.sample_grid(points).into_iter().all(|b| b > 0.0)
    }

    /// `int_0^t B(u) du` by panel quadrature.
    pub fn integral(&self, t: f64) -> f64 {
        let panels = panel_count(t.abs());
        let h = t / panels as f64;
        (0..panels)
            .map(|j| gauss_legendre(|u| self.eval(u), j as f64 * h, (j + 1) as f64 * h))
            .sum()
    }
}

/// Bandwidth source that a warp integrates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandwidthProfile {
    /// A positive sinc-series bandwidth.
    Series(BandwidthFunction),
    /// A sinc-series estimate clipped below at `floor`.
    Clipped { bandwidth: BandwidthFunction, floor: f64 },
    /// Samples on a uniform grid starting at local time 0, linearly interpolated.
    Sampled { values: Vec<f64>, rate: f64 },
}

impl BandwidthProfile {
    fn eval(&self, u: f64) -> f64 {
        match self {
            BandwidthProfile::Series(b) => b.eval(u),
            BandwidthProfile::Clipped { bandwidth, floor } => bandwidth.eval(u).max(*floor),
            BandwidthProfile::Sampled { values, rate } => {
                let x = (u * rate).max(0.0);
                let i = (x.floor() as usize).min(values.len() - 1);
                if i + 1 >= values.len() {
                    return values[values.len() - 1];
                }
                let frac = x - i as f64;
                values[i] + frac * (values[i + 1] - values[i])
            }
        }
    }
}

const PANELS_PER_SECOND: f64 = 4096.0;

fn panel_count(span: f64) -> usize {
    ((PANELS_PER_SECOND * span).ceil() as usize).max(1)
}

// Five-point Gauss-Legendre on [a, b]; exact for polynomials of degree 9.
fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Time-warping function `warp(t) = offset + 2 int_start^t B(u - start) du`.
///
/// The bandwidth is integrated once on a fixed panel grid; evaluation adds a
/// partial panel, inversion brackets by table lookup then bisects.
#[derive(Debug, Clone)]
pub struct WarpFunction {
    profile: BandwidthProfile,
    offset: f64,
    start: f64,
    horizon: f64,
    step: f64,
    // int_0^{j step} B, local time
    cumulative: Vec<f64>,
}

impl WarpFunction {
    /// Warp of a positive bandwidth function; rejects non-positive ones.
    pub fn new(bandwidth: BandwidthFunction) -> Result<Self> {
        if !bandwidth.is_positive_on_grid(2048) {
            return Err(Error::Config(
                "bandwidth must be positive on [0, horizon] to define a warp".into(),
            ));
        }
        let horizon = bandwidth.horizon();
        Self::build(BandwidthProfile::Series(bandwidth), horizon)
    }

    /// Warp of an estimate, clipped below at `floor > 0` so the warp stays
    /// strictly increasing.
    pub fn clipped(bandwidth: BandwidthFunction, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::Config(format!("clip floor must be positive, got {floor}")));
        }
        let horizon = bandwidth.horizon();
        Self::build(BandwidthProfile::Clipped { bandwidth, floor }, horizon)
    }

    /// Warp of bandwidth samples on a uniform grid `i / rate`, `i = 0..len`,
    /// covering `[0, horizon]`; integrated exactly as a piecewise-linear function.
    pub fn from_samples(values: Vec<f64>, rate: f64, horizon: f64) -> Result<Self> {
        if values.len() < 2 || !(rate > 0.0) {
            return Err(Error::Config("sampled bandwidth needs >= 2 points and positive rate".into()));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("sampled bandwidth must be positive and finite".into()));
        }
        Self::build(BandwidthProfile::Sampled { values, rate }, horizon)
    }

    fn build(profile: BandwidthProfile, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let (step, cumulative) = match &profile {
            BandwidthProfile::Sampled { rate, .. } => {
                let step = 1.0 / rate;
                let panels = (horizon * rate).ceil() as usize;
                let mut cum = Vec::with_capacity(panels + 1);
                cum.push(0.0);
                let mut acc = 0.0;
                for j in 0..panels {
                    let a = profile.eval(j as f64 * step);
                    let b = profile.eval((j + 1) as f64 * step);
                    acc += 0.5 * step * (a + b);
                    cum.push(acc);
                }
                (step, cum)
            }
            _ => {
                let panels = panel_count(horizon);
                let step = horizon / panels as f64;
                let mut cum = Vec::with_capacity(panels + 1);
                cum.push(0.0);
                let mut acc = 0.0;
                for j in 0..panels {
                    acc += gauss_legendre(
                        |u| profile.eval(u),
                        j as f64 * step,
                        (j + 1) as f64 * step,
                    );
                    cum.push(acc);
                }
                (step, cum)
            }
        };
        Ok(Self {
            profile,
            offset: 0.0,
            start: 0.0,
            horizon,
            step,
            cumulative,
        })
    }

    /// Sets `warp(start) = offset`.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Moves the time origin: the warp is then defined on `[start, start + horizon]`.
    pub fn with_start(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn profile(&self) -> &BandwidthProfile {
        &self.profile
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.horizon
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Instantaneous bandwidth at physical time `t`.
    pub fn bandwidth_at(&self, t: f64) -> f64 {
        self.profile.eval(t - self.start)
    }

    fn local(&self, t: f64) -> Result<f64> {
        let u = t - self.start;
        let slack = 1e-12 * self.horizon.max(1.0);
        if !(u >= -slack && u <= self.horizon + slack) {
            return Err(Error::domain("t", t, self.start, self.end()));
        }
        Ok(u.clamp(0.0, self.horizon))
    }

    // int_0^u B, local time u in [0, horizon]
    fn integral_local(&self, u: f64) -> f64 {
        let last = self.cumulative.len() - 1;
        let j = ((u / self.step).floor() as usize).min(last);
        let t_j = j as f64 * self.step;
        let base = self.cumulative[j];
        if u <= t_j {
            return base;
        }
        match &self.profile {
            BandwidthProfile::Sampled { .. } => {
                let a = self.profile.eval(t_j);
                let b = self.profile.eval(t_j + self.step);
                let s = u - t_j;
                base + a * s + (b - a) * s * s / (2.0 * self.step)
            }
            _ => base + gauss_legendre(|x| self.profile.eval(x), t_j, u),
        }
    }

    /// `warp(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let u = self.local(t)?;
        Ok(self.offset + 2.0 * self.integral_local(u))
    }

    /// `warp'(t) = 2 B(t)`, the instantaneous sampling rate.
    pub fn derivative(&self, t: f64) -> f64 {
        2.0 * self.bandwidth_at(t)
    }

    /// Warped time span `warp(end) - warp(start)`.
    pub fn span(&self) -> f64 {
        2.0 * self.integral_local(self.horizon)
    }

    /// Inverse warp: the `t` with `warp(t) = tau`.
    pub fn inverse(&self, tau: f64) -> Result<f64> {
        let target = 0.5 * (tau - self.offset);
        let total = self.cumulative[self.cumulative.len() - 1];
        let total_exact = self.integral_local(self.horizon);
        let slack = 1e-9;
        if !(target >= -slack && target <= total_exact + slack) || !tau.is_finite() {
            return Err(Error::domain("tau", tau, self.offset, self.offset + 2.0 * total_exact));
        }
        let target = target.clamp(0.0, total_exact.max(total));
        // table bracket
        let j = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&target).expect("finite table"))
        {
            Ok(j) => return Ok(self.start + (j as f64 * self.step).min(self.horizon)),
            Err(j) => j.saturating_sub(1),
        };
        let mut lo = j as f64 * self.step;
        let mut hi = ((j + 1) as f64 * self.step).min(self.horizon);
        if target >= total_exact {
            return Ok(self.start + self.horizon);
        }
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if self.integral_local(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut u = 0.5 * (lo + hi);
        let slope = self.profile.eval(u);
        if slope > 0.0 {
            let polished = u - (self.integral_local(u) - target) / slope;
            if polished >= lo - 1e-12 && polished <= hi + 1e-12 {
                u = polished.clamp(0.0, self.horizon);
            }
        }
        Ok(self.start + u)
    }

    /// Number of integer crossings `N = floor(warp(end) - warp(start))`.
    pub fn sample_count(&self) -> usize {
        (self.span() + 1e-9).floor().max(0.0) as usize
    }

    /// `t_n = warp^{-1}(offset + n)` for `n = 1..=N`.
    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.sample_count())
            .map(|n| {
                self.inverse(self.offset + n as f64)
                    .expect("integer crossing inside warp range")
            })
            .collect()
    }

    /// `t`-grid of `points` uniform samples over `[start, end]`.
    pub fn uniform_grid(&self, points: usize) -> Vec<f64> {
        let denom = (points.max(2) - 1) as f64;
        (0..points)
            .map(|i| self.start + self.horizon * i as f64 / denom)
            .collect()
    }
}

/// Time-warped interpolation `sum_n samples[n-1] sinc(warp(t) - offset - n)`.
pub fn warped_interpolate(samples: &[f64], warp: &WarpFunction, t: f64) -> Result<f64> {
    let tau = warp.eval(t)? - warp.offset();
    Ok(sinc_series(samples, 1, tau))
}

/// Time derivative of [`warped_interpolate`].
pub fn warped_interpolate_deriv(samples: &[f64], warp: &WarpFunction, t: f64) -> Result<f64> {
    let tau = warp.eval(t)? - warp.offset();
    Ok(sinc_series_deriv(samples, 1, tau) * warp.derivative(t))
}
