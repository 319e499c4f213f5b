//! Random test signals with known instantaneous bandwidth.
//!
//! A realization draws bandwidth coefficients uniformly, integrates them into a
//! warp, draws standard-normal samples at the integer crossings of the warp,
//! and defines the signal by time-warped sinc interpolation. Both draws are
//! rejected wholesale until the bandwidth is positive and the signal stays
//! within the amplitude bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    coefficient_count, warped_interpolate, warped_interpolate_deriv, BandwidthFunction,
    WarpFunction,
};

/// Grid used to verify bandwidth positivity.
pub const POSITIVITY_GRID: usize = 2048;
/// Upper bound on wholesale redraws before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub upsilon: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_bw_min")]
    pub bw_min: f64,
    #[serde(default = "default_bw_max")]
    pub bw_max: f64,
    #[serde(default = "default_amp_bound")]
    pub amp_bound: f64,
    pub seed: u64,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_bw_min() -> f64 {
    5.0
}
fn default_bw_max() -> f64 {
    100.0
}
fn default_amp_bound() -> f64 {
    4.0
}

impl SynthesisConfig {
    pub fn new(upsilon: f64, seed: u64) -> Self {
        Self {
            upsilon,
            horizon: default_horizon(),
            bw_min: default_bw_min(),
            bw_max: default_bw_max(),
            amp_bound: default_amp_bound(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon > 0.0 && self.upsilon.is_finite()) {
            return Err(Error::Config(format!("upsilon must be positive, got {}", self.upsilon)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0 < self.bw_min && self.bw_min < self.bw_max && self.bw_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < bw_min < bw_max, got [{}, {}]",
                self.bw_min, self.bw_max
            )));
        }
        if !(self.amp_bound > 0.0) {
            return Err(Error::Config(format!("amp_bound must be positive, got {}", self.amp_bound)));
        }
        Ok(())
    }

    /// Number of bandwidth coefficients `M_B`.
    pub fn coefficient_count(&self) -> usize {
        coefficient_count(self.upsilon, self.horizon)
    }
}

/// Independent random stream for realization `id` under `master_seed`.
pub fn realization_rng(master_seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(id);
    rng
}

/// One synthetic test signal together with its ground truth.
#[derive(Debug, Clone)]
pub struct Realization {
    pub bandwidth: BandwidthFunction,
    pub warp: WarpFunction,
    /// Samples `x_n` at the integer crossings of the warp.
    pub tau_samples: Vec<f64>,
    /// `t_n = warp^{-1}(n)`.
    pub signal_times: Vec<f64>,
    pub id: u64,
    pub seed: u64,
}

impl Realization {
    pub fn horizon(&self) -> f64 {
        self.bandwidth.horizon()
    }

    /// Number of warped samples `N`.
    pub fn sample_count(&self) -> usize {
        self.tau_samples.len()
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        eval_realization(self, t)
    }

    pub fn eval_deriv(&self, t: f64) -> Result<f64> {
        warped_interpolate_deriv(&self.tau_samples, &self.warp, t)
    }

    pub fn max_bandwidth(&self) -> f64 {
        self.bandwidth.max_on_grid(POSITIVITY_GRID)
    }

    /// Signal values on `points` uniform samples over `[0, horizon]`.
    pub fn sample_uniform(&self, points: usize) -> Vec<f64> {
        self.warp
            .uniform_grid(points)
            .into_iter()
            .map(|t| self.eval(t).expect("grid inside horizon"))
            .collect()
    }
}

/// Draws `M_B` coefficients uniformly in `[bw_min, bw_max]`, redrawing the whole
/// vector until `B(t) > 0` on the positivity grid. Returns the bandwidth and the
/// number of rejected draws.
pub fn draw_bandwidth<R: Rng + ?Sized>(
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<(BandwidthFunction, usize)> {
    cfg.validate()?;
    let m = cfg.coefficient_count();
    for rejections in 0..MAX_REJECTIONS {
        let coeffs: Vec<f64> = (0..m).map(|_| rng.random_range(cfg.bw_min..=cfg.bw_max)).collect();
        let bw = BandwidthFunction::new(coeffs, cfg.upsilon, cfg.horizon)?;
        if bw.is_positive_on_grid(POSITIVITY_GRID) {
            return Ok((bw, rejections));
        }
    }
    Err(Error::RejectionLimit {
        attempts: MAX_REJECTIONS,
        context: format!(
            "positive bandwidth, upsilon = {}, range [{}, {}]",
            cfg.upsilon, cfg.bw_min, cfg.bw_max
        ),
    })
}

/// Draws standard-normal warped samples until the signal stays within
/// `amp_bound` on `[0, horizon]`.
pub fn draw_signal<R: Rng + ?Sized>(
    bw: BandwidthFunction,
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<Realization> {
    cfg.validate()?;
    let warp = WarpFunction::new(bw.clone())?;
    let signal_times = warp.sample_times();
    let n = signal_times.len();
    let max_b = bw.max_on_grid(POSITIVITY_GRID);
    let rate = (8.0 * max_b).max(64.0 / cfg.horizon);
    let points = (rate * cfg.horizon).ceil() as usize + 1;
    let grid = warp.uniform_grid(points);
    let taus: Vec<f64> = grid
        .iter()
        .map(|t| warp.eval(*t).expect("grid inside horizon") - warp.offset())
        .collect();

    for _ in 0..MAX_REJECTIONS {
        let tau_samples: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if within_bound(&tau_samples, &warp, &grid, &taus, cfg.amp_bound) {
            return Ok(Realization {
                bandwidth: bw,
                warp,
                tau_samples,
                signal_times,
                id: 0,
                seed: cfg.seed,
            });
        }
    }
    Err(Error::RejectionLimit {
        attempts: MAX_REJECTIONS,
        context: format!("amplitude bound {} with N = {n}", cfg.amp_bound),
    })
}

fn within_bound(
    samples: &[f64],
    warp: &WarpFunction,
    grid: &[f64],
    taus: &[f64],
    bound: f64,
) -> bool {
    let values: Vec<f64> = taus
        .iter()
        .map(|tau| crate::signal::sinc_series(samples, 1, *tau).abs())
        .collect();
    if values.iter().any(|v| *v > bound) {
        return false;
    }
    // Peaks between grid points: refine every discrete local maximum near the bound.
    let last = values.len() - 1;
    for i in 0..=last {
        let left = if i == 0 { 0.0 } else { values[i - 1] };
        let right = if i == last { 0.0 } else { values[i + 1] };
        if values[i] < 0.9 * bound || values[i] < left || values[i] < right {
            continue;
        }
        let a = grid[i.saturating_sub(1)];
        let b = grid[(i + 1).min(last)];
        let peak = golden_max(
            |t| {
                warped_interpolate(samples, warp, t)
                    .map(f64::abs)
                    .unwrap_or(0.0)
            },
            a,
            b,
        );
        if peak > bound {
            return false;
        }
    }
    true
}

/// Maximum of a unimodal function on `[a, b]` by golden-section search.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    golden_argmax(f, a, b).1
}

pub(crate) fn golden_argmax(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if b - a <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    let mut best = (c, fc);
    for cand in [(d, fd), (a, fa), (b, fb)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}

/// Full realization `id` under `cfg`, reproducible from `(cfg, id)` alone.
pub fn realize(cfg: &SynthesisConfig, id: u64) -> Result<Realization> {
    let mut rng = realization_rng(cfg.seed, id);
    let (bw, _) = draw_bandwidth(cfg, &mut rng)?;
    let mut r = draw_signal(bw, cfg, &mut rng)?;
    r.id = id;
    Ok(r)
}

/// Signal value `x(t)` by time-warped interpolation of the realization.
pub fn eval_realization(r: &Realization, t: f64) -> Result<f64> {
    warped_interpolate(&r.tau_samples, &r.warp, t)
}
