//! Multi-level level-crossing sampler and Rice-formula expectations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::BandwidthFunction;
use crate::synthesis::{golden_argmax, Realization};

/// Crossing refinement target, `|x(t_k) - L|`.
pub const CROSSING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    levels: Vec<f64>,
}

impl LevelGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("level grid must not be empty".into()));
        }
        if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("levels must be finite and strictly increasing".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Where evenly spaced levels sit relative to the amplitude bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelPlacement {
    /// `n` levels strictly inside `(-bound, bound)`.
    Interior,
    /// `n` levels from `-bound` to `bound` inclusive; a single level sits at 0.
    #[default]
    Inclusive,
}

impl LevelGrid {
    pub fn evenly_spaced(n_levels: usize, bound: f64, placement: LevelPlacement) -> Result<Self> {
        match placement {
            LevelPlacement::Interior => make_level_grid(n_levels, bound),
            LevelPlacement::Inclusive => {
                if n_levels == 0 || !(bound > 0.0) {
                    return Err(Error::Config(format!(
                        "need n_levels >= 1 and bound > 0, got {n_levels} and {bound}"
                    )));
                }
                if n_levels == 1 {
                    return Self::new(vec![0.0]);
                }
                let step = 2.0 * bound / (n_levels - 1) as f64;
                Self::new((0..n_levels).map(|i| snap(-bound + step * i as f64, bound)).collect())
            }
        }
    }
}

fn snap(level: f64, bound: f64) -> f64 {
    if level.abs() < 1e-12 * bound {
        0.0
    } else {
        level
    }
}

/// `n_levels` levels evenly spaced strictly inside `(-bound, bound)`:
/// `L_i = -bound + 2 bound i / (n_levels + 1)`, `i = 1..=n_levels`.
pub fn make_level_grid(n_levels: usize, bound: f64) -> Result<LevelGrid> {
    if n_levels == 0 || !(bound > 0.0) {
        return Err(Error::Config(format!(
            "need n_levels >= 1 and bound > 0, got {n_levels} and {bound}"
        )));
    }
    let step = 2.0 * bound / (n_levels + 1) as f64;
    let levels = (1..=n_levels).map(|i| snap(-bound + step * i as f64, bound)).collect();
    LevelGrid::new(levels)
}

/// Time-ordered level-crossing events `{t_k, x(t_k)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSequence {
    times: Vec<f64>,
    values: Vec<f64>,
    level_index: Vec<usize>,
    grid: LevelGrid,
    horizon: f64,
    #[serde(default)]
    start: f64,
}

impl CrossingSequence {
    /// Builds a sequence on `[0, horizon]` from crossing times and level indices.
    pub fn new(times: Vec<f64>, level_index: Vec<usize>, grid: LevelGrid, horizon: f64) -> Result<Self> {
        Self::with_start(times, level_index, grid, 0.0, horizon)
    }

    /// Same as [`CrossingSequence::new`] on `[start, start + horizon]`.
    pub fn with_start(
        times: Vec<f64>,
        level_index: Vec<usize>,
        grid: LevelGrid,
        start: f64,
        horizon: f64,
    ) -> Result<Self> {
        if times.len() != level_index.len() {
            return Err(Error::Data(format!(
                "{} crossing times but {} level indices",
                times.len(),
                level_index.len()
            )));
        }
        if let Some(&i) = level_index.iter().find(|&&i| i >= grid.len()) {
            return Err(Error::Data(format!("level index {i} outside grid of {}", grid.len())));
        }
        if times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Data("crossing times must be ordered".into()));
        }
        if times.iter().any(|t| !(*t > start && *t < start + horizon)) {
            return Err(Error::Data(format!(
                "crossing times must lie inside ({start}, {})",
                start + horizon
            )));
        }
        let values = level_index.iter().map(|&i| grid.levels()[i]).collect();
        Ok(Self {
            times,
            values,
            level_index,
            grid,
            horizon,
            start,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn level_index(&self) -> &[usize] {
        &self.level_index
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Events of a single level.
    pub fn count_level(&self, level: usize) -> usize {
        self.level_index.iter().filter(|&&i| i == level).count()
    }

    /// Copy with every time shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t + delta).collect(),
            start: self.start + delta,
            ..self.clone()
        }
    }
}

/// Crossings of a realization through every level of `grid`.
pub fn find_crossings(r: &Realization, grid: &LevelGrid) -> CrossingSequence {
    let horizon = r.horizon();
    let rate = 16.0 * r.max_bandwidth();
    let points = ((rate * horizon).ceil() as usize).max(64) + 1;
    let found = scan_crossings(|t| r.eval(t).expect("scan inside horizon"), 0.0, horizon, points, grid);
    let (times, idx): (Vec<f64>, Vec<usize>) = found.into_iter().unzip();
    CrossingSequence::new(times, idx, grid.clone(), horizon).expect("scan yields ordered interior crossings")
}

/// Crossings of an arbitrary continuous `f` on `[start, end]`.
///
/// `points` uniform scan samples must resolve every extremum to at most one
/// per two cells; sign changes between samples are refined by safeguarded
/// regula falsi, and discrete local extrema are refined by golden-section
/// search to catch crossing pairs that fall between two samples.
pub fn scan_crossings(
    f: impl Fn(f64) -> f64,
    start: f64,
    end: f64,
    points: usize,
    grid: &LevelGrid,
) -> Vec<(f64, usize)> {
    let points = points.max(3);
    let h = (end - start) / (points - 1) as f64;
    let ts: Vec<f64> = (0..points).map(|i| start + h * i as f64).collect();
    let ys: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    let mut events = Vec::new();

    for (li, &level) in grid.levels().iter().enumerate() {
        for i in 0..points - 1 {
            let (d0, d1) = (ys[i] - level, ys[i + 1] - level);
            if (d0 < 0.0) != (d1 < 0.0) {
                events.push((refine_root(&f, level, ts[i], ts[i + 1], d0, d1), li));
            }
        }
    }

    // Discrete extrema whose continuous peak may hide a crossing pair.
    for i in 1..points - 1 {
        let is_max = ys[i] >= ys[i - 1] && ys[i] >= ys[i + 1];
        let is_min = ys[i] <= ys[i - 1] && ys[i] <= ys[i + 1];
        if !(is_max || is_min) {
            continue;
        }
        let spread = (ys[i] - ys[i - 1]).abs().max((ys[i] - ys[i + 1]).abs());
        let margin = 0.5 * spread + 1e-9;
        let sign = if is_max { 1.0 } else { -1.0 };
        let candidates: Vec<usize> = grid
            .levels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| {
                let beyond = sign * (l - ys[i]);
                beyond > 0.0 && beyond <= margin
                    && sign * (l - ys[i - 1]) > 0.0
                    && sign * (l - ys[i + 1]) > 0.0
            })
            .map(|(li, _)| li)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let (te, fe) = golden_argmax(|t| sign * f(t), ts[i - 1], ts[i + 1]);
        let peak = sign * fe;
        for li in candidates {
            let level = grid.levels()[li];
            let excess = sign * (peak - level);
            if excess.abs() <= 1e-12 {
                events.push((te, li));
            } else if excess > 0.0 {
                let da = ys[i - 1] - level;
                let db = ys[i + 1] - level;
                events.push((refine_root(&f, level, ts[i - 1], te, da, peak - level), li));
                events.push((refine_root(&f, level, te, ts[i + 1], peak - level, db), li));
            }
        }
    }

    events.retain(|(t, _)| *t > start && *t < end);
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times").then(a.1.cmp(&b.1)));
    events.dedup();
    events
}

// Illinois regula falsi with a bisection fallback; returns t with |f(t) - level| <= tolerance.
fn refine_root(
    f: &impl Fn(f64) -> f64,
    level: f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for iter in 0..200 {
        let width = b - a;
        if best.1.abs() <= 1e-13 || width <= 4.0 * f64::EPSILON * (1.0 + a.abs()) {
            break;
        }
        let mut c = if iter % 8 == 7 {
            0.5 * (a + b)
        } else {
            (a * fb - b * fa) / (fb - fa)
        };
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c) - level;
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc == 0.0 {
            break;
        }
        if (fc < 0.0) == (fb < 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    best.0
}

/// Rice formula for a stationary Gaussian process:
/// `E[K_T(L)] = (T / pi) sqrt(lambda2 / lambda0) exp(-L^2 / (2 lambda0))`.
pub fn expected_crossings_stationary(level: f64, horizon: f64, lambda0: f64, lambda2: f64) -> f64 {
    horizon / PI * (lambda2 / lambda0).sqrt() * (-level * level / (2.0 * lambda0)).exp()
}

/// Crossing expectation of a time-warped stationary process:
/// `(1 / pi) exp(-L^2 / (2 lambda0)) int_0^T sqrt(lambda2 / lambda0) 2 pi B(t) dt`.
///
/// `lambda0`, `lambda2` are the moments of the normalized process; with unit
/// variance and flat spectrum `sqrt(lambda2 / lambda0)` is the power ratio `1/sqrt(3)`.
pub fn expected_crossings_warped(
    level: f64,
    bw: &BandwidthFunction,
    lambda0: f64,
    lambda2: f64,
    horizon: f64,
) -> f64 {
    let ratio = (lambda2 / lambda0).sqrt();
    (-level * level / (2.0 * lambda0)).exp() / PI * ratio * 2.0 * PI * bw.integral(horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{realize, SynthesisConfig};

    #[test]
    fn level_grids() {
        assert_eq!(make_level_grid(1, 4.0).unwrap().levels(), &[0.0]);
        assert_eq!(make_level_grid(3, 4.0).unwrap().levels(), &[-2.0, 0.0, 2.0]);
        assert_eq!(
            make_level_grid(7, 4.0).unwrap().levels(),
            &[-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]
        );
        assert!(make_level_grid(0, 4.0).is_err());
        assert!(make_level_grid(3, 0.0).is_err());
        assert!(LevelGrid::new(vec![1.0, 1.0]).is_err());
        let inc = LevelGrid::evenly_spaced(5, 4.0, LevelPlacement::Inclusive).unwrap();
        assert_eq!(inc.levels(), &[-4.0, -2.0, 0.0, 2.0, 4.0]);
        let one = LevelGrid::evenly_spaced(1, 4.0, LevelPlacement::Inclusive).unwrap();
        assert_eq!(one.levels(), &[0.0]);
        let int = LevelGrid::evenly_spaced(3, 4.0, LevelPlacement::Interior).unwrap();
        assert_eq!(int.levels(), &[-2.0, 0.0, 2.0]);
    }

    #[test]
    fn unreachable_level_has_no_events() {
        let grid = LevelGrid::new(vec![0.0, 10.0]).unwrap();
        let ev = scan_crossings(|t| (2.0 * PI * 3.0 * t).sin(), 0.0, 1.0, 200, &grid);
        assert!(ev.iter().all(|(_, li)| *li == 0));
        // interior zeros of sin(6 pi t) at k/6, k = 1..5
        assert_eq!(ev.len(), 5);
    }

    #[test]
    fn crossing_pair_between_scan_points() {
        // narrow bump peaking at 1.05 between two scan samples
        let f = |t: f64| 1.05 - 400.0 * (t - 0.503) * (t - 0.503);
        let grid = LevelGrid::new(vec![1.0]).unwrap();
        let ev = scan_crossings(f, 0.0, 1.0, 101, &grid);
        assert_eq!(ev.len(), 2);
        for (t, _) in ev {
            assert!((f(t) - 1.0).abs() <= CROSSING_TOLERANCE);
        }
    }

    #[test]
    fn crossings_refined_and_ordered() {
        let cfg = SynthesisConfig::new(1.0, 12);
        let r = realize(&cfg, 3).unwrap();
        let grid = make_level_grid(9, 4.0).unwrap();
        let seq = find_crossings(&r, &grid);
        assert!(!seq.is_empty());
        assert!(seq.times().windows(2).all(|w| w[1] > w[0]));
        for k in 0..seq.len() {
            let x = r.eval(seq.times()[k]).unwrap();
            assert!((x - seq.values()[k]).abs() <= CROSSING_TOLERANCE);
            assert_eq!(seq.values()[k], grid.levels()[seq.level_index()[k]]);
        }
    }

    #[test]
    fn nested_grids_do_not_lose_events() {
        let cfg = SynthesisConfig::new(1.0, 2);
        let r = realize(&cfg, 0).unwrap();
        let coarse = make_level_grid(3, 4.0).unwrap(); // -2, 0, 2
        let fine = make_level_grid(7, 4.0).unwrap(); // -3..3
        assert!(find_crossings(&r, &fine).len() >= find_crossings(&r, &coarse).len());
    }

    #[test]
    fn rice_stationary() {
        let lambda2 = (2.0 * PI * 10.0).powi(2) / 3.0;
        let v = expected_crossings_stationary(0.0, 1.0, 1.0, lambda2);
        assert!((v - 20.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((v - 11.5470).abs() < 1e-4);
        assert!(expected_crossings_stationary(40.0, 1.0, 1.0, lambda2) < 1e-300);
        assert_eq!(
            expected_crossings_stationary(1.3, 1.0, 1.0, lambda2),
            expected_crossings_stationary(-1.3, 1.0, 1.0, lambda2)
        );
    }

    #[test]
    fn rice_warped_consistency() {
        let b0 = 7.0;
        let bw = BandwidthFunction::constant(b0, 1.0).unwrap();
        let (l0, l2) = (1.0, 1.0 / 3.0);
        let warped = expected_crossings_warped(0.5, &bw, l0, l2, 1.0);
        // constant bandwidth: stationary process with sqrt(lambda2/lambda0) = 2 pi B0 r
        let stationary =
            expected_crossings_stationary(0.5, 1.0, 1.0, (2.0 * PI * b0).powi(2) * l2);
        assert!((warped - stationary).abs() < 1e-9);
        let doubled = expected_crossings_warped(0.5, &bw.scaled(2.0), l0, l2, 1.0);
        assert!((doubled - 2.0 * warped).abs() < 1e-9);
    }
}
