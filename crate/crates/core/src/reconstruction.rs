//! Minimum-energy reconstruction from nonuniform samples.
//!
//! The sinc Gram matrix is badly conditioned, so the Tikhonov problem
//! `min ||G c - x||^2 + eps ||c||^2` is solved by Householder QR of the stacked
//! matrix `[G; sqrt(eps) I]` rather than through the normal equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lc::CrossingSequence;
use crate::signal::{sinc, WarpFunction};

/// Regularization used with estimated warps.
pub const DEFAULT_EPS: f64 = 0.05;

/// What the columns of a Gram matrix stand for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnIndex {
    /// Sinc kernels centered at these times.
    Times(Vec<f64>),
    /// Warped-domain integers `offset + 1 ..= offset + count`.
    WarpedIntegers { offset: f64, count: usize },
}

/// Dense row-major sinc matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    row_times: Vec<f64>,
    col_index: ColumnIndex,
}

impl GramMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row_times(&self) -> &[f64] {
        &self.row_times
    }

    pub fn col_index(&self) -> &ColumnIndex {
        &self.col_index
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }
}

/// `G[n][m] = sinc(2 B (t_n - t_m))`.
pub fn build_gram(sample_times: &[f64], recon_times: &[f64], bandwidth: f64) -> Result<GramMatrix> {
    if !(bandwidth > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let cols = recon_times.len();
    let mut entries = Vec::with_capacity(sample_times.len() * cols);
    for &tn in sample_times {
        entries.extend(recon_times.iter().map(|&tm| sinc(2.0 * bandwidth * (tn - tm))));
    }
    Ok(GramMatrix {
        rows: sample_times.len(),
        cols,
        entries,
        row_times: sample_times.to_vec(),
        col_index: ColumnIndex::Times(recon_times.to_vec()),
    })
}

/// Time-warped sinc matrix `G[k][n] = sinc(warp(t_k) - offset - n)`, `n = 1..=n_cols`.
pub fn build_warped_gram(crossings: &CrossingSequence, warp: &WarpFunction, n_cols: usize) -> Result<GramMatrix> {
    warped_gram(crossings.times(), warp, n_cols)
}

/// Warped sinc matrix for arbitrary sample times.
pub fn warped_gram(times: &[f64], warp: &WarpFunction, n_cols: usize) -> Result<GramMatrix> {
    let mut entries = Vec::with_capacity(times.len() * n_cols);
    for &t in times {
        let tau = warp.eval(t)? - warp.offset();
        entries.extend((1..=n_cols).map(|n| sinc(tau - n as f64)));
    }
    Ok(GramMatrix {
        rows: times.len(),
        cols: n_cols,
        entries,
        row_times: times.to_vec(),
        col_index: ColumnIndex::WarpedIntegers {
            offset: warp.offset(),
            count: n_cols,
        },
    })
}

/// Minimizer of `||G c - x||^2 + eps ||c||^2`.
pub fn solve_regularized(g: &GramMatrix, observations: &[f64], eps: f64) -> Result<Vec<f64>> {
    solve_least_squares(&g.entries, g.rows, g.cols, observations, eps)
}

/// Tikhonov least squares on a row-major `rows x cols` matrix by Householder QR
/// of `[A; sqrt(eps) I]`.
pub fn solve_least_squares(
    a: &[f64],
    rows: usize,
    cols: usize,
    b: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if a.len() != rows * cols {
        return Err(Error::Config(format!(
            "matrix holds {} entries, expected {rows} x {cols}",
            a.len()
        )));
    }
    if b.len() != rows {
        return Err(Error::Config(format!("{} observations for {rows} rows", b.len())));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!("regularization must be >= 0, got {eps}")));
    }
    if cols == 0 {
        return Ok(Vec::new());
    }
    let total = if eps > 0.0 { rows + cols } else { rows };
    if total < cols {
        return Err(Error::Singular(format!(
            "{rows} observations for {cols} unknowns without regularization"
        )));
    }

    // column-major working copy of the stacked system
    let mut m = vec![0.0; total * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[c * total + r] = a[r * cols + c];
        }
    }
    let root = eps.sqrt();
    if eps > 0.0 {
        for c in 0..cols {
            m[c * total + rows + c] = root;
        }
    }
    let mut rhs = vec![0.0; total];
    rhs[..rows].copy_from_slice(b);

    let mut diag = vec![0.0; cols];
    for k in 0..cols {
        let (done, rest) = m.split_at_mut((k + 1) * total);
        let col = &mut done[k * total..];
        let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        col[k] -= alpha;
        let vnorm2 = col[k..].iter().map(|v| v * v).sum::<f64>();
        // reflect the trailing columns
        for j in 0..cols - k - 1 {
            let other = &mut rest[j * total..(j + 1) * total];
            let dot: f64 = col[k..].iter().zip(&other[k..]).map(|(v, o)| v * o).sum();
            let scale = 2.0 * dot / vnorm2;
            for (o, v) in other[k..].iter_mut().zip(&col[k..]) {
                *o -= scale * v;
            }
        }
        let dot: f64 = col[k..].iter().zip(&rhs[k..]).map(|(v, o)| v * o).sum();
        let scale = 2.0 * dot / vnorm2;
        for (o, v) in rhs[k..].iter_mut().zip(&col[k..]) {
            *o -= scale * v;
        }
        diag[k] = alpha;
    }

    let rmax = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let tol = rmax * f64::EPSILON * (total.max(cols) as f64);
    if let Some(k) = diag.iter().position(|d| d.abs() <= tol) {
        return Err(Error::Singular(format!(
            "rank deficient at column {k} (|R_kk| = {:e}, eps = {eps})",
            diag[k].abs()
        )));
    }

    let mut c = vec![0.0; cols];
    for k in (0..cols).rev() {
        let mut acc = rhs[k];
        for j in k + 1..cols {
            acc -= m[j * total + k] * c[j];
        }
        c[k] = acc / diag[k];
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMethod {
    MinimumEnergy,
    WarpedMinimumEnergy,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub coefficients: Vec<f64>,
    pub regularization: f64,
    pub method: ReconstructionMethod,
}

impl ReconstructionResult {
    /// Evaluates a warped reconstruction at `t` under the warp it was fitted with.
    pub fn eval_warped(&self, warp: &WarpFunction, t: f64) -> Result<f64> {
        crate::signal::warped_interpolate(&self.coefficients, warp, t)
    }
}

/// Warps the crossings into the `tau`-domain and fits the `N = floor(span)`
/// unit-spaced samples by regularized least squares.
pub fn reconstruct_warped(crossings: &CrossingSequence, warp: &WarpFunction, eps: f64) -> Result<ReconstructionResult> {
    if crossings.is_empty() {
        return Err(Error::EmptySequence);
    }
    let g = build_warped_gram(crossings, warp, warp.sample_count())?;
    let coefficients = solve_regularized(&g, crossings.values(), eps)?;
    Ok(ReconstructionResult {
        coefficients,
        regularization: eps,
        method: ReconstructionMethod::WarpedMinimumEnergy,
    })
}

/// Warped minimum-energy fit of arbitrary samples `(times, values)`.
pub fn reconstruct_warped_samples(
    times: &[f64],
    values: &[f64],
    warp: &WarpFunction,
    eps: f64,
) -> Result<ReconstructionResult> {
    if times.is_empty() {
        return Err(Error::EmptySequence);
    }
    if times.len() != values.len() {
        return Err(Error::Config("sample times and values differ in length".into()));
    }
    let g = warped_gram(times, warp, warp.sample_count())?;
    let coefficients = solve_regularized(&g, values, eps)?;
    Ok(ReconstructionResult {
        coefficients,
        regularization: eps,
        method: ReconstructionMethod::WarpedMinimumEnergy,
    })
}

/// Piecewise-linear interpolation between consecutive crossings, holding the
/// first/last value outside the crossing span.
pub fn interp_linear(crossings: &CrossingSequence, t: f64) -> Result<f64> {
    let times = crossings.times();
    let values = crossings.values();
    if times.is_empty() {
        return Err(Error::EmptySequence);
    }
    let k = times.len();
    if t <= times[0] {
        return Ok(values[0]);
    }
    if t >= times[k - 1] {
        return Ok(values[k - 1]);
    }
    // first index with times[i] > t
    let i = times.partition_point(|&x| x <= t);
    let (t0, t1) = (times[i - 1], times[i]);
    let (x0, x1) = (values[i - 1], values[i]);
    if t1 == t0 {
        return Ok(x0);
    }
    Ok(x0 + (x1 - x0) / (t1 - t0) * (t - t0))
}
