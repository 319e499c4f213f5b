use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{load_manifest, read_records, DatasetRecord, ManifestEntry};
use super::report::{KBarRow, MetricReport, MetricRow};
use super::{to_db, ExperimentConfig, NmseAccumulator, Split};
use crate::error::{Error, Result};
use crate::intensity::{estimate_bandwidth_intensity, IntensityConfig};
use crate::nn::{estimate_bandwidth_nn, Normalization, Seq2SeqModel};
use crate::reconstruction::{interp_linear, reconstruct_warped};
use crate::signal::{BandwidthFunction, WarpFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    Nn,
    Intensity,
    /// Piecewise-linear interpolation, no bandwidth knowledge.
    Linear,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Nn => "nn",
            Method::Intensity => "intensity",
            Method::Linear => "linear",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(Method::Oracle),
            "nn" => Ok(Method::Nn),
            "intensity" => Ok(Method::Intensity),
            "linear" | "none" => Ok(Method::Linear),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// A trained network with the dataset it was trained for.
#[derive(Debug, Clone)]
pub struct NnEstimator {
    pub model: Seq2SeqModel,
    pub norm: Normalization,
    pub upsilon: Option<f64>,
    pub n_levels: Option<usize>,
}

impl NnEstimator {
    fn fits(&self, entry: &ManifestEntry) -> bool {
        self.model.dims.m_b == entry.config.synthesis(entry.upsilon).coefficient_count()
            && self.norm == entry.config.normalization()
            && self.upsilon.is_none_or(|u| u == entry.upsilon)
    }
}

/// Error accumulators for one realization and one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOutcome {
    /// Absent for the linear method, which has no bandwidth estimate.
    pub b: Option<NmseAccumulator>,
    pub x: NmseAccumulator,
}

/// Estimates the bandwidth with `method`, reconstructs, and scores both
/// against the ground truth on `grid`.
pub fn evaluate_record(
    rec: &DatasetRecord,
    method: Method,
    cfg: &ExperimentConfig,
    nn: Option<&NnEstimator>,
    grid: &[f64],
) -> Result<RecordOutcome> {
    let truth = rec.realization()?;
    let crossings = rec.crossings()?;
    let x_true: Vec<f64> = grid.iter().map(|&t| truth.eval(t)).collect::<Result<_>>()?;

    let warp = match method {
        Method::Linear => {
            let x_hat: Vec<f64> = grid.iter().map(|&t| interp_linear(&crossings, t)).collect::<Result<_>>()?;
            let mut x = NmseAccumulator::default();
            x.add(&x_true, &x_hat);
            return Ok(RecordOutcome { b: None, x });
        }
        Method::Oracle => truth.warp.clone(),
        Method::Nn => {
            let est = nn.ok_or_else(|| Error::Config("nn method needs a trained model".into()))?;
            let coeffs = estimate_bandwidth_nn(&est.model, &est.norm, &crossings)?;
            let bw = BandwidthFunction::new(coeffs, rec.upsilon, rec.horizon)?;
            WarpFunction::clipped(bw, cfg.eps0)?
        }
        Method::Intensity => {
            let icfg = IntensityConfig { eps0: cfg.eps0, ..IntensityConfig::new(rec.upsilon) };
            let samples = estimate_bandwidth_intensity(&crossings, &icfg, grid)?;
            let rate = (grid.len() - 1) as f64 / rec.horizon;
            WarpFunction::from_samples(samples, rate, rec.horizon)?
        }
    };

    let b_true: Vec<f64> = grid.iter().map(|&t| truth.bandwidth.eval(t)).collect();
    let b_hat: Vec<f64> = grid.iter().map(|&t| warp.bandwidth_at(t)).collect();
    let mut b = NmseAccumulator::default();
    b.add(&b_true, &b_hat);

    let fit = reconstruct_warped(&crossings, &warp, cfg.eps)?;
    let x_hat: Vec<f64> = grid.iter().map(|&t| fit.eval_warped(&warp, t)).collect::<Result<_>>()?;
    if x_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("record {}: non-finite reconstruction", rec.id)));
    }
    let mut x = NmseAccumulator::default();
    x.add(&x_true, &x_hat);
    Ok(RecordOutcome { b: Some(b), x })
}

/// Mean crossing count grouped by the minimal sample count `N`.
pub fn k_bar_by_n(upsilon: f64, n_levels: usize, records: &[DatasetRecord]) -> Vec<KBarRow> {
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for r in records {
        let g = groups.entry(r.n).or_insert((0, 0.0));
        g.0 += 1;
        g.1 += r.k as f64;
    }
    groups
        .into_iter()
        .map(|(n, (count, sum))| KBarRow { upsilon, n_levels, n, count, k_mean: sum / count as f64 })
        .collect()
}

fn wanted(entry: &ManifestEntry, filter: Option<&ExperimentConfig>) -> bool {
    match filter {
        None => true,
        Some(f) => f.upsilon_list.contains(&entry.upsilon) && f.levels_list.contains(&entry.n_levels),
    }
}

/// Scores every method on the test split of every dataset in `data_dir`
/// (restricted to the lists in `filter` when given). Per-realization failures
/// are logged and counted.
pub fn run_reconstruction_sweep(
    data_dir: &Path,
    methods: &[Method],
    nn: &[NnEstimator],
    filter: Option<&ExperimentConfig>,
) -> Result<MetricReport> {
    let manifest = load_manifest(data_dir)?;
    let mut report = MetricReport::default();
    for entry in manifest.entries.iter().filter(|e| wanted(e, filter)) {
        let records = read_records(&data_dir.join(&entry.file))?;
        report.k_bar.extend(k_bar_by_n(entry.upsilon, entry.n_levels, &records));
        if !report.config_hashes.contains(&entry.config_hash) {
            report.config_hashes.push(entry.config_hash.clone());
        }
        let test: Vec<&DatasetRecord> = records.iter().filter(|r| r.split == Split::Test && !r.overflow).collect();
        let cfg = &entry.config;
        let grid = cfg.metric_grid();
        for &method in methods {
            let est = if method == Method::Nn {
                let exact = nn.iter().find(|e| e.fits(entry) && e.n_levels == Some(entry.n_levels));
                match exact.or_else(|| nn.iter().find(|e| e.fits(entry))) {
                    Some(e) => Some(e),
                    None => {
                        warn!("no checkpoint fits {}; skipping nn", entry.file);
                        continue;
                    }
                }
            } else {
                None
            };
            let outcomes: Vec<Result<RecordOutcome>> = test
                .par_iter()
                .map(|r| evaluate_record(r, method, cfg, est, &grid))
                .collect();
            let mut b = NmseAccumulator::default();
            let mut x = NmseAccumulator::default();
            let mut failures = 0usize;
            let mut has_b = false;
            for (r, out) in test.iter().zip(outcomes) {
                match out {
                    Ok(o) => {
                        x.merge(&o.x);
                        if let Some(ob) = o.b {
                            has_b = true;
                            b.merge(&ob);
                        }
                    }
                    Err(e) => {
                        warn!("{} id {} {method}: {e}", entry.file, r.id);
                        failures += 1;
                    }
                }
            }
            let nmse_b = if has_b { b.value() } else { f64::NAN };
            let row = MetricRow {
                upsilon: entry.upsilon,
                n_levels: entry.n_levels,
                method: method.label().to_string(),
                realizations: test.len() - failures,
                failures,
                overflow: entry.overflow,
                excluded_samples: x.excluded,
                total_samples: x.excluded + x.included,
                nmse_b,
                nmse_b_db: to_db(nmse_b),
                nmse_x: x.value(),
                nmse_x_db: to_db(x.value()),
            };
            info!(
                "u={} nl={} {method}: NMSE_B {:.2} dB, NMSE_x {:.2} dB, {} failures",
                row.upsilon, row.n_levels, row.nmse_b_db, row.nmse_x_db, failures
            );
            report.rows.push(row);
        }
    }
    Ok(report)
}
