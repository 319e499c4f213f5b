//! Experiment orchestration: datasets, sweeps, metrics and reports.

mod dataset;
mod report;
mod sweep;

pub use dataset::{
    dataset_file_name, generate_dataset, load_examples, load_manifest, read_records, DatasetRecord, Manifest,
    ManifestEntry, SplitIds, MANIFEST_FILE,
};
pub use report::{emit_report, KBarRow, MetricReport, MetricRow, CSV_COLUMNS};
pub use sweep::{k_bar_by_n, run_reconstruction_sweep, Method, NnEstimator, RecordOutcome, evaluate_record};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lc::LevelPlacement;
use crate::nn::{Normalization, TrainConfig};
use crate::synthesis::SynthesisConfig;

/// Reported dB value for an exactly zero error.
pub const DB_FLOOR: f64 = -120.0;
/// Truth samples below this fraction of the per-signal RMS are left out of NMSE.
pub const NEAR_ZERO_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub upsilon_list: Vec<f64>,
    pub levels_list: Vec<usize>,
    pub realizations: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub eps: f64,
    pub seed: u64,
    /// Dense NMSE evaluation rate, Hz.
    pub metric_rate: f64,
    pub horizon: f64,
    pub bw_min: f64,
    pub bw_max: f64,
    pub amp_bound: f64,
    pub level_placement: LevelPlacement,
    /// Padded sequence length.
    pub p: usize,
    /// Bandwidth floor for estimated warps, Hz.
    pub eps0: f64,
    pub training: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            upsilon_list: vec![1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 20.0],
            levels_list: vec![5, 6, 7, 8, 9, 10, 13],
            realizations: 5000,
            split: [0.7, 0.2, 0.1],
            eps: 0.05,
            seed: 0,
            metric_rate: 2000.0,
            horizon: 1.0,
            bw_min: 5.0,
            bw_max: 100.0,
            amp_bound: 4.0,
            level_placement: LevelPlacement::default(),
            p: 512,
            eps0: 0.002,
            training: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be positive".into()));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must be non-negative and sum to 1, got {:?}", self.split)));
        }
        if !(self.eps >= 0.0) || !(self.metric_rate > 0.0) || !(self.eps0 > 0.0) || self.p == 0 {
            return Err(Error::Config("eps, metric_rate, eps0 and p must be positive".into()));
        }
        if self.levels_list.iter().any(|&n| n < 2) {
            return Err(Error::Config("every level count must be at least 2".into()));
        }
        for &u in &self.upsilon_list {
            self.synthesis(u).validate()?;
        }
        self.training.validate()
    }

    pub fn synthesis(&self, upsilon: f64) -> SynthesisConfig {
        SynthesisConfig {
            upsilon,
            horizon: self.horizon,
            bw_min: self.bw_min,
            bw_max: self.bw_max,
            amp_bound: self.amp_bound,
            seed: self.seed,
        }
    }

    pub fn normalization(&self) -> Normalization {
        Normalization { horizon: self.horizon, amp_bound: self.amp_bound, bw_max: self.bw_max }
    }

    /// Uniform NMSE grid over `[0, horizon]`.
    pub fn metric_grid(&self) -> Vec<f64> {
        let points = (self.metric_rate * self.horizon).round() as usize + 1;
        (0..points).map(|i| self.horizon * i as f64 / (points - 1) as f64).collect()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Split membership as a pure function of `(id, seed)`.
pub fn split_of(id: u64, seed: u64, fractions: [f64; 3]) -> Split {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.to_le_bytes());
    let d = h.finalize();
    let word = u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"));
    let u = (word >> 11) as f64 / (1u64 << 53) as f64;
    if u < fractions[0] {
        Split::Train
    } else if u < fractions[0] + fractions[1] {
        Split::Val
    } else {
        Split::Test
    }
}

/// Running sums for the double-mean relative error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NmseAccumulator {
    pub sum: f64,
    pub included: usize,
    pub excluded: usize,
}

impl NmseAccumulator {
    /// Adds one signal; samples with `|truth| < 1e-3 * rms(truth)` are skipped.
    pub fn add(&mut self, truth: &[f64], estimate: &[f64]) {
        assert_eq!(truth.len(), estimate.len(), "nmse shapes differ");
        if truth.is_empty() {
            return;
        }
        let rms = (truth.iter().map(|x| x * x).sum::<f64>() / truth.len() as f64).sqrt();
        let cut = NEAR_ZERO_FRACTION * rms;
        for (x, y) in truth.iter().zip(estimate) {
            if x.abs() < cut || *x == 0.0 {
                self.excluded += 1;
            } else {
                self.sum += (x - y) * (x - y) / (x * x);
                self.included += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum += other.sum;
        self.included += other.included;
        self.excluded += other.excluded;
    }

    pub fn value(&self) -> f64 {
        if self.included == 0 {
            f64::NAN
        } else {
            self.sum / self.included as f64
        }
    }
}

/// Mean over signals and samples of the squared relative error.
pub fn nmse(truth: &[Vec<f64>], estimate: &[Vec<f64>]) -> f64 {
    assert_eq!(truth.len(), estimate.len(), "nmse shapes differ");
    let mut acc = NmseAccumulator::default();
    for (t, e) in truth.iter().zip(estimate) {
        acc.add(t, e);
    }
    acc.value()
}

/// `10 log10(v)`, floored at -120 dB.
pub fn to_db(v: f64) -> f64 {
    if v.is_nan() {
        return f64::NAN;
    }
    if v <= 0.0 {
        return DB_FLOOR;
    }
    (10.0 * v.log10()).max(DB_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nmse_examples() {
        let truth = vec![vec![1.0, -2.0, 0.5]];
        assert_eq!(nmse(&truth, &truth), 0.0);
        assert_eq!(to_db(nmse(&truth, &truth)), DB_FLOOR);
        assert_eq!(nmse(&truth, &[vec![0.0; 3]]), 1.0);
        assert_eq!(to_db(1.0), 0.0);
        assert_eq!(nmse(&[vec![2.0]], &[vec![1.0]]), 0.25);
    }

    #[test]
    fn near_zero_samples_are_excluded() {
        let mut acc = NmseAccumulator::default();
        acc.add(&[1.0, 1e-9, -1.0, 0.0], &[1.0, 5.0, -1.0, 3.0]);
        assert_eq!(acc.excluded, 2);
        assert_eq!(acc.value(), 0.0);
    }

    #[test]
    fn split_fractions_and_stability() {
        let f = [0.7, 0.2, 0.1];
        let mut counts = [0usize; 3];
        for id in 0..20_000 {
            let s = split_of(id, 42, f);
            assert_eq!(s, split_of(id, 42, f));
            counts[s as usize] += 1;
        }
        assert!((counts[0] as f64 / 20_000.0 - 0.7).abs() < 0.02);
        assert!((counts[1] as f64 / 20_000.0 - 0.2).abs() < 0.02);
        assert!((counts[2] as f64 / 20_000.0 - 0.1).abs() < 0.02);
    }

    #[test]
    fn config_validation_and_hash() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.config_hash(), cfg.clone().config_hash());
        let other = ExperimentConfig { seed: 1, ..cfg.clone() };
        assert_ne!(cfg.config_hash(), other.config_hash());
        let bad = ExperimentConfig { split: [0.7, 0.2, 0.2], ..cfg.clone() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { realizations: 0, ..cfg };
        assert!(bad.validate().is_err());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"seed": 3, "upsilon_list": [1]}"#).unwrap();
        assert_eq!(partial.levels_list, vec![5, 6, 7, 8, 9, 10, 13]);
        assert_eq!(cfg_grid_len(), 2001);
    }

    fn cfg_grid_len() -> usize {
        ExperimentConfig::default().metric_grid().len()
    }

    proptest! {
        #[test]
        fn nmse_is_scale_covariant(
            truth in prop::collection::vec(0.1f64..5.0, 1..20),
            noise in prop::collection::vec(-1.0f64..1.0, 20),
            alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            let est: Vec<f64> = truth.iter().zip(&noise).map(|(t, n)| t + n).collect();
            let a = nmse(&[truth.clone()], &[est.clone()]);
            let st: Vec<f64> = truth.iter().map(|t| alpha * t).collect();
            let se: Vec<f64> = est.iter().map(|e| alpha * e).collect();
            let b = nmse(&[st], &[se]);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
