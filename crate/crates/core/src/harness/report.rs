use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_COLUMNS: [&str; 12] = [
    "upsilon",
    "n_levels",
    "method",
    "realizations",
    "failures",
    "overflow",
    "excluded_samples",
    "total_samples",
    "nmse_b",
    "nmse_b_db",
    "nmse_x",
    "nmse_x_db",
];

/// Aggregate errors for one `(upsilon, n_levels, method)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub upsilon: f64,
    pub n_levels: usize,
    pub method: String,
    /// Test realizations that were scored.
    pub realizations: usize,
    pub failures: usize,
    /// Dataset realizations dropped because K exceeded P.
    pub overflow: usize,
    /// Near-zero truth samples left out of NMSE{x}.
    pub excluded_samples: usize,
    pub total_samples: usize,
    #[serde(with = "nan_as_null")]
    pub nmse_b: f64,
    #[serde(with = "nan_as_null")]
    pub nmse_b_db: f64,
    #[serde(with = "nan_as_null")]
    pub nmse_x: f64,
    #[serde(with = "nan_as_null")]
    pub nmse_x_db: f64,
}

// JSON has no NaN; store it as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl MetricRow {
    pub fn failure_rate(&self) -> f64 {
        let total = self.realizations + self.failures;
        if total == 0 {
            0.0
        } else {
            self.failures as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBarRow {
    pub upsilon: f64,
    pub n_levels: usize,
    pub n: usize,
    pub count: usize,
    pub k_mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config_hashes: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub k_bar: Vec<KBarRow>,
}

impl MetricReport {
    pub fn row(&self, upsilon: f64, n_levels: usize, method: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.upsilon == upsilon && r.n_levels == n_levels && r.method == method)
    }
}

// 17 significant digits, empty for NaN
fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

const HEADER: &str = "\
# nmse_b, nmse_x: mean over realizations and metric-grid samples of |truth - estimate|^2 / |truth|^2
# *_db: 10*log10 of the linear value, floored at -120; nmse_b is empty for methods without a bandwidth estimate
# excluded_samples: truth samples below 1e-3 of the per-signal RMS, left out of nmse_x
# realizations: scored test realizations; failures: realizations whose estimate or solve failed
# overflow: dataset realizations with more crossings than the padded length
";

/// Writes the metric CSV at `csv_path`, the K-bar table next to it as
/// `<stem>_kbar.csv`, and the full report as `<stem>.json`.
pub fn emit_report(report: &MetricReport, csv_path: &Path) -> Result<()> {
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::new();
    out.extend_from_slice(HEADER.as_bytes());
    writeln!(out, "{}", CSV_COLUMNS.join(","))?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(r.upsilon),
            r.n_levels,
            r.method,
            r.realizations,
            r.failures,
            r.overflow,
            r.excluded_samples,
            r.total_samples,
            num(r.nmse_b),
            num(r.nmse_b_db),
            num(r.nmse_x),
            num(r.nmse_x_db),
        )?;
    }
    fs::write(csv_path, out)?;

    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let mut kbar = Vec::new();
    writeln!(kbar, "# k_mean: mean crossing count over realizations with minimal sample count n")?;
    writeln!(kbar, "upsilon,n_levels,n,count,k_mean")?;
    for k in &report.k_bar {
        writeln!(kbar, "{},{},{},{},{}", num(k.upsilon), k.n_levels, k.n, k.count, num(k.k_mean))?;
    }
    fs::write(csv_path.with_file_name(format!("{stem}_kbar.csv")), kbar)?;

    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    fs::write(csv_path.with_file_name(format!("{stem}.json")), json)?;
    Ok(())
}
