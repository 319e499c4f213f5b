use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{split_of, ExperimentConfig, Split};
use crate::error::{Error, Result};
use crate::lc::{find_crossings, CrossingSequence, LevelGrid};
use crate::nn::{Example, Normalization};
use crate::signal::{BandwidthFunction, WarpFunction};
use crate::synthesis::{realize, Realization};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub seed: u64,
    pub upsilon: f64,
    pub horizon: f64,
    #[serde(rename = "B_m")]
    pub b_m: Vec<f64>,
    pub levels: Vec<f64>,
    pub crossing_times: Vec<f64>,
    pub crossing_levels: Vec<usize>,
    pub tau_samples: Vec<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// K exceeds the padded length; the record is kept but never used.
    pub overflow: bool,
    pub split: Split,
}

impl DatasetRecord {
    pub fn bandwidth(&self) -> Result<BandwidthFunction> {
        BandwidthFunction::new(self.b_m.clone(), self.upsilon, self.horizon)
    }

    pub fn crossings(&self) -> Result<CrossingSequence> {
        CrossingSequence::new(
            self.crossing_times.clone(),
            self.crossing_levels.clone(),
            LevelGrid::new(self.levels.clone())?,
            self.horizon,
        )
    }

    /// Rebuilds the ground-truth realization.
    pub fn realization(&self) -> Result<Realization> {
        let bandwidth = self.bandwidth()?;
        let warp = WarpFunction::new(bandwidth.clone())?;
        let signal_times = warp.sample_times();
        if signal_times.len() != self.tau_samples.len() {
            return Err(Error::Data(format!(
                "record {}: warp yields {} samples but {} are stored",
                self.id,
                signal_times.len(),
                self.tau_samples.len()
            )));
        }
        Ok(Realization {
            bandwidth,
            warp,
            tau_samples: self.tau_samples.clone(),
            signal_times,
            id: self.id,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub upsilon: f64,
    pub n_levels: usize,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub count: usize,
    pub overflow: usize,
    pub n_mean: f64,
    pub k_mean: f64,
    pub split_rule: String,
    pub splits: SplitIds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

pub fn dataset_file_name(upsilon: f64, n_levels: usize) -> String {
    format!("lc_u{upsilon}_n{n_levels}.jsonl")
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Data(format!("unsupported manifest version {}", m.version)));
    }
    Ok(m)
}

fn write_manifest(dir: &Path, entry: ManifestEntry) -> Result<()> {
    let mut manifest = if dir.join(MANIFEST_FILE).exists() {
        load_manifest(dir)?
    } else {
        Manifest { version: MANIFEST_VERSION, entries: Vec::new() }
    };
    manifest.entries.retain(|e| e.file != entry.file);
    manifest.entries.push(entry);
    manifest
        .entries
        .sort_by(|a, b| a.upsilon.total_cmp(&b.upsilon).then(a.n_levels.cmp(&b.n_levels)));
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

/// Synthesizes `cfg.realizations` signals at `upsilon`, samples them with
/// `n_levels` levels and writes one JSON line per realization plus a manifest
/// entry. Realization `id` is the same signal for every level count.
pub fn generate_dataset(
    cfg: &ExperimentConfig,
    upsilon: f64,
    n_levels: usize,
    dir: &Path,
    force: bool,
) -> Result<ManifestEntry> {
    cfg.validate()?;
    let syn = cfg.synthesis(upsilon);
    syn.validate()?;
    let file = dataset_file_name(upsilon, n_levels);
    let path = dir.join(&file);
    if path.exists() && !force {
        return Err(Error::Data(format!("{} exists; pass force to overwrite", path.display())));
    }
    fs::create_dir_all(dir)?;
    let grid = LevelGrid::evenly_spaced(n_levels, cfg.amp_bound, cfg.level_placement)?;

    let records: Vec<DatasetRecord> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|id| {
            let r = realize(&syn, id)?;
            let c = find_crossings(&r, &grid);
            let k = c.len();
            Ok(DatasetRecord {
                id,
                seed: cfg.seed,
                upsilon,
                horizon: cfg.horizon,
                b_m: r.bandwidth.coeffs().to_vec(),
                levels: grid.levels().to_vec(),
                crossing_times: c.times().to_vec(),
                crossing_levels: c.level_index().to_vec(),
                tau_samples: r.tau_samples.clone(),
                n: r.sample_count(),
                k,
                overflow: k > cfg.p,
                split: split_of(id, cfg.seed, cfg.split),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = BufWriter::new(fs::File::create(&path)?);
    let mut splits = SplitIds::default();
    for rec in &records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
        match rec.split {
            Split::Train => splits.train.push(rec.id),
            Split::Val => splits.val.push(rec.id),
            Split::Test => splits.test.push(rec.id),
        }
    }
    out.flush()?;

    let count = records.len();
    let overflow = records.iter().filter(|r| r.overflow).count();
    if overflow > 0 {
        log::warn!("{file}: {overflow} of {count} realizations exceed P = {}", cfg.p);
    }
    let entry = ManifestEntry {
        file,
        upsilon,
        n_levels,
        config_hash: cfg.config_hash(),
        config: cfg.clone(),
        count,
        overflow,
        n_mean: records.iter().map(|r| r.n as f64).sum::<f64>() / count as f64,
        k_mean: records.iter().map(|r| r.k as f64).sum::<f64>() / count as f64,
        split_rule: "sha256(seed_le || id_le) top 53 bits as a fraction, thresholds at cumulative split".into(),
        splits,
    };
    write_manifest(dir, entry.clone())?;
    Ok(entry)
}

pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Normalized training pairs from the non-overflow records of one split.
pub fn load_examples(records: &[DatasetRecord], norm: &Normalization, split: Split) -> Result<Vec<Example>> {
    records
        .iter()
        .filter(|r| r.split == split && !r.overflow)
        .map(|r| Ok(Example::new(r.id, &r.crossings()?, &r.b_m, norm)))
        .collect()
}
