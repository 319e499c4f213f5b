//! Versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::OptimizerState;
use super::lstm::LstmParams;
use super::model::{DenseParams, ModelDims, Seq2SeqModel, FEATURES};
use super::train::Normalization;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Row-major tensor with its declared shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: ModelDims,
    pub tensors: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerState>,
    pub normalization: Normalization,
    pub config_hash: String,
    /// Dataset the network was trained on, when known.
    #[serde(default)]
    pub upsilon: Option<f64>,
    #[serde(default)]
    pub n_levels: Option<usize>,
}

fn shapes(d: &ModelDims) -> [Vec<usize>; 8] {
    let enc = vec![4 * d.h_enc, FEATURES + d.h_enc];
    let dec = vec![4 * d.h_dec, 2 * d.h_enc + d.h_dec];
    [
        enc.clone(),
        vec![4 * d.h_enc],
        enc,
        vec![4 * d.h_enc],
        dec,
        vec![4 * d.h_dec],
        vec![1, d.h_dec],
        vec![1],
    ]
}

impl Checkpoint {
    pub fn new(
        model: &Seq2SeqModel,
        optimizer: Option<OptimizerState>,
        normalization: Normalization,
        config_hash: impl Into<String>,
    ) -> Self {
        let tensors = Seq2SeqModel::tensor_names()
            .iter()
            .zip(model.tensors())
            .zip(shapes(&model.dims))
            .map(|((name, data), shape)| NamedTensor {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            dims: model.dims,
            tensors,
            optimizer,
            normalization,
            config_hash: config_hash.into(),
            upsilon: None,
            n_levels: None,
        }
    }

    pub fn with_dataset(mut self, upsilon: f64, n_levels: usize) -> Self {
        self.upsilon = Some(upsilon);
        self.n_levels = Some(n_levels);
        self
    }

    /// Rebuilds the model after checking every tensor against the dims.
    pub fn model(&self) -> Result<Seq2SeqModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        self.dims.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let names = Seq2SeqModel::tensor_names();
        if self.tensors.len() != names.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", names.len(), self.tensors.len())));
        }
        for ((t, name), shape) in self.tensors.iter().zip(names).zip(shapes(&self.dims)) {
            if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} with shape {:?} does not match {name} {shape:?}",
                    t.name, t.shape
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {name} has non-finite entries")));
            }
        }
        let d = self.dims;
        let data = |i: usize| self.tensors[i].data.clone();
        let lstm = |i: usize, input: usize, hidden: usize| LstmParams {
            input,
            hidden,
            weights: data(i),
            bias: data(i + 1),
        };
        let model = Seq2SeqModel {
            dims: d,
            encoder_fwd: lstm(0, FEATURES, d.h_enc),
            encoder_bwd: lstm(2, FEATURES, d.h_enc),
            decoder: lstm(4, 2 * d.h_enc, d.h_dec),
            head: DenseParams { weights: data(6), bias: data(7) },
        };
        if let Some(opt) = &self.optimizer {
            let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
            if opt.sizes() != sizes || opt.second_moment.iter().map(|m| m.len()).ne(sizes.iter().copied()) {
                return Err(Error::Checkpoint("optimizer moments do not match the model".into()));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    /// Loads and validates a checkpoint; with `expected` set, rejects
    /// checkpoints trained under different normalization constants.
    pub fn load(path: &Path, expected: Option<&Normalization>) -> Result<(Self, Seq2SeqModel)> {
        let bytes = fs::read(path)?;
        let ck: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let model = ck.model()?;
        if let Some(n) = expected {
            if *n != ck.normalization {
                return Err(Error::Checkpoint(format!(
                    "normalization mismatch: checkpoint {:?}, expected {n:?}",
                    ck.normalization
                )));
            }
        }
        Ok((ck, model))
    }
}
