//! Bidirectional LSTM encoder, repeat-vector bridge, LSTM decoder and a
//! time-distributed linear head.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{backprop, run, LstmParams};
use crate::error::{Error, Result};

/// Per-step input features: normalized time and normalized amplitude.
pub const FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub h_enc: usize,
    pub h_dec: usize,
    pub m_b: usize,
    pub p: usize,
}

impl ModelDims {
    pub fn new(h_enc: usize, m_b: usize, p: usize) -> Self {
        Self { h_enc, h_dec: 2 * h_enc, m_b, p }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_enc == 0 || self.m_b == 0 || self.p == 0 {
            return Err(Error::Config(format!("model dims must be positive: {self:?}")));
        }
        if self.h_dec != 2 * self.h_enc {
            return Err(Error::Config(format!(
                "decoder width {} must be twice the encoder width {}",
                self.h_dec, self.h_enc
            )));
        }
        Ok(())
    }
}

/// Affine map from the decoder state to one scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqModel {
    pub dims: ModelDims,
    pub encoder_fwd: LstmParams,
    pub encoder_bwd: LstmParams,
    pub decoder: LstmParams,
    pub head: DenseParams,
}

/// Gradients share the model layout.
pub type Gradients = Seq2SeqModel;

impl Seq2SeqModel {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            encoder_fwd: LstmParams::zeros(FEATURES, dims.h_enc),
            encoder_bwd: LstmParams::zeros(FEATURES, dims.h_enc),
            decoder: LstmParams::zeros(2 * dims.h_enc, dims.h_dec),
            head: DenseParams { weights: vec![0.0; dims.h_dec], bias: vec![0.0] },
        }
    }

    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let a = 1.0 / (dims.h_dec as f64).sqrt();
        Ok(Self {
            dims,
            encoder_fwd: LstmParams::init(FEATURES, dims.h_enc, rng),
            encoder_bwd: LstmParams::init(FEATURES, dims.h_enc, rng),
            decoder: LstmParams::init(2 * dims.h_enc, dims.h_dec, rng),
            head: DenseParams {
                weights: (0..dims.h_dec).map(|_| rng.random_range(-a..a)).collect(),
                bias: vec![0.0],
            },
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// All parameter tensors in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.encoder_fwd.weights,
            &self.encoder_fwd.bias,
            &self.encoder_bwd.weights,
            &self.encoder_bwd.bias,
            &self.decoder.weights,
            &self.decoder.bias,
            &self.head.weights,
            &self.head.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.encoder_fwd.weights,
            &mut self.encoder_fwd.bias,
            &mut self.encoder_bwd.weights,
            &mut self.encoder_bwd.bias,
            &mut self.decoder.weights,
            &mut self.decoder.bias,
            &mut self.head.weights,
            &mut self.head.bias,
        ]
    }

    pub fn tensor_names() -> [&'static str; 8] {
        [
            "encoder_fwd.weights",
            "encoder_fwd.bias",
            "encoder_bwd.weights",
            "encoder_bwd.bias",
            "decoder.weights",
            "decoder.bias",
            "head.weights",
            "head.bias",
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Zero-padded inputs with explicit lengths as the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    /// `[batch][P][2]`, flattened.
    pub features: Vec<f64>,
    pub lengths: Vec<usize>,
    /// `[batch][M_B]`, flattened.
    pub targets: Vec<f64>,
    pub p: usize,
    pub m_b: usize,
}

impl PaddedBatch {
    pub fn new(features: Vec<f64>, lengths: Vec<usize>, targets: Vec<f64>, p: usize, m_b: usize) -> Result<Self> {
        let n = lengths.len();
        if features.len() != n * p * FEATURES || targets.len() != n * m_b {
            return Err(Error::Config("padded batch shapes are inconsistent".into()));
        }
        if let Some(&k) = lengths.iter().find(|&&k| k > p) {
            return Err(Error::SequenceOverflow { k, p });
        }
        Ok(Self { features, lengths, targets, p, m_b })
    }

    /// Pads each `(features, targets)` pair to length `p`.
    pub fn from_items(items: &[(&[[f64; 2]], &[f64])], p: usize, m_b: usize) -> Result<Self> {
        let mut features = vec![0.0; items.len() * p * FEATURES];
        let mut targets = Vec::with_capacity(items.len() * m_b);
        let mut lengths = Vec::with_capacity(items.len());
        for (b, (feat, targ)) in items.iter().enumerate() {
            if feat.len() > p {
                return Err(Error::SequenceOverflow { k: feat.len(), p });
            }
            if targ.len() != m_b {
                return Err(Error::Config(format!("expected {m_b} targets, got {}", targ.len())));
            }
            for (k, f) in feat.iter().enumerate() {
                let at = (b * p + k) * FEATURES;
                features[at..at + FEATURES].copy_from_slice(f);
            }
            lengths.push(feat.len());
            targets.extend_from_slice(targ);
        }
        Ok(Self { features, lengths, targets, p, m_b })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// The unpadded steps of item `b`, `lengths[b] x 2`.
    pub fn steps(&self, b: usize) -> &[f64] {
        let at = b * self.p * FEATURES;
        &self.features[at..at + self.lengths[b] * FEATURES]
    }

    pub fn item_targets(&self, b: usize) -> &[f64] {
        &self.targets[b * self.m_b..(b + 1) * self.m_b]
    }
}

struct ItemPass {
    fwd: super::lstm::Tape,
    bwd: super::lstm::Tape,
    bridge: Vec<f64>,
    dec: super::lstm::Tape,
    out: Vec<f64>,
}

fn forward_item(model: &Seq2SeqModel, steps: &[f64]) -> ItemPass {
    let he = model.dims.h_enc;
    let zeros = vec![0.0; he];
    let fwd = run(&model.encoder_fwd, steps.chunks_exact(FEATURES), &zeros, &zeros);
    let bwd = run(&model.encoder_bwd, steps.chunks_exact(FEATURES).rev(), &zeros, &zeros);
    let mut bridge = Vec::with_capacity(2 * he);
    bridge.extend_from_slice(fwd.final_hidden());
    bridge.extend_from_slice(bwd.final_hidden());
    let mut c0 = Vec::with_capacity(2 * he);
    c0.extend_from_slice(fwd.final_cell());
    c0.extend_from_slice(bwd.final_cell());
    let m_b = model.dims.m_b;
    let dec = run(
        &model.decoder,
        std::iter::repeat_n(bridge.as_slice(), m_b),
        &bridge,
        &c0,
    );
    let out = (0..m_b)
        .map(|m| {
            dec.hidden(m)
                .iter()
                .zip(&model.head.weights)
                .map(|(h, w)| h * w)
                .sum::<f64>()
                + model.head.bias[0]
        })
        .collect();
    ItemPass { fwd, bwd, bridge, dec, out }
}

/// Predictions `[batch][M_B]`.
pub fn forward(model: &Seq2SeqModel, batch: &PaddedBatch) -> Vec<Vec<f64>> {
    (0..batch.len()).map(|b| forward_item(model, batch.steps(b)).out).collect()
}

/// Batch mean of per-item squared Euclidean distances.
pub fn loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / predictions.len() as f64
}

fn backward_item(model: &Seq2SeqModel, steps: &[f64], targets: &[f64], scale: f64) -> (f64, Gradients) {
    let pass = forward_item(model, steps);
    let mut g = model.zeros_like();
    let (he, hd, m_b) = (model.dims.h_enc, model.dims.h_dec, model.dims.m_b);
    let mut sq = 0.0;
    let mut dh_steps = vec![0.0; m_b * hd];
    for m in 0..m_b {
        let r = pass.out[m] - targets[m];
        sq += r * r;
        let dy = 2.0 * r * scale;
        g.head.bias[0] += dy;
        for (gw, h) in g.head.weights.iter_mut().zip(pass.dec.hidden(m)) {
            *gw += dy * h;
        }
        for (d, w) in dh_steps[m * hd..(m + 1) * hd].iter_mut().zip(&model.head.weights) {
            *d = dy * w;
        }
    }
    let mut dv = vec![0.0; 2 * he];
    let zeros = vec![0.0; hd];
    let (dh0, dc0) = backprop(
        &model.decoder,
        &pass.dec,
        &mut g.decoder,
        Some(&dh_steps),
        &zeros,
        &zeros,
        Some(&mut dv),
    );
    debug_assert_eq!(pass.bridge.len(), 2 * he);
    let dh_f: Vec<f64> = (0..he).map(|j| dv[j] + dh0[j]).collect();
    let dh_b: Vec<f64> = (0..he).map(|j| dv[he + j] + dh0[he + j]).collect();
    backprop(&model.encoder_fwd, &pass.fwd, &mut g.encoder_fwd, None, &dh_f, &dc0[..he], None);
    backprop(&model.encoder_bwd, &pass.bwd, &mut g.encoder_bwd, None, &dh_b, &dc0[he..], None);
    (sq, g)
}

/// Loss and its exact gradient with respect to every parameter. Per-item
/// gradients are summed in item order, so the result does not depend on how
/// items are scheduled.
pub fn backward(model: &Seq2SeqModel, batch: &PaddedBatch) -> (f64, Gradients) {
    let n = batch.len();
    let mut total = model.zeros_like();
    if n == 0 {
        return (0.0, total);
    }
    let scale = 1.0 / n as f64;
    let item = |b: usize| backward_item(model, batch.steps(b), batch.item_targets(b), scale);
    let parts: Vec<(f64, Gradients)> = (0..n).into_par_iter().map(item).collect();
    let mut sq = 0.0;
    for (s, g) in &parts {
        sq += s;
        total.add_assign(g);
    }
    (sq * scale, total)
}
