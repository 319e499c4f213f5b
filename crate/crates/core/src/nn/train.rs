//! Mini-batch training loop, feature normalization and inference.

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step_model, OptimizerState};
use super::model::{backward, forward, loss, PaddedBatch, Seq2SeqModel};
use crate::error::{Error, Result};
use crate::lc::CrossingSequence;

/// Scales mapping raw crossings and coefficients to network units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub horizon: f64,
    pub amp_bound: f64,
    pub bw_max: f64,
}

impl Normalization {
    pub fn features(&self, crossings: &CrossingSequence) -> Vec<[f64; 2]> {
        crossings
            .times()
            .iter()
            .zip(crossings.values())
            .map(|(t, v)| [(t - crossings.start()) / self.horizon, v / self.amp_bound])
            .collect()
    }

    pub fn targets(&self, coeffs: &[f64]) -> Vec<f64> {
        coeffs.iter().map(|b| b / self.bw_max).collect()
    }

    pub fn denormalize(&self, outputs: &[f64]) -> Vec<f64> {
        outputs.iter().map(|y| y * self.bw_max).collect()
    }
}

/// One normalized training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub features: Vec<[f64; 2]>,
    pub targets: Vec<f64>,
}

impl Example {
    pub fn new(id: u64, crossings: &CrossingSequence, coeffs: &[f64], norm: &Normalization) -> Self {
        Self { id, features: norm.features(crossings), targets: norm.targets(coeffs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_value: f64,
    pub h_enc: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            patience: 10,
            learning_rate: 1e-3,
            clip_value: 1.0,
            h_enc: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.h_enc == 0 {
            return Err(Error::Config("epochs, batch_size and h_enc must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_value > 0.0) {
            return Err(Error::Config("learning rate and clip value must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Coefficient-level NMSE on the validation split, dB.
    pub val_nmse_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_val_loss: f64,
    pub initial_val_nmse_db: f64,
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch beat the initial model.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub model: Seq2SeqModel,
    pub optimizer: OptimizerState,
    pub history: TrainHistory,
}

fn batch_of(items: &[&Example], p: usize, m_b: usize) -> Result<PaddedBatch> {
    let pairs: Vec<(&[[f64; 2]], &[f64])> =
        items.iter().map(|e| (e.features.as_slice(), e.targets.as_slice())).collect();
    PaddedBatch::from_items(&pairs, p, m_b)
}

/// Mean loss and coefficient NMSE (dB) of `model` over `set`.
pub fn evaluate(model: &Seq2SeqModel, set: &[Example], batch_size: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut total = 0.0;
    let mut rel = 0.0;
    let mut count = 0usize;
    for chunk in set.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = batch_of(&refs, model.dims.p, model.dims.m_b)?;
        let preds = forward(model, &batch);
        let targets: Vec<Vec<f64>> = chunk.iter().map(|e| e.targets.clone()).collect();
        total += loss(&preds, &targets) * chunk.len() as f64;
        for (p, t) in preds.iter().zip(&targets) {
            for (a, b) in p.iter().zip(t) {
                if *b != 0.0 {
                    rel += (a - b) * (a - b) / (b * b);
                    count += 1;
                }
            }
        }
    }
    let nmse = rel / count.max(1) as f64;
    Ok((total / set.len() as f64, 10.0 * nmse.max(1e-12).log10()))
}

/// Trains from `model` with Adam, keeping the parameters with the best
/// validation loss. Deterministic for a fixed seed.
pub fn train(
    mut model: Seq2SeqModel,
    optimizer: Option<OptimizerState>,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.dims.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let mut opt = optimizer.unwrap_or_else(|| OptimizerState::for_model(&model));
    if opt.sizes() != model.tensors().iter().map(|t| t.len()).collect::<Vec<_>>() {
        return Err(Error::Checkpoint("optimizer state does not match model".into()));
    }
    opt.learning_rate = cfg.learning_rate;
    opt.clip_value = cfg.clip_value;

    let monitor: &[Example] = if val_set.is_empty() { train_set } else { val_set };
    let (initial_val_loss, initial_val_nmse_db) = evaluate(&model, monitor, cfg.batch_size)?;
    let mut history = TrainHistory {
        initial_val_loss,
        initial_val_nmse_db,
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best_model = model.clone();
    let mut best_loss = initial_val_loss;
    let mut stale = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = batch_of(&items, model.dims.p, model.dims.m_b)?;
            let (l, grads) = backward(&model, &batch);
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            adam_step_model(&mut opt, &mut model, &grads);
            epoch_loss += l * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (val_loss, val_nmse_db) = evaluate(&model, monitor, cfg.batch_size)?;
        info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e} nmse {val_nmse_db:.2} dB");
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, val_nmse_db });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_model = model.clone();
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                info!("early stop after {epoch} epochs");
                break;
            }
        }
    }
    Ok(TrainOutcome { model: best_model, optimizer: opt, history })
}

/// Bandwidth coefficients in Hz predicted from a crossing sequence.
pub fn estimate_bandwidth_nn(
    model: &Seq2SeqModel,
    norm: &Normalization,
    crossings: &CrossingSequence,
) -> Result<Vec<f64>> {
    let k = crossings.len();
    if k > model.dims.p {
        return Err(Error::SequenceOverflow { k, p: model.dims.p });
    }
    let feats = norm.features(crossings);
    let zeros = vec![0.0; model.dims.m_b];
    let batch = PaddedBatch::from_items(&[(&feats, &zeros)], model.dims.p, model.dims.m_b)?;
    let out = forward(model, &batch);
    Ok(norm.denormalize(&out[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lc::LevelGrid;
    use crate::nn::model::ModelDims;

    fn norm() -> Normalization {
        Normalization { horizon: 1.0, amp_bound: 4.0, bw_max: 100.0 }
    }

    fn toy_set(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                use rand::Rng;
                let k = rng.random_range(3..8);
                let mut times: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
                times.sort_by(f64::total_cmp);
                let features: Vec<[f64; 2]> =
                    times.iter().map(|t| [*t, rng.random_range(-1.0..1.0)]).collect();
                let targets = vec![k as f64 / 10.0, 0.5];
                Example { id: i as u64, features, targets }
            })
            .collect()
    }

    #[test]
    fn normalization_round_trip() {
        let n = norm();
        let c = [5.0, 37.25, 99.9];
        let back = n.denormalize(&n.targets(&c));
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn memorizes_single_item() {
        let set = toy_set(1, 1);
        let dims = ModelDims::new(4, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Seq2SeqModel::init(dims, &mut rng).unwrap();
        let cfg = TrainConfig { epochs: 1500, batch_size: 1, patience: 1500, learning_rate: 1e-2, ..Default::default() };
        let out = train(model, None, &set, &set, &cfg).unwrap();
        assert!(out.history.best().unwrap().train_loss < 1e-3);
    }

    #[test]
    fn training_is_deterministic() {
        let set = toy_set(12, 3);
        let dims = ModelDims::new(3, 2, 8);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let model = Seq2SeqModel::init(dims, &mut rng).unwrap();
            let cfg = TrainConfig { epochs: 5, batch_size: 4, seed: 9, ..Default::default() };
            train(model, None, &set[..8], &set[8..], &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut set = toy_set(4, 5);
        set[2].targets[0] = f64::NAN;
        let dims = ModelDims::new(2, 2, 8);
        let model = Seq2SeqModel::zeros(dims);
        let cfg = TrainConfig { epochs: 2, batch_size: 1, ..Default::default() };
        let err = train(model, None, &set, &[], &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }));
    }

    #[test]
    fn estimate_checks_length() {
        let dims = ModelDims::new(2, 3, 4);
        let mut model = Seq2SeqModel::zeros(dims);
        model.head.bias[0] = 0.25;
        let grid = LevelGrid::new(vec![0.0]).unwrap();
        let ok = CrossingSequence::new(vec![0.1, 0.2], vec![0, 0], grid.clone(), 1.0).unwrap();
        assert_eq!(estimate_bandwidth_nn(&model, &norm(), &ok).unwrap(), vec![25.0; 3]);
        let long = CrossingSequence::new(vec![0.1, 0.2, 0.3, 0.4, 0.5], vec![0; 5], grid, 1.0).unwrap();
        assert!(matches!(
            estimate_bandwidth_nn(&model, &norm(), &long),
            Err(Error::SequenceOverflow { k: 5, p: 4 })
        ));
    }
}
