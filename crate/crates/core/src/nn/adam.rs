//! Adam with per-component gradient clipping.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, Seq2SeqModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub clip_value: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl OptimizerState {
    /// Zero moments for tensors of the given sizes, default hyperparameters.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
            learning_rate: 1e-3,
            clip_value: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }

    pub fn for_model(model: &Seq2SeqModel) -> Self {
        let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        Self::new(&sizes)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.first_moment.iter().map(|m| m.len()).collect()
    }
}

/// Clips every gradient component to `[-clip, clip]`, then applies one
/// bias-corrected Adam update to each tensor.
pub fn adam_step(opt: &mut OptimizerState, params: &mut [&mut [f64]], grads: &[&[f64]]) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), opt.first_moment.len());
    opt.step_count += 1;
    let t = opt.step_count as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    let clip = opt.clip_value;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut opt.first_moment[i];
        let v = &mut opt.second_moment[i];
        assert_eq!(p.len(), g.len());
        for k in 0..p.len() {
            let gk = g[k].clamp(-clip, clip);
            m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * gk;
            v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * gk * gk;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            p[k] -= opt.learning_rate * mh / (vh.sqrt() + opt.eps_hat);
        }
    }
}

pub fn adam_step_model(opt: &mut OptimizerState, model: &mut Seq2SeqModel, grads: &Gradients) {
    let g = grads.tensors();
    let mut p = model.tensors_mut();
    adam_step(opt, &mut p, &g);
}
