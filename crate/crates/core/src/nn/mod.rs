//! LSTM encoder-decoder bandwidth estimator, written from scratch.

pub mod adam;
pub mod checkpoint;
pub mod lstm;
pub mod model;
pub mod train;

pub use adam::{adam_step, adam_step_model, OptimizerState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use lstm::{lstm_cell_forward, LSTMState, LstmParams};
pub use model::{backward, forward, loss, Gradients, ModelDims, PaddedBatch, Seq2SeqModel};
pub use train::{
    estimate_bandwidth_nn, evaluate, train, Example, Normalization, TrainConfig, TrainHistory,
    TrainOutcome,
};
