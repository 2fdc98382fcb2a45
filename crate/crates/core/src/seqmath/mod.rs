//! Numeric core: LSTM forward pass, sigmoid head, binary cross-entropy,
//! backpropagation through time and the Adadelta update.
//!
//! Everything here is a pure function over `f64` arrays. Gate blocks are
//! stacked in the order input, forget, cell candidate, output.

mod adadelta;
mod loss;
mod lstm;
mod params;

pub use adadelta::{adadelta_step, AdadeltaConfig, AdadeltaState};
pub use loss::{bce_loss, check_label, logistic, Bce, DEFAULT_CLIP};
pub use lstm::{backward, backward_with, dense_head, lstm_forward, predict, Embedding};
pub use params::{DenseParams, Gate, GradientSet, InitConfig, LstmParams, Network};
