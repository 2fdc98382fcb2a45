//! Learning session outcomes from clickstream action sequences.
//!
//! The pipeline runs in stages that each live in their own module:
//!
//! * [`ingest`] parses event logs, groups them into sessions and encodes
//!   each session as a fixed-width feature matrix.
//! * [`seqmath`] is the numeric core: a single-layer LSTM with a sigmoid
//!   head, binary cross-entropy, backpropagation through time and Adadelta.
//! * [`train`] runs the training loop, persists models and evaluates them
//!   `k` events before the outcome.
//! * [`analyze`] partitions mispredictions, clusters them by sequence
//!   embedding and ranks the events that move the prediction the most.
//! * [`contrast`] aggregates impact events per feature value and keeps the
//!   expert tag log.
//! * [`simgen`] produces seeded synthetic sessions with planted signal.

pub mod analyze;
pub mod contrast;
mod error;
pub mod ingest;
pub mod seqmath;
pub mod simgen;
pub mod train;

pub use error::{Error, Result};
