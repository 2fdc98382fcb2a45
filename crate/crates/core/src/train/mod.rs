//! Training loop, model persistence and evaluation.

mod dataset;
mod eval;
mod model_io;
mod split;
mod trainer;

pub use dataset::{build_dataset, read_dataset, write_dataset, BuildReport, Dataset, LabeledSequence, DATASET_FORMAT_VERSION};
pub use eval::{evaluate_at_k, roc_auc, scores_at_k, EvalReport};
pub use model_io::{load_model, read_model_file, save_model, write_model_file, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use split::{split_by_time, TimeSplit, Windowed};
pub use trainer::{train_model, Hyperparams, TrainedModel, TrainingMeta, TrainingRun};
