//! Full pipeline: encoder, Bi-GRU context, bilinear fusion, and the
//! prediction layer, with training, checkpoints, and batch prediction.

mod checkpoint;
mod config;
mod forward;
mod params;
mod predict;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, CONFIG_KEYS};
pub use forward::{forward_file, forward_graph, FileInput, ForwardPass, GraphOutput, LineInput, LineSource};
pub use params::ParamSet;
pub use predict::{predict_release, read_predictions, write_predictions, PredictionRecord, ReportHeader, REPORT_FORMAT};
pub use train::{encode_files, pos_weight, predict_probabilities, train, EpochRecord, TrainingLog};
