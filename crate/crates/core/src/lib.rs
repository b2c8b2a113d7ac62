//! Line-level software defect prediction with bilinear attention fusion.
//!
//! Source lines are tokenized and embedded, a bidirectional GRU adds line
//! context, and a two-head bilinear attention network fuses line and context
//! representations into a file feature. A single logistic layer predicts the
//! file's defect probability; the diagonals of the attention maps rank the
//! file's lines. Effort-aware metrics and Scott-Knott ESD ranking evaluate
//! the results.
//!
//! ```no_run
//! use bafline::corpus::{load_dataset, prepare_dataset};
//! use bafline::model::{predict_release, train, ModelConfig};
//!
//! let cfg = ModelConfig::default();
//! let (train_set, _) = prepare_dataset(&load_dataset("r1.csv")?, cfg.max_line_tokens);
//! let (val_set, _) = prepare_dataset(&load_dataset("r2.csv")?, cfg.max_line_tokens);
//! let (test_set, _) = prepare_dataset(&load_dataset("r3.csv")?, cfg.max_line_tokens);
//! let checkpoint = train(&cfg, &train_set.files, &val_set.files, None)?;
//! let predictions = predict_release(&checkpoint, &test_set.files, None)?;
//! # Ok::<(), bafline::Error>(())
//! ```

pub mod bafn;
pub mod cli;

pub mod context;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod numcore;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
