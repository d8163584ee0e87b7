//! Field-aware factorization machines for response-rate prediction.
//!
//! * [`model`]: FFM and hashed logistic-regression models, AdaGrad steps, model files.
//! * [`data`]: example files, synthetic drifting streams, temporal blocks.
//! * [`trainer`]: epoch loop with early stopping, mature and pre-mature snapshots.
//! * [`ipm`]: iterative parameter mixing simulated with one thread per machine.
//! * [`warm_start`]: rolling re-training with cold, naive and pre-mature seeding.
//! * [`metrics`]: log loss, normalized log loss, Utility, bootstrap intervals.
//! * [`cli`]: the `ffm` command-line tool.

pub mod data;
pub mod cli;
pub mod error;
pub mod ipm;
pub mod metrics;
pub mod model;
pub mod trainer;
pub mod warm_start;

pub use error::{Error, Result};
pub use model::{FeatureVector, FfmModel, ModelConfig, ModelKind};
pub use trainer::{train, TrainOptions, TrainReport};
