//! Local training, federated averaging and evaluation for the shared binary
//! mode-choice classifier.
//!
//! The classifier is a logistic regression over three standardized trip
//! features (duration, reliability, cost) plus a bias term. Weight layout is
//! `[duration, reliability, cost, bias]`.

mod dataset;
mod train;

pub use dataset::{
    generate_dataset, read_csv, shard_round_robin, write_csv, Dataset, DatasetConfig, Mode, Row, Shard,
    FEATURES,
};
pub use train::{aggregate, evaluate, gradient, init_model, local_train, logistic_loss, Aggregated, TrainConfig};

/// Features plus bias.
pub const MODEL_DIM: usize = FEATURES + 1;
