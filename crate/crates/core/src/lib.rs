//! Single-parameter Kolmogorov–Arnold networks (SKAN).
//!
//! Each edge of a SKAN layer carries a fixed nonlinearity with one learnable
//! scalar `k`; nodes only sum. The crate provides the nine basis families,
//! layers and networks with exact analytic gradients, Adam training on MNIST,
//! parameter-budget arithmetic for B-spline KANs, and a learning-rate sweep
//! harness that writes CSV.

pub mod basis;
pub mod budget;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod layer;
pub mod metrics;
pub mod mnist;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use basis::{BasisEval, BasisId, Trainability};
pub use error::{Result, SkanError};
pub use harness::{
    lr_grid, sweep, train_once, GridSpec, Precision, RunRecord, RunStatus, SweepPlan, TrainConfig,
};
pub use layer::{Exec, LayerGradients, LayerTape, SkanLayer};
pub use metrics::{EpochMetrics, Split};
pub use mnist::Dataset;
pub use network::{total_param_count, SkanNetwork};
pub use optim::{AdamConfig, AdamState};
pub use tensor::{Matrix, Real};
