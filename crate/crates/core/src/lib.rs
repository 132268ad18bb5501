#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod clusters;
pub mod commands;
pub mod consensus;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
mod scalar;
pub mod solver;
pub mod view_graph;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::MultiViewDataset<f64>;
pub type Dataset32 = data::MultiViewDataset<f32>;
pub type Config = solver::SolverConfig<f64>;
pub type Config32 = solver::SolverConfig<f32>;
pub type Fit = solver::FitResult<f64>;
pub type Fit32 = solver::FitResult<f32>;
pub type Graph = consensus::ConsensusGraph<f64>;
pub type Weights = weights::ViewWeights<f64>;
