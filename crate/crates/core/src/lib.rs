//! Secure STAR-RIS-assisted integrated sensing and communication: channel
//! generation, secrecy and sensing models, closed-form gradients, feasibility
//! projections and the penalty-dual-decomposition solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gradients;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod projections;
pub mod scenario;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Penalty, ReceiveBeamformers, SensingSpec, StarRisProfile, TransmitCovariances};
pub use optimizer::{run_pdd, solve_variant, Solution, SolverOptions};
pub use scenario::{ChannelSet, ScenarioConfig, SystemVariant};
