//! Bayesian optimization with transfer learning across heterogeneous search
//! spaces.
//!
//! Source tasks and the target task may tune different parameter sets. Two
//! multi-task GP surrogates share information between them:
//!
//! * a conditional kernel that sums per-block base kernels over the blocks of
//!   parameters both inputs' tasks contain ([`space::build_partition`],
//!   [`kernels::conditional_kernel`]);
//! * an imputed model over the union of all parameters, where each task's
//!   missing parameters are filled with fixed or learned values
//!   ([`gp::UnionEmbedding`]).
//!
//! [`harness`] runs seeded benchmark experiments comparing these against
//! single-task BO, an MTGP restricted to the common parameters and random search.

pub mod acquisition;
pub mod benchmarks;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod observations;
pub mod space;

pub use observations::{Observation, ObservationSet};
