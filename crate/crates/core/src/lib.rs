//! Multi-domain MILP toolkit.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`instances`] generates seeded MILP instances from five problem families
//!    and reads/writes them in a line-oriented text format.
//! 2. [`solver`] provides an exact dense-simplex branch-and-bound, which also
//!    collects weighted solution pools used as training targets.
//! 3. [`model`], [`losses`] and [`trainer`] implement a mixture-of-experts
//!    bipartite GNN that predicts per-variable marginals and is trained with a
//!    group-level distributionally robust objective.
//! 4. [`search`] fixes confident variables and searches an L1 trust region
//!    around the prediction, and evaluates methods against best-known solutions.
//!
//! All numeric work runs on the small reverse-mode engine in [`autodiff`].

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod graph;
pub mod instances;
pub mod losses;
pub mod model;
pub mod rng;
pub mod search;
pub mod solver;
pub mod trainer;

pub use error::{Error, Result};
