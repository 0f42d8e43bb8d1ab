//! Surrogate-assisted architecture search over tabular benchmarks.
//!
//! The crate is organized around a small pipeline:
//!
//! - [`arch`]: cell architectures (DAG + op labels), validation, mutation,
//!   and the encodings consumed by the predictors.
//! - [`bench`]: tabular benchmarks mapping architectures to validation and
//!   test accuracy, plus a deterministic synthetic generator.
//! - [`nn`]: small GCN and MLP regressors with hand-written gradients and a
//!   finite-difference gradient checker.
//! - [`losses`]: regression and ranking losses for training predictors,
//!   including pairwise, listwise, and weighted variants.
//! - [`metrics`]: rank-correlation and top-K retrieval metrics.
//! - [`search`]: predictor-guided evolutionary search with a piecewise loss
//!   schedule and a query budget ledger.
//! - [`cli`]: config parsing and the entry points behind the `pwlnas`
//!   binary's subcommands.
//!
//! Everything is deterministic given a seed: random state comes from
//! [`seed::rng_from_seed`] and children are derived with [`seed::derive_seed`].

pub mod arch;
pub mod bench;
pub mod cli;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod search;
pub mod seed;
