//! Cost-sensitive top-k and adaptive top-k(x) learning-to-defer.
//!
//! Every query can be allocated to k *entities* — class labels, a frozen
//! base predictor, and/or experts — each carrying an error penalty and a
//! consultation fee. The crate provides:
//!
//! - the unified entity/cost abstraction for the one-stage and two-stage
//!   regimes ([`entities`]);
//! - score-induced top-k selection with deterministic tie-breaking
//!   ([`selection`]);
//! - the top-k deferral loss, the comp-sum surrogate family, and the
//!   k-independent deferral surrogate whose single minimizer serves every
//!   committee size, plus the cardinality-aware loss ([`losses`]);
//! - exact cost oracles on synthetic distributions, the reject-option
//!   special case, and consistency-bound checking ([`bayes`]);
//! - small trainable scorers with hand-written backprop ([`models`]) and
//!   mini-batch trainers for the policy and the per-input committee size
//!   ([`training`]);
//! - committee decision rules and budget/accuracy evaluation
//!   ([`aggregation`]);
//! - the cascade embedding that realizes fixed-order early-exit cascades
//!   as score policies ([`cascade`]);
//! - synthetic generators with exactly representable conditionals, expert
//!   pools, and tabular ingestion ([`datasets`]);
//! - seeded property suites with counterexample reporting ([`verify`]).

pub mod aggregation;
pub mod bayes;
pub mod cascade;
pub mod datasets;
pub mod entities;
pub mod error;
pub mod losses;
pub mod models;
pub mod selection;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
