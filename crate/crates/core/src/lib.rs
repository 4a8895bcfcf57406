//! Differentially private distributed hyperparameter selection.
//!
//! Clients rank a public list of candidate hyperparameters by their local
//! loss, cast `k` unweighted votes, add a Gaussian noise share and submit
//! the ballot through a pairwise-masked secure sum. The coordinator sees
//! only the noisy aggregate and returns its argmax.
//!
//! Module map:
//!
//! - [`accountant`]: L2 sensitivity, Rényi-DP and `(epsilon, delta)`
//!   conversion, noise calibration.
//! - [`voting`]: ballots, noise shares, aggregation, winner selection.
//! - [`securesum`]: fixed-point ring codec, pairwise masks, secure sum,
//!   round transcripts.
//! - [`utility`]: vote gap, success lower bound, Monte-Carlo success rates.
//! - [`partition`]: synthetic datasets, iid and Dirichlet shards, loss
//!   oracles.
//! - [`orchestrator`]: configs, wire framing, transports, protocol rounds,
//!   experiment sweeps and reports.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod error;
pub mod orchestrator;
pub mod partition;
pub mod sampling;
pub mod securesum;
pub mod utility;
pub mod voting;

pub use accountant::{calibrate_sigma, dp_epsilon_of_sigma, l2_sensitivity, NoiseCalibration, PrivacyBudget};
pub use error::{Error, Result};
pub use voting::{HyperparameterGrid, VoteVector};
