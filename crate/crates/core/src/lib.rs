//! Arbiter PUF simulation and modeling-attack lab.
//!
//! The crate is split along the lines of the experiment pipeline:
//!
//! - [`puf`]: ground-truth delay-race simulator for the classical arbiter PUF,
//!   the N-bit-response variant built from N parallel chains, and the
//!   equivalent additive linear delay model.
//! - [`features`]: challenge encodings (raw ±1 bits and the parity transform).
//! - [`attack`]: logistic regression trained by full-batch gradient descent,
//!   train/test splitting and prediction-rate evaluation.
//! - [`bits`] and [`dataset`]: fixed-width bit words, their hex codec and the
//!   `puf-crp v1` dataset format.
//! - [`metrics`]: uniformity, uniqueness, reliability and bit-aliasing.
//!
//! Every random quantity flows from a 64-bit seed through [`seed`], so any
//! experiment is reproducible from its recorded seeds.

pub mod attack;
pub mod bits;
pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod puf;
pub mod seed;

pub use attack::{AttackReport, FeatureMatrix, LrHyperParams, LrModel};
pub use bits::{BitWord, Challenge, HexError, Response};
pub use dataset::{Crp, CrpDataset, Metadata, SimulationSpec};
pub use error::{Error, Result};
pub use features::{FeatureMapKind, FeatureVector};
pub use metrics::MetricsReport;
pub use puf::{ArbiterChain, DelayParams, LinearModel, MultiBitPuf, Puf, StageDelays};
