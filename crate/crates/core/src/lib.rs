//! Hard instances, exact divergence bounds and Monte Carlo witnesses for the
//! linear-sketch lower bound on p-th frequency moments (p > 2).
//!
//! The crate is organised bottom-up:
//!
//! - [`sketch`]: measurement matrices with orthonormal rows, the small-column
//!   set `S` and the Gram identities.
//! - [`hard_instance`]: the constants `t_p`, `C`, `C1` and samplers for the
//!   base and conditioned input distributions.
//! - [`divergence`]: chi-square divergence of Gaussian location mixtures,
//!   total variation, Bayes error.
//! - [`bounds`]: the deterministic inequality chain and the measurement
//!   threshold.
//! - [`distinguish`]: likelihood-ratio test and moment estimators acting on
//!   sketches.
//! - [`experiment`] and [`verify`]: orchestration used by the `lpsketch` CLI.
//!
//! Monte Carlo loops and Gram passes run on rayon when the `parallel` feature
//! is enabled (the default). Every random draw comes from a stream keyed by
//! `(seed, purpose, index)`, so results are bit-identical with or without the
//! feature and for any thread count.

pub mod bounds;
pub mod distinguish;
pub mod divergence;
mod error;
pub mod experiment;
pub mod hard_instance;
pub mod kernel;
pub mod par;
pub mod rng;
pub mod sketch;

pub mod stats;
pub mod verify;

pub use bounds::{BoundReport, ChainSettings, Conditioning, Lemma1Check};

pub use distinguish::{Decision, MomentEstimator, Verdict};
pub use divergence::{DivergenceReport, GaussianMixture, StandardGaussian};
pub use error::{Error, Result};
pub use hard_instance::{HardInstanceParams, LabeledSample, Source};
pub use sketch::{ColumnSet, SketchMatrix};
pub use stats::Estimate;
