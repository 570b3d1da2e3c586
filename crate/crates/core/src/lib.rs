//! Simulation harness for studying recommender systems in online feedback
//! loops.
//!
//! An [`envs::Environment`] holds the ground truth (user preferences, latent
//! factors, slate-choice models) and answers recommendations with ratings. A
//! [`recs::Recommender`] is fitted on the growing [`types::ObservationSet`]
//! and retrained from scratch every timestep. The [`harness`] module runs the
//! offline-tune-then-online-loop protocol and collects per-timestep metrics
//! from [`metrics`]; [`dataio`] reads configs and datasets and writes CSVs.

pub mod dataio;
pub mod envs;
pub mod error;
pub mod explore;
pub mod harness;
pub mod metrics;
pub mod recs;
pub mod rng;
pub mod tuning;
pub mod types;

pub use error::{Error, Result};
pub use rng::{RngSeed, Stream};
pub use types::{clip, ItemId, Observation, ObservationSet, RatingMatrix, RatingRange, UserId};
