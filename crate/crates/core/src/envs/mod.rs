//! Simulated environments.
//!
//! Consume-directly environments (`topics-*`, `latent-static`, `ml-100k`)
//! take a slate of one item and the user rates it. Choice environments
//! (`latent-score`, `beta-rank`) receive a scored slate of `L` items, the
//! simulated user picks one, and only that item's rating is observed.

mod latent;
mod sampling;
mod settings;
mod slate;
mod topics;

pub use latent::{init_latent_from_dataset, LatentEnv, LatentState};
pub use sampling::{sample_initial, sample_online_users};
pub use settings::{build_environment, dataset_mf_params, EnvKind, EnvOverrides, EnvSettings, ENVIRONMENTS};
pub use slate::{
    beta_params, choose_by_known_noise, rank_choice_probs, rank_discount, BetaRankEnv, LatentScoreEnv,
};
pub use topics::{TopicsEnv, TopicsParams};

use crate::error::Result;
use crate::rng::RngSeed;
use crate::types::{ItemId, Observation, RatingMatrix, RatingRange, UserId};

/// One user's ranked recommendations with the recommender's scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Slate {
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub scores: Vec<f64>,
}

pub trait Environment: Send {
    fn name(&self) -> &str;

    fn n_users(&self) -> usize;

    fn n_items(&self) -> usize;

    fn rating_range(&self) -> RatingRange;

    /// 1 for consume-directly environments, `L > 1` for choice environments.
    fn slate_size(&self) -> usize;

    /// Redraws latent state and the noise stream from `seed`.
    fn reset(&mut self, seed: &RngSeed) -> Result<()>;

    /// A noisy rating with user dynamics frozen (offline seeding).
    fn rate_static(&mut self, user: UserId, item: ItemId) -> f64;

    /// Consumes exactly one slate per user and returns the observed ratings.
    fn online_step(&mut self, slates: &[Slate], timestep: u32) -> Result<Vec<Observation>>;

    /// Noiseless rating under the current state.
    fn true_rating(&self, user: UserId, item: ItemId) -> f64;

    /// Dense noiseless ratings; `None` when the environment cannot expose them.
    fn true_rating_snapshot(&self) -> Option<RatingMatrix> {
        Some(RatingMatrix::from_fn(self.n_users(), self.n_items(), |u, i| {
            self.true_rating(UserId::from(u), ItemId::from(i))
        }))
    }
}
